#pragma once

#include "ccml/smoothmap.hpp"

#include <limits>
#include <memory>
#include <optional>

namespace ccml {

inline constexpr double kRankCutoff = 1e-10;
inline constexpr double kTolRange = 1e-8;

struct FiberNorm {
  enum class Kind { Hilbert, WeightedP };
  Kind kind = Kind::Hilbert;
  // Hilbert: d*d entries, row-major. Empty means the identity.
  PolyField gram;
  // WeightedP: p in [1, inf] and d positive weights (empty means all ones).
  double p = 2.0;
  PolyField weights;

  static FiberNorm euclidean() { return {}; }
  static FiberNorm weighted_p(double p, PolyField weights = {});
  bool is_identity_gram() const { return kind == Kind::Hilbert && gram.dim_out() == 0; }
};

class GenMetricValue {
public:
  GenMetricValue() = default;
  static GenMetricValue finite(double v) { return GenMetricValue(v); }
  static GenMetricValue infinite() { return GenMetricValue(std::numeric_limits<double>::infinity()); }

  bool is_finite() const { return value_ < std::numeric_limits<double>::infinity(); }
  bool is_infinite() const { return !is_finite(); }
  // +inf for Infinite, so ordering on doubles matches Finite < Infinite.
  double value() const { return value_; }
  auto operator<=>(const GenMetricValue&) const = default;

private:
  explicit GenMetricValue(double v) : value_(v) {}
  double value_ = 0.0;
};

class SubFinslerStructure {
public:
  SubFinslerStructure(std::string name, ChartDomain domain, std::vector<PolyField> fields, FiberNorm sigma,
                      int declared_step);

  const std::string& name() const { return name_; }
  const ChartDomain& domain() const { return domain_; }
  int n() const { return n_; }
  int d() const { return d_; }
  int declared_step() const { return declared_step_; }
  const std::vector<PolyField>& fields() const { return fields_; }
  const FiberNorm& sigma() const { return sigma_; }
  bool is_sub_riemannian() const { return sigma_.kind == FiberNorm::Kind::Hilbert; }
  const std::vector<HullElement>& hull() const { return hull_; }

  // n x d matrix whose columns are X_1(x), ..., X_d(x).
  Mat psi(const Vec& x) const;
  Mat gram(const Vec& x) const;
  Vec weights(const Vec& x) const;
  double sigma_value(const Vec& x, const Vec& u) const;
  // Dual norm of sigma_x evaluated at a covector on E_x.
  double sigma_dual(const Vec& x, const Vec& g) const;

private:
  std::string name_;
  ChartDomain domain_;
  int n_, d_, declared_step_;
  std::vector<PolyField> fields_;
  FiberNorm sigma_;
  std::vector<HullElement> hull_;
};

using StructurePtr = std::shared_ptr<const SubFinslerStructure>;

struct Preimage {
  GenMetricValue value;
  Vec u;              // minimizing control (empty when Infinite)
  double residual = 0.0;
  int rank = 0;
};

Preimage min_norm_preimage(const SubFinslerStructure& S, const Vec& x, const Vec& v);
GenMetricValue horizontal_norm(const SubFinslerStructure& S, const Vec& x, const Vec& v);
int rank(const SubFinslerStructure& S, const Vec& x);
int numerical_rank(const Mat& A);
double weighted_pnorm(const Vec& u, const Vec& w, double p);
bool is_horizontal(const SubFinslerStructure& S, const Vec& x, const Vec& v, double tol = kTolRange);

struct HormanderReport {
  std::vector<Vec> points;
  std::vector<int> step;  // 0 marks Failure(step_max)
  int step_max = 0;
  bool all_pass() const;
  int max_step() const;
};

HormanderReport check_hormander(const SubFinslerStructure& S, const std::vector<Vec>& samples, int step_max);

struct LscSample {
  Vec x, v;
};

struct LscResult {
  bool pass = false;
  GenMetricValue limit_value;
  GenMetricValue liminf_estimate;
};

LscResult lsc_probe_detail(const SubFinslerStructure& S, const std::vector<LscSample>& tail, const LscSample& limit);
bool lsc_probe(const SubFinslerStructure& S, const std::vector<LscSample>& tail, const LscSample& limit);

// Projection data for D_x: orthonormal basis of range psi(x) and of its
// Euclidean complement.
struct RangeSplit {
  Mat range;       // n x r
  Mat complement;  // n x (n-r)
};
RangeSplit range_split(const Mat& A);

}  // namespace ccml
