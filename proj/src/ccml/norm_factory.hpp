#pragma once

#include "ccml/structure.hpp"

#include <memory>
#include <variant>

namespace ccml {

// A field of fiber norms F(x, .) on R^n.
class MetricField {
public:
  virtual ~MetricField() = default;
  virtual int dim() const = 0;
  virtual double value(const Vec& x, const Vec& v) const = 0;
};

class ZeroField : public MetricField {
public:
  explicit ZeroField(int dim) : dim_(dim) {}
  int dim() const override { return dim_; }
  double value(const Vec&, const Vec&) const override { return 0.0; }

private:
  int dim_;
};

using MetricFieldPtr = std::shared_ptr<const MetricField>;

class SmoothNorm {
public:
  SmoothNorm() = default;
  // support: d x M, columns are the points h of H.
  SmoothNorm(Mat support, long long power, double euclid_coef);

  int dim() const { return static_cast<int>(support_.rows()); }
  const Mat& support() const { return support_; }
  long long power() const { return power_; }
  double euclid_coef() const { return euclid_coef_; }
  SmoothNorm with_euclid(double c) const { return SmoothNorm(support_, power_, c); }

  double value(const Vec& v) const;
  double smooth_part(const Vec& v) const;
  Vec gradient(const Vec& v) const;
  Mat hessian(const Vec& v) const;
  // Hessian of value^2.
  Mat hessian_sq(const Vec& v) const;

private:
  Mat support_;
  Mat gram_;  // used when power == 2
  long long power_ = 2;
  double euclid_coef_ = 0.0;
};

class NormSpec;
using NormPtr = std::shared_ptr<const NormSpec>;

struct ExplicitP {
  double p = 2.0;
  Vec weights;
};
struct Quadratic {
  Mat G;  // symmetric positive semidefinite; norm is sqrt(v.G.v)
};
struct Extension {
  enum class Combine { Sum, Quadratic };
  Mat E;  // orthonormal basis, first k columns span V
  int k = 0;
  NormPtr base;
  double lambda_prime = 0.0;
  Combine combine = Combine::Sum;
};
struct Scaled {
  double factor = 1.0;
  NormPtr inner;
};
struct SmoothedSum {
  SmoothNorm smooth;
};
struct FieldAt {
  MetricFieldPtr field;
  Vec x;
};
struct FiberAt {
  StructurePtr S;
  Vec x;
};
struct ZeroNorm {};

class NormSpec {
public:
  using Node = std::variant<ExplicitP, Quadratic, Extension, Scaled, SmoothedSum, FieldAt, FiberAt, ZeroNorm>;

  NormSpec(int dim, Node node) : dim_(dim), node_(std::move(node)) {}
  static NormPtr make(int dim, Node node) { return std::make_shared<const NormSpec>(dim, std::move(node)); }

  int dim() const { return dim_; }
  const Node& node() const { return node_; }
  double operator()(const Vec& v) const;
  // A subgradient; finite differences where no closed form is available.
  Vec gradient(const Vec& v) const;
  // Closed-form maximum over the Euclidean unit sphere when available.
  std::optional<double> sphere_max_exact() const;
  bool is_hilbert() const;
  // Gram matrix for Hilbert-type specs.
  Mat hilbert_gram() const;

private:
  int dim_;
  Node node_;
};

NormPtr explicit_p(double p, Vec weights);
NormPtr euclidean_norm(int dim);
NormPtr quadratic_norm(Mat G);
NormPtr scaled_norm(double factor, NormPtr inner);
NormPtr smooth_norm_spec(SmoothNorm s);
NormPtr field_at(MetricFieldPtr f, Vec x);
NormPtr zero_norm(int dim);
// rho(x, .) as a norm on D_x: closed-form quadratic for Hilbert sigma.
NormPtr fiber_norm(StructurePtr S, const Vec& x);

// Maximum over the unit sphere: exact when known, else sampled with 1% inflation.
double sphere_max(const NormSpec& n, int samples = 4000);

struct WitnessError : Error {
  WitnessError(const std::string& msg, Vec witness) : Error(msg), witness(std::move(witness)) {}
  Vec witness;
};

NormPtr extend_norm(const Mat& V_basis, NormPtr base, NormPtr minorant, double lambda,
                    Extension::Combine combine = Extension::Combine::Sum);

struct SmoothApprox {
  SmoothNorm norm;
  double deviation = 0.0;
  int support_count = 0;
};

SmoothApprox smooth_norm_approx(const NormSpec& target, double tol, int validation_dirs = 10000);

struct AnchorConstants {
  double eps1 = 0, eps2 = 0, delta = 0, delta1 = 0;  // eps', eps'', delta, delta'
  double max_n1 = 0, min_n1 = 0;                       // sampled extrema of n' on the sphere
};

struct AnchorResult {
  Vec x_bar;
  double eps = 0, lambda = 0;
  SmoothNorm norm;
  double r_U = 0.0;
  AnchorConstants constants;
  double lambda_prime = 0.0;
  double closeness = 0.0;  // sampled max |n - rho(x_bar,.)| on D_x_bar
  MetricFieldPtr minorant;
};

struct AnchorOptions {
  double r_cap = 0.5;
  int max_halvings = 40;
  int ball_points = 100;
  int directions = 1000;
};

AnchorResult build_anchor_norm(StructurePtr S, const Vec& x_bar, double eps, double lambda,
                               MetricFieldPtr minorant = nullptr, const AnchorOptions& opt = {});

struct AnchorReport {
  bool item[3] = {true, true, true};
  std::string witness[3];
  bool all_pass() const { return item[0] && item[1] && item[2]; }
};

AnchorReport verify_anchor(const SubFinslerStructure& S, const AnchorResult& a, int budget = 1000);

}  // namespace ccml
