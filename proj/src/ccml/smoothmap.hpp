#pragma once

#include "ccml/common.hpp"

#include <utility>

namespace ccml {

struct ChartDomain {
  Vec lower, upper;

  ChartDomain() = default;
  ChartDomain(Vec lo, Vec hi);
  static ChartDomain cube(int dim, double half_width);

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& x, double slack = 0.0) const;
  Vec center() const { return 0.5 * (lower + upper); }
};

struct Term {
  std::vector<int> exps;
  double coef = 0.0;
};

// Multivariate polynomial with terms kept in graded-lexicographic order and
// exact zero coefficients removed, so equality is canonical-form equality.
class Polynomial {
public:
  Polynomial() = default;
  explicit Polynomial(int nvars) : nvars_(nvars) {}
  Polynomial(int nvars, std::vector<Term> terms);

  static Polynomial constant(int nvars, double c);
  static Polynomial variable(int nvars, int j);

  int nvars() const { return nvars_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int degree() const;

  double eval(const Vec& x) const;
  Polynomial derivative(int j) const;

  Polynomial operator+(const Polynomial& o) const;
  Polynomial operator-(const Polynomial& o) const;
  Polynomial operator*(const Polynomial& o) const;
  Polynomial operator*(double s) const;
  Polynomial operator-() const { return *this * -1.0; }
  bool operator==(const Polynomial& o) const;

private:
  void canonicalize();

  int nvars_ = 0;
  std::vector<Term> terms_;
};

class PolyField {
public:
  PolyField() = default;
  PolyField(int dim_in, std::vector<Polynomial> entries);

  static PolyField zero(int dim_in, int dim_out);
  static PolyField constant(const Vec& c);

  int dim_in() const { return dim_in_; }
  int dim_out() const { return static_cast<int>(entries_.size()); }
  const std::vector<Polynomial>& entries() const { return entries_; }
  const Polynomial& operator[](int i) const { return entries_[i]; }
  bool is_zero() const;
  bool is_constant() const;

  Vec eval(const Vec& x) const;
  Mat jacobian(const Vec& x) const;
  PolyField derivative(int j) const;

  PolyField operator+(const PolyField& o) const;
  PolyField operator-(const PolyField& o) const;
  PolyField operator*(double s) const;
  bool operator==(const PolyField& o) const { return dim_in_ == o.dim_in_ && entries_ == o.entries_; }

private:
  int dim_in_ = 0;
  std::vector<Polynomial> entries_;
};

Vec eval(const PolyField& f, const Vec& x);
Mat jacobian(const PolyField& f, const Vec& x);

// [X,Y] = DY.X - DX.Y, computed symbolically.
PolyField lie_bracket(const PolyField& X, const PolyField& Y);

struct HullElement {
  PolyField field;
  int step = 1;
};

// Left-normed iterated brackets up to step_max. Elements equal up to sign to
// an earlier element are dropped, as are zero fields.
std::vector<HullElement> lie_hull(const std::vector<PolyField>& generators, int step_max);

}  // namespace ccml
