#include "ccml/smoothmap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ccml {

ChartDomain::ChartDomain(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
  require_dim(upper.size(), lower.size(), "ChartDomain upper");
  if (lower.size() == 0) throw DimensionError("ChartDomain: empty dimension");
  for (int k = 0; k < lower.size(); ++k)
    if (!(lower[k] < upper[k])) throw ConfigError("ChartDomain: lower must be < upper componentwise");
}

ChartDomain ChartDomain::cube(int dim, double half_width) {
  return ChartDomain(Vec::Constant(dim, -half_width), Vec::Constant(dim, half_width));
}

bool ChartDomain::contains(const Vec& x, double slack) const {
  if (x.size() != lower.size()) return false;
  for (int k = 0; k < x.size(); ++k)
    if (x[k] < lower[k] - slack || x[k] > upper[k] + slack) return false;
  return true;
}

namespace {

// Graded lexicographic: total degree first, then larger leading exponents first.
bool grlex_less(const std::vector<int>& a, const std::vector<int>& b) {
  int da = std::accumulate(a.begin(), a.end(), 0), db = std::accumulate(b.begin(), b.end(), 0);
  if (da != db) return da > db;
  return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

Polynomial::Polynomial(int nvars, std::vector<Term> terms) : nvars_(nvars), terms_(std::move(terms)) {
  for (const auto& t : terms_) {
    require_dim(static_cast<long>(t.exps.size()), nvars_, "polynomial term exponents");
    for (int e : t.exps)
      if (e < 0) throw ConfigError("polynomial exponents must be nonnegative");
  }
  canonicalize();
}

Polynomial Polynomial::constant(int nvars, double c) {
  return Polynomial(nvars, {Term{std::vector<int>(nvars, 0), c}});
}

Polynomial Polynomial::variable(int nvars, int j) {
  std::vector<int> e(nvars, 0);
  e[j] = 1;
  return Polynomial(nvars, {Term{e, 1.0}});
}

void Polynomial::canonicalize() {
  std::sort(terms_.begin(), terms_.end(), [](const Term& a, const Term& b) { return grlex_less(a.exps, b.exps); });
  std::vector<Term> out;
  for (auto& t : terms_) {
    if (!out.empty() && out.back().exps == t.exps)
      out.back().coef += t.coef;
    else
      out.push_back(std::move(t));
  }
  out.erase(std::remove_if(out.begin(), out.end(), [](const Term& t) { return t.coef == 0.0; }), out.end());
  terms_ = std::move(out);
}

int Polynomial::degree() const {
  int d = 0;
  for (const auto& t : terms_) d = std::max(d, std::accumulate(t.exps.begin(), t.exps.end(), 0));
  return d;
}

double Polynomial::eval(const Vec& x) const {
  require_dim(x.size(), nvars_, "polynomial eval");
  double s = 0.0;
  for (const auto& t : terms_) {
    double m = t.coef;
    for (int j = 0; j < nvars_; ++j)
      for (int e = 0; e < t.exps[j]; ++e) m *= x[j];
    s += m;
  }
  return s;
}

Polynomial Polynomial::derivative(int j) const {
  std::vector<Term> out;
  for (const auto& t : terms_) {
    if (t.exps[j] == 0) continue;
    Term d = t;
    d.coef *= t.exps[j];
    d.exps[j] -= 1;
    out.push_back(std::move(d));
  }
  return Polynomial(nvars_, std::move(out));
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
  require_dim(o.nvars_, nvars_, "polynomial sum");
  std::vector<Term> t = terms_;
  t.insert(t.end(), o.terms_.begin(), o.terms_.end());
  return Polynomial(nvars_, std::move(t));
}

Polynomial Polynomial::operator-(const Polynomial& o) const { return *this + (o * -1.0); }

Polynomial Polynomial::operator*(const Polynomial& o) const {
  require_dim(o.nvars_, nvars_, "polynomial product");
  std::vector<Term> out;
  out.reserve(terms_.size() * o.terms_.size());
  for (const auto& a : terms_)
    for (const auto& b : o.terms_) {
      Term t{a.exps, a.coef * b.coef};
      for (int j = 0; j < nvars_; ++j) t.exps[j] += b.exps[j];
      out.push_back(std::move(t));
    }
  return Polynomial(nvars_, std::move(out));
}

Polynomial Polynomial::operator*(double s) const {
  std::vector<Term> t = terms_;
  for (auto& x : t) x.coef *= s;
  return Polynomial(nvars_, std::move(t));
}

bool Polynomial::operator==(const Polynomial& o) const {
  if (nvars_ != o.nvars_ || terms_.size() != o.terms_.size()) return false;
  for (size_t i = 0; i < terms_.size(); ++i)
    if (terms_[i].exps != o.terms_[i].exps || terms_[i].coef != o.terms_[i].coef) return false;
  return true;
}

PolyField::PolyField(int dim_in, std::vector<Polynomial> entries) : dim_in_(dim_in), entries_(std::move(entries)) {
  for (const auto& p : entries_) require_dim(p.nvars(), dim_in_, "PolyField entry");
}

PolyField PolyField::zero(int dim_in, int dim_out) {
  return PolyField(dim_in, std::vector<Polynomial>(dim_out, Polynomial(dim_in)));
}

PolyField PolyField::constant(const Vec& c) {
  std::vector<Polynomial> e;
  for (int i = 0; i < c.size(); ++i) e.push_back(Polynomial::constant(0, c[i]));
  return PolyField(0, std::move(e));
}

bool PolyField::is_zero() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const Polynomial& p) { return p.is_zero(); });
}

bool PolyField::is_constant() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const Polynomial& p) { return p.degree() == 0; });
}

Vec PolyField::eval(const Vec& x) const {
  require_dim(x.size(), dim_in_, "eval");
  Vec out(dim_out());
  for (int i = 0; i < dim_out(); ++i) out[i] = entries_[i].eval(x);
  return out;
}

Mat PolyField::jacobian(const Vec& x) const {
  require_dim(x.size(), dim_in_, "jacobian");
  Mat J(dim_out(), dim_in_);
  for (int i = 0; i < dim_out(); ++i)
    for (int j = 0; j < dim_in_; ++j) J(i, j) = entries_[i].derivative(j).eval(x);
  return J;
}

PolyField PolyField::derivative(int j) const {
  std::vector<Polynomial> e;
  for (const auto& p : entries_) e.push_back(p.derivative(j));
  return PolyField(dim_in_, std::move(e));
}

PolyField PolyField::operator+(const PolyField& o) const {
  require_dim(o.dim_out(), dim_out(), "PolyField sum");
  std::vector<Polynomial> e;
  for (int i = 0; i < dim_out(); ++i) e.push_back(entries_[i] + o.entries_[i]);
  return PolyField(dim_in_, std::move(e));
}

PolyField PolyField::operator-(const PolyField& o) const { return *this + o * -1.0; }

PolyField PolyField::operator*(double s) const {
  std::vector<Polynomial> e;
  for (const auto& p : entries_) e.push_back(p * s);
  return PolyField(dim_in_, std::move(e));
}

Vec eval(const PolyField& f, const Vec& x) { return f.eval(x); }
Mat jacobian(const PolyField& f, const Vec& x) { return f.jacobian(x); }

PolyField lie_bracket(const PolyField& X, const PolyField& Y) {
  const int n = X.dim_in();
  if (X.dim_out() != n || Y.dim_in() != n || Y.dim_out() != n)
    throw DimensionError("lie_bracket: both fields must map R^n to R^n");
  std::vector<Polynomial> out;
  for (int i = 0; i < n; ++i) {
    Polynomial s(n);
    for (int j = 0; j < n; ++j) {
      s = s + Y[i].derivative(j) * X[j];
      s = s - X[i].derivative(j) * Y[j];
    }
    out.push_back(std::move(s));
  }
  return PolyField(n, std::move(out));
}

std::vector<HullElement> lie_hull(const std::vector<PolyField>& generators, int step_max) {
  if (step_max < 1) throw ConfigError("lie_hull: step_max must be >= 1");
  std::vector<HullElement> hull;
  auto known = [&](const PolyField& f) {
    for (const auto& h : hull)
      if (h.field == f || h.field == f * -1.0) return true;
    return false;
  };
  std::vector<PolyField> layer;
  for (const auto& g : generators) {
    if (!generators.empty()) require_dim(g.dim_in(), generators.front().dim_in(), "lie_hull generator");
    if (g.is_zero() || known(g)) continue;
    hull.push_back({g, 1});
    layer.push_back(g);
  }
  for (int s = 2; s <= step_max; ++s) {
    std::vector<PolyField> next;
    for (const auto& g : generators)
      for (const auto& h : layer) {
        PolyField b = lie_bracket(g, h);
        if (b.is_zero() || known(b)) continue;
        hull.push_back({b, s});
        next.push_back(std::move(b));
      }
    layer = std::move(next);
    if (layer.empty()) break;
  }
  return hull;
}

}  // namespace ccml
