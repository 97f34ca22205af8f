#include "ccml/norm_factory.hpp"

#include "ccml/distribution.hpp"
#include "ccml/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ccml {

// ---------------------------------------------------------------- SmoothNorm

SmoothNorm::SmoothNorm(Mat support, long long power, double euclid_coef)
    : support_(std::move(support)), power_(power), euclid_coef_(euclid_coef) {
  if (power_ < 2 || power_ % 2 != 0) throw ConfigError("SmoothNorm power must be an even integer >= 2");
  if (euclid_coef_ < 0.0) throw ConfigError("SmoothNorm euclid_coef must be >= 0");
  if (power_ == 2) gram_ = support_ * support_.transpose();
}

double SmoothNorm::smooth_part(const Vec& v) const {
  if (power_ == 2) return std::sqrt(std::max(0.0, v.dot(gram_ * v)));
  const Vec a = support_.transpose() * v;
  const double t = a.cwiseAbs().maxCoeff();
  if (t == 0.0) return 0.0;
  const double pw = static_cast<double>(power_);
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double r = std::abs(a[i]) / t;
    if (r > 0.0) s += std::exp(pw * std::log(r));
  }
  return t * std::exp(std::log(s) / pw);
}

double SmoothNorm::value(const Vec& v) const {
  double e = euclid_coef_ > 0.0 ? euclid_coef_ * v.norm() : 0.0;
  return smooth_part(v) + e;
}

Vec SmoothNorm::gradient(const Vec& v) const {
  Vec g = Vec::Zero(dim());
  const double S = smooth_part(v);
  if (S > 0.0) {
    if (power_ == 2) {
      g = gram_ * v / S;
    } else {
      const Vec a = support_.transpose() * v;
      const double pw1 = static_cast<double>(power_ - 1);
      Vec wts(a.size());
      for (int i = 0; i < a.size(); ++i) {
        double r = std::abs(a[i]) / S;
        wts[i] = r > 0.0 ? std::copysign(std::exp(pw1 * std::log(r)), a[i]) : 0.0;
      }
      g = support_ * wts;
    }
  }
  double nv = v.norm();
  if (euclid_coef_ > 0.0 && nv > 0.0) g += euclid_coef_ * v / nv;
  return g;
}

Mat SmoothNorm::hessian(const Vec& v) const {
  const int d = dim();
  Mat Hm = Mat::Zero(d, d);
  const double S = smooth_part(v);
  if (S > 0.0) {
    const Vec a = support_.transpose() * v;
    const double pw = static_cast<double>(power_);
    Vec gs = Vec::Zero(d);
    for (int i = 0; i < a.size(); ++i) {
      double r = std::abs(a[i]) / S;
      if (r == 0.0) continue;
      double w2 = power_ == 2 ? 1.0 : std::exp((pw - 2.0) * std::log(r));
      Hm += w2 * support_.col(i) * support_.col(i).transpose();
      gs += std::copysign(w2 * r, a[i]) * support_.col(i);
    }
    Hm = (pw - 1.0) / S * (Hm - gs * gs.transpose());
  }
  double nv = v.norm();
  if (euclid_coef_ > 0.0 && nv > 0.0) {
    Vec u = v / nv;
    Hm += euclid_coef_ / nv * (Mat::Identity(d, d) - u * u.transpose());
  }
  return Hm;
}

Mat SmoothNorm::hessian_sq(const Vec& v) const {
  Vec g = gradient(v);
  return 2.0 * (g * g.transpose() + value(v) * hessian(v));
}

// ------------------------------------------------------------------ NormSpec

namespace {

double extension_value(const Extension& e, const Vec& v) {
  const int d = static_cast<int>(e.E.rows());
  Vec alpha = e.E.transpose() * v;
  double b = 0.0;
  if (e.k > 0) b = (*e.base)(e.E.leftCols(e.k) * alpha.head(e.k));
  double t = e.k < d ? alpha.tail(d - e.k).norm() : 0.0;
  if (e.combine == Extension::Combine::Sum) return b + e.lambda_prime * t;
  return std::sqrt(b * b + e.lambda_prime * e.lambda_prime * t * t);
}

bool needs_fd(const NormSpec& n) {
  return std::holds_alternative<FieldAt>(n.node()) || std::holds_alternative<FiberAt>(n.node());
}

Vec fd_gradient_along(const NormSpec& n, const Vec& v, const Mat& dirs) {
  const double h = 1e-6 * std::max(v.norm(), 1e-12);
  Vec g = Vec::Zero(v.size());
  for (int i = 0; i < dirs.cols(); ++i) {
    double dp = n(v + h * dirs.col(i)), dm = n(v - h * dirs.col(i));
    g += (dp - dm) / (2 * h) * dirs.col(i);
  }
  return g;
}

}  // namespace

double NormSpec::operator()(const Vec& v) const {
  require_dim(v.size(), dim_, "norm evaluation");
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ExplicitP>) {
          return weighted_pnorm(v, n.weights, n.p);
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          return std::sqrt(std::max(0.0, v.dot(n.G * v)));
        } else if constexpr (std::is_same_v<T, Extension>) {
          return extension_value(n, v);
        } else if constexpr (std::is_same_v<T, Scaled>) {
          return n.factor * (*n.inner)(v);
        } else if constexpr (std::is_same_v<T, SmoothedSum>) {
          return n.smooth.value(v);
        } else if constexpr (std::is_same_v<T, FieldAt>) {
          return n.field->value(n.x, v);
        } else if constexpr (std::is_same_v<T, FiberAt>) {
          return horizontal_norm(*n.S, n.x, v).value();
        } else {
          return 0.0;
        }
      },
      node_);
}

Vec NormSpec::gradient(const Vec& v) const {
  require_dim(v.size(), dim_, "norm gradient");
  const int d = dim_;
  return std::visit(
      [&](const auto& n) -> Vec {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ExplicitP>) {
          Vec g = Vec::Zero(d);
          if (v.isZero(0)) return g;
          if (std::isinf(n.p)) {
            int i;
            (n.weights.cwiseProduct(v)).cwiseAbs().maxCoeff(&i);
            g[i] = n.weights[i] * (v[i] > 0 ? 1.0 : -1.0);
          } else if (n.p == 1.0) {
            for (int i = 0; i < d; ++i) g[i] = v[i] == 0.0 ? 0.0 : n.weights[i] * (v[i] > 0 ? 1.0 : -1.0);
          } else {
            double nv = weighted_pnorm(v, n.weights, n.p);
            for (int i = 0; i < d; ++i) {
              double a = std::abs(n.weights[i] * v[i]) / nv;
              g[i] = a == 0.0 ? 0.0 : std::copysign(n.weights[i] * std::pow(a, n.p - 1.0), v[i]);
            }
          }
          return g;
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          double nv = std::sqrt(std::max(0.0, v.dot(n.G * v)));
          return nv > 0.0 ? Vec(n.G * v / nv) : Vec(Vec::Zero(d));
        } else if constexpr (std::is_same_v<T, Extension>) {
          Vec alpha = n.E.transpose() * v;
          Vec g = Vec::Zero(d);
          double b = 0.0;
          Vec gb = Vec::Zero(d);
          if (n.k > 0) {
            const Mat Ek = n.E.leftCols(n.k);
            Vec y = Ek * alpha.head(n.k);
            b = (*n.base)(y);
            gb = needs_fd(*n.base) ? fd_gradient_along(*n.base, y, Ek) : Vec(Ek * (Ek.transpose() * n.base->gradient(y)));
          }
          Vec tail_dir = Vec::Zero(d);
          double t = 0.0;
          if (n.k < d) {
            const Mat Et = n.E.rightCols(d - n.k);
            Vec at = alpha.tail(d - n.k);
            t = at.norm();
            if (t > 0.0) tail_dir = Et * at / t;
          }
          if (n.combine == Extension::Combine::Sum) return gb + n.lambda_prime * tail_dir;
          double val = std::sqrt(b * b + n.lambda_prime * n.lambda_prime * t * t);
          if (val == 0.0) return g;
          return (b * gb + n.lambda_prime * n.lambda_prime * t * tail_dir) / val;
        } else if constexpr (std::is_same_v<T, Scaled>) {
          return n.factor * n.inner->gradient(v);
        } else if constexpr (std::is_same_v<T, SmoothedSum>) {
          return n.smooth.gradient(v);
        } else if constexpr (std::is_same_v<T, ZeroNorm>) {
          return Vec::Zero(d);
        } else {
          return fd_gradient_along(*this, v, Mat::Identity(d, d));
        }
      },
      node_);
}

bool NormSpec::is_hilbert() const {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ExplicitP>) return n.p == 2.0;
        else if constexpr (std::is_same_v<T, Quadratic>) return true;
        else if constexpr (std::is_same_v<T, Extension>)
          return n.combine == Extension::Combine::Quadratic && (n.k == 0 || n.base->is_hilbert());
        else if constexpr (std::is_same_v<T, Scaled>) return n.inner->is_hilbert();
        else if constexpr (std::is_same_v<T, SmoothedSum>)
          return n.smooth.power() == 2 && n.smooth.euclid_coef() == 0.0;
        else if constexpr (std::is_same_v<T, ZeroNorm>) return true;
        else return false;
      },
      node_);
}

Mat NormSpec::hilbert_gram() const {
  const int d = dim_;
  return std::visit(
      [&](const auto& n) -> Mat {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ExplicitP>) {
          if (n.p != 2.0) throw Error("hilbert_gram: not a Hilbert norm");
          return n.weights.cwiseAbs2().asDiagonal();
        } else if constexpr (std::is_same_v<T, Quadratic>) {
          return n.G;
        } else if constexpr (std::is_same_v<T, Extension>) {
          if (n.combine != Extension::Combine::Quadratic) throw Error("hilbert_gram: not a Hilbert norm");
          Mat G = Mat::Zero(d, d);
          if (n.k > 0) {
            Mat Pk = n.E.leftCols(n.k) * n.E.leftCols(n.k).transpose();
            G += Pk * n.base->hilbert_gram() * Pk;
          }
          if (n.k < d) G += n.lambda_prime * n.lambda_prime * n.E.rightCols(d - n.k) * n.E.rightCols(d - n.k).transpose();
          return G;
        } else if constexpr (std::is_same_v<T, Scaled>) {
          return n.factor * n.factor * n.inner->hilbert_gram();
        } else if constexpr (std::is_same_v<T, SmoothedSum>) {
          if (n.smooth.power() != 2 || n.smooth.euclid_coef() != 0.0) throw Error("hilbert_gram: not a Hilbert norm");
          return n.smooth.support() * n.smooth.support().transpose();
        } else if constexpr (std::is_same_v<T, ZeroNorm>) {
          return Mat::Zero(d, d);
        } else {
          throw Error("hilbert_gram: not a Hilbert norm");
        }
      },
      node_);
}

std::optional<double> NormSpec::sphere_max_exact() const {
  return std::visit(
      [&](const auto& n) -> std::optional<double> {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ExplicitP>) {
          if (n.p >= 2.0) return n.weights.maxCoeff();
          // Hoelder: max over |v| = 1 of the weighted p-norm, p < 2.
          double r = 2.0 * n.p / (2.0 - n.p);
          double s = 0.0;
          for (int i = 0; i < n.weights.size(); ++i) s += std::pow(n.weights[i], r);
          return std::pow(s, 1.0 / r);
        } else if constexpr (std::is_same_v<T, Scaled>) {
          auto m = n.inner->sphere_max_exact();
          if (!m) return std::nullopt;
          return n.factor * *m;
        } else if constexpr (std::is_same_v<T, ZeroNorm>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, SmoothedSum>) {
          if (n.smooth.power() != 2) return std::nullopt;
          Eigen::SelfAdjointEigenSolver<Mat> es(n.smooth.support() * n.smooth.support().transpose());
          return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff())) + n.smooth.euclid_coef();
        } else {
          if (!is_hilbert()) return std::nullopt;
          Eigen::SelfAdjointEigenSolver<Mat> es(hilbert_gram(), Eigen::EigenvaluesOnly);
          return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
        }
      },
      node_);
}

NormPtr explicit_p(double p, Vec weights) {
  if (!(p >= 1.0)) throw ConfigError("explicit p-norm requires p >= 1");
  if (weights.size() == 0 || weights.minCoeff() <= 0.0) throw ConfigError("explicit p-norm weights must be positive");
  int d = static_cast<int>(weights.size());
  return NormSpec::make(d, ExplicitP{p, std::move(weights)});
}
NormPtr euclidean_norm(int dim) { return explicit_p(2.0, Vec::Ones(dim)); }
NormPtr quadratic_norm(Mat G) {
  int d = static_cast<int>(G.rows());
  return NormSpec::make(d, Quadratic{std::move(G)});
}
NormPtr scaled_norm(double factor, NormPtr inner) {
  int d = inner->dim();
  return NormSpec::make(d, Scaled{factor, std::move(inner)});
}
NormPtr smooth_norm_spec(SmoothNorm s) {
  int d = s.dim();
  return NormSpec::make(d, SmoothedSum{std::move(s)});
}
NormPtr field_at(MetricFieldPtr f, Vec x) {
  int d = f->dim();
  return NormSpec::make(d, FieldAt{std::move(f), std::move(x)});
}
NormPtr zero_norm(int dim) { return NormSpec::make(dim, ZeroNorm{}); }

NormPtr fiber_norm(StructurePtr S, const Vec& x) {
  if (!S->is_sub_riemannian()) {
    int n = S->n();
    return NormSpec::make(n, FiberAt{std::move(S), x});
  }
  const Mat A = S->psi(x);
  const int d = S->d();
  Mat Linv_T = Mat::Identity(d, d);
  if (!S->sigma().is_identity_gram()) {
    Eigen::LLT<Mat> llt(S->gram(x));
    Linv_T = llt.matrixU().solve(Mat::Identity(d, d));
  }
  const Mat B = A * Linv_T;
  Eigen::JacobiSVD<Mat> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const int r = numerical_rank(A);
  // Pseudoinverse restricted to the numerical range: rho(v) = |B^+ v| on D_x.
  Mat Bp = svd.matrixV().leftCols(r) * s.head(r).cwiseInverse().asDiagonal() * svd.matrixU().leftCols(r).transpose();
  return quadratic_norm(Bp.transpose() * Bp);
}

double sphere_max(const NormSpec& n, int samples) {
  if (auto m = n.sphere_max_exact()) return *m;
  double mx = 0.0;
  for (const auto& v : sphere_directions(n.dim(), samples)) mx = std::max(mx, n(v));
  return 1.01 * mx;
}

// ---------------------------------------------------------------- extension

NormPtr extend_norm(const Mat& V_basis, NormPtr base, NormPtr minorant, double lambda, Extension::Combine combine) {
  const int d = static_cast<int>(V_basis.rows());
  const int k = static_cast<int>(V_basis.cols());
  if (!(lambda > 0.0)) throw ConfigError("extend_norm: lambda must be > 0");
  require_dim(base->dim(), d, "extend_norm base");
  require_dim(minorant->dim(), d, "extend_norm minorant");
  Mat W(d, 0);
  if (k > 0) {
    std::vector<int> piv(k);
    for (int j = 0; j < k; ++j) piv[j] = j;
    W = frame_with_pivots(V_basis, piv);
  }
  for (const auto& q : sphere_directions(k, 1000)) {
    Vec v = W * q;
    if (!((*base)(v) > (*minorant)(v)))
      throw WitnessError("extend_norm: base does not exceed the minorant on V", v);
  }
  Mat E(d, d);
  if (k > 0) E.leftCols(k) = W;
  if (k < d) E.rightCols(d - k) = k > 0 ? range_split(W).complement : Mat::Identity(d, d);
  double lp = lambda + sphere_max(*minorant);
  return NormSpec::make(d, Extension{E, k, std::move(base), lp, combine});
}

// ---------------------------------------------------------------- smoothing

SmoothApprox smooth_norm_approx(const NormSpec& target, double tol, int validation_dirs) {
  if (!(tol > 0.0)) throw ConfigError("smooth_norm_approx: tol must be > 0");
  const int d = target.dim();
  SmoothApprox out;
  if (target.is_hilbert()) {
    // A quadratic norm is already smooth: power 2 with +-L columns scaled by 2^(-1/2).
    Mat G = target.hilbert_gram();
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    Mat L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    Mat H(d, 2 * d);
    H << L / std::sqrt(2.0), -L / std::sqrt(2.0);
    out.norm = SmoothNorm(H, 2, 0.0);
  } else {
    const int n_cons = d <= 1 ? 2 : (d == 2 ? 20000 : 40000);
    const auto cons = sphere_directions(d, n_cons);
    std::vector<double> tv(cons.size()), pv(cons.size(), -std::numeric_limits<double>::infinity());
    double tmax = 0.0;
    for (size_t i = 0; i < cons.size(); ++i) tmax = std::max(tmax, tv[i] = target(cons[i]));
    std::vector<Vec> H;
    auto add = [&](const Vec& h) {
      H.push_back(h);
      for (size_t i = 0; i < cons.size(); ++i) pv[i] = std::max(pv[i], h.dot(cons[i]));
    };
    for (const auto& g : sphere_directions(d, 8 * d)) add(target.gradient(g));
    for (int round = 0; round < 400; ++round) {
      std::vector<std::pair<double, size_t>> bad;
      for (size_t i = 0; i < cons.size(); ++i)
        if (tv[i] - pv[i] > tol / 4) bad.push_back({tv[i] - pv[i], i});
      if (bad.empty()) break;
      std::sort(bad.begin(), bad.end(), [](auto& a, auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
      size_t take = std::min<size_t>(bad.size(), 32);
      for (size_t j = 0; j < take; ++j) add(target.gradient(cons[bad[j].second]));
      if (H.size() > 200000) throw NumericalError("smooth_norm_approx: support-point cap reached");
    }
    const size_t half = H.size();
    for (size_t i = 0; i < half; ++i) H.push_back(-H[i]);
    Mat Hm(d, H.size());
    for (size_t i = 0; i < H.size(); ++i) Hm.col(i) = H[i];
    // Support points from inexact subgradients may overshoot the target.
    double ratio = 0.0;
    for (size_t i = 0; i < cons.size(); ++i) ratio = std::max(ratio, (Hm.transpose() * cons[i]).maxCoeff() / tv[i]);
    if (ratio > 1.0) Hm /= ratio;
    const double M = static_cast<double>(Hm.cols());
    double need = std::log(M) / std::log1p(tol / (2.0 * std::max(tmax, 1e-300)));
    long long power = static_cast<long long>(std::ceil(need));
    if (power < 2) power = 2;
    if (power % 2) ++power;
    out.norm = SmoothNorm(Hm, power, 0.0);
  }
  double dev = 0.0;
  for (const auto& v : sphere_directions(d, validation_dirs)) dev = std::max(dev, std::abs(out.norm.value(v) - target(v)));
  out.deviation = dev;
  out.support_count = static_cast<int>(out.norm.support().cols());
  if (dev > tol) {
    std::ostringstream os;
    os << "smooth_norm_approx: tolerance " << tol << " unachievable, deviation " << dev;
    throw NumericalError(os.str());
  }
  return out;
}

// ------------------------------------------------------------------- anchors

namespace {

// Sampled unit vectors in the span of the orthonormal columns of B.
std::vector<Vec> span_directions(const Mat& B, int count) {
  std::vector<Vec> out;
  for (const auto& q : sphere_directions(static_cast<int>(B.cols()), count)) out.push_back(B * q);
  return out;
}

}  // namespace

AnchorResult build_anchor_norm(StructurePtr S, const Vec& x_bar, double eps, double lambda, MetricFieldPtr minorant,
                               const AnchorOptions& opt) {
  if (!(eps > 0.0) || !(lambda >= 0.0)) throw ConfigError("build_anchor_norm: eps > 0 and lambda >= 0 required");
  if (!S->domain().contains(x_bar)) throw ConfigError("build_anchor_norm: anchor outside the chart box");
  const int n = S->n();
  if (!minorant) minorant = std::make_shared<ZeroField>(n);
  AnchorResult res;
  res.x_bar = x_bar;
  res.eps = eps;
  res.lambda = lambda;
  res.minorant = minorant;

  // Step 1: extend rho(x_bar,.) from D_x_bar with constant lambda + 1.
  const RangeSplit split = range_split(S->psi(x_bar));
  const Mat W = orthonormal_frame(*S, x_bar).w;
  const int k = static_cast<int>(W.cols());
  NormPtr base = fiber_norm(S, x_bar);
  NormPtr minor_here = field_at(minorant, x_bar);
  for (const auto& v : span_directions(W, opt.directions))
    if (!(minorant->value(x_bar, v) < horizontal_norm(*S, x_bar, v).value()))
      throw WitnessError("build_anchor_norm: minorant is not below rho at the anchor", v);
  NormPtr n1 = extend_norm(W, base, minor_here, lambda + 1.0);
  res.lambda_prime = std::get<Extension>(n1->node()).lambda_prime;

  // Step 2: eps', delta, eps''.
  const auto dirs = sphere_directions(n, std::max(opt.directions, 2000));
  const auto vdirs = span_directions(W, opt.directions);
  double gap = std::numeric_limits<double>::infinity(), mx = 0.0, mn = std::numeric_limits<double>::infinity();
  for (const auto& v : dirs) {
    double a = (*n1)(v);
    gap = std::min(gap, a - minorant->value(x_bar, v));
    mx = std::max(mx, a);
    mn = std::min(mn, a);
  }
  if (!(gap > 0.0)) throw NumericalError("build_anchor_norm: no admissible eps' (n' does not exceed the minorant)");
  AnchorConstants& c = res.constants;
  c.max_n1 = 1.01 * mx;
  c.min_n1 = mn;
  c.eps1 = 0.5 * std::min(eps, gap);
  c.delta = 0.5 * std::min(c.eps1 / c.max_n1, 1.0 / (lambda + 1.0));
  c.eps2 = 0.5 * std::min(c.eps1, c.delta * c.min_n1);
  NormPtr n2 = scaled_norm(1.0 - c.delta, n1);

  // Step 3: delta' from the strict inequalities at the anchor, then smoothing.
  double rho_min = std::numeric_limits<double>::infinity(), rho_max = 0.0;
  for (const auto& v : vdirs) {
    double r = horizontal_norm(*S, x_bar, v).value();
    rho_min = std::min(rho_min, r);
    rho_max = std::max(rho_max, r);
  }
  double gap2 = std::numeric_limits<double>::infinity();
  for (const auto& v : dirs) gap2 = std::min(gap2, (*n2)(v) - minorant->value(x_bar, v));
  double cand = std::min({(lambda + 1.0) * (1.0 - c.delta) - lambda, gap2, c.delta * rho_min, eps - c.delta * rho_max});
  if (!(cand > 0.0)) throw NumericalError("build_anchor_norm: no admissible delta'");
  c.delta1 = 0.5 * cand;
  SmoothApprox sm = smooth_norm_approx(*n2, c.delta1 / 2);
  res.norm = sm.norm.with_euclid(c.delta1 / 2);

  res.closeness = 0.0;
  for (const auto& v : vdirs)
    res.closeness = std::max(res.closeness, std::abs(res.norm.value(v) - horizontal_norm(*S, x_bar, v).value()));

  // Step 4: largest tested radius on which the sandwich and item iii) hold.
  const int k_bar = k;
  (void)split;
  for (int j = 0; j <= opt.max_halvings; ++j) {
    double r = opt.r_cap * std::ldexp(1.0, -j);
    bool ok = true;
    auto pts = ball_points(x_bar, r, opt.ball_points);
    pts.insert(pts.begin(), x_bar);
    for (const auto& x : pts) {
      if (!S->domain().contains(x)) continue;
      RangeSplit rs = range_split(S->psi(x));
      for (const auto& v : span_directions(rs.range, 64)) {
        double nv = res.norm.value(v);
        if (!(minorant->value(x, v) < nv && nv < horizontal_norm(*S, x, v).value())) {
          ok = false;
          break;
        }
      }
      if (ok && rs.range.cols() == k_bar && rs.complement.cols() > 0)
        for (const auto& v : span_directions(rs.complement, 64))
          if (res.norm.value(v) < lambda) {
            ok = false;
            break;
          }
      if (!ok) break;
    }
    if (ok) {
      res.r_U = r;
      return res;
    }
  }
  throw NumericalError("build_anchor_norm: no tested radius satisfies the neighborhood sandwich");
}

AnchorReport verify_anchor(const SubFinslerStructure& S, const AnchorResult& a, int budget) {
  AnchorReport rep;
  auto fmt = [](const Vec& x, const Vec& v) {
    std::ostringstream os;
    os << "x=(" << x.transpose() << ") v=(" << v.transpose() << ")";
    return os.str();
  };
  const int n = S.n();
  MetricFieldPtr minorant = a.minorant ? a.minorant : std::make_shared<ZeroField>(n);
  const Mat W = orthonormal_frame(S, a.x_bar).w;
  for (const auto& q : sphere_directions(static_cast<int>(W.cols()), budget + 7)) {
    Vec v = W * q;
    if (std::abs(a.norm.value(v) - horizontal_norm(S, a.x_bar, v).value()) > a.eps) {
      rep.item[0] = false;
      rep.witness[0] = fmt(a.x_bar, v);
      break;
    }
  }
  const int k_bar = static_cast<int>(W.cols());
  auto pts = ball_points(a.x_bar, a.r_U, std::max(10, budget / 10), 7919);
  for (const auto& x : pts) {
    if (!S.domain().contains(x)) continue;
    RangeSplit rs = range_split(S.psi(x));
    if (rep.item[1])
      for (const auto& q : sphere_directions(static_cast<int>(rs.range.cols()), 61)) {
        Vec v = rs.range * q;
        double nv = a.norm.value(v);
        if (!(minorant->value(x, v) < nv && nv < horizontal_norm(S, x, v).value())) {
          rep.item[1] = false;
          rep.witness[1] = fmt(x, v);
          break;
        }
      }
    if (rep.item[2] && rs.range.cols() == k_bar && rs.complement.cols() > 0)
      for (const auto& q : sphere_directions(static_cast<int>(rs.complement.cols()), 61)) {
        Vec v = rs.complement * q;
        if (a.norm.value(v) < a.lambda) {
          rep.item[2] = false;
          rep.witness[2] = fmt(x, v);
          break;
        }
      }
  }
  return rep;
}

}  // namespace ccml
