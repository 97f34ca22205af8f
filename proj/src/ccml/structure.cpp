#include "ccml/structure.hpp"

#include "ccml/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace ccml {

FiberNorm FiberNorm::weighted_p(double p, PolyField weights) {
  if (!(p >= 1.0)) throw ConfigError("weighted p-norm requires p >= 1");
  FiberNorm f;
  f.kind = Kind::WeightedP;
  f.p = p;
  f.weights = std::move(weights);
  return f;
}

SubFinslerStructure::SubFinslerStructure(std::string name, ChartDomain domain, std::vector<PolyField> fields,
                                         FiberNorm sigma, int declared_step)
    : name_(std::move(name)),
      domain_(std::move(domain)),
      n_(domain_.dim()),
      d_(static_cast<int>(fields.size())),
      declared_step_(declared_step),
      fields_(std::move(fields)),
      sigma_(std::move(sigma)) {
  if (d_ < 1) throw ConfigError("structure needs at least one horizontal field");
  if (declared_step_ < 1) throw ConfigError("declared Hormander step must be >= 1");
  for (const auto& f : fields_) {
    require_dim(f.dim_in(), n_, "horizontal field input");
    require_dim(f.dim_out(), n_, "horizontal field output");
  }
  if (sigma_.kind == FiberNorm::Kind::Hilbert && sigma_.gram.dim_out() != 0) {
    require_dim(sigma_.gram.dim_in(), n_, "gram field input");
    require_dim(sigma_.gram.dim_out(), d_ * d_, "gram field entries");
  }
  if (sigma_.kind == FiberNorm::Kind::WeightedP && sigma_.weights.dim_out() != 0) {
    require_dim(sigma_.weights.dim_in(), n_, "weight field input");
    require_dim(sigma_.weights.dim_out(), d_, "weight field entries");
  }
  hull_ = lie_hull(fields_, declared_step_);
}

Mat SubFinslerStructure::psi(const Vec& x) const {
  require_dim(x.size(), n_, "psi");
  Mat A(n_, d_);
  for (int j = 0; j < d_; ++j) A.col(j) = fields_[j].eval(x);
  return A;
}

Mat SubFinslerStructure::gram(const Vec& x) const {
  if (sigma_.kind != FiberNorm::Kind::Hilbert) throw Error("gram requested for a non-Hilbert fiber norm");
  if (sigma_.gram.dim_out() == 0) return Mat::Identity(d_, d_);
  Vec e = sigma_.gram.eval(x);
  Mat G(d_, d_);
  for (int i = 0; i < d_; ++i)
    for (int j = 0; j < d_; ++j) G(i, j) = e[i * d_ + j];
  if ((G - G.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + G.cwiseAbs().maxCoeff()))
    throw NumericalError("gram matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-10) throw NumericalError("gram matrix not positive definite");
  return G;
}

Vec SubFinslerStructure::weights(const Vec& x) const {
  if (sigma_.weights.dim_out() == 0) return Vec::Ones(d_);
  Vec w = sigma_.weights.eval(x);
  if (w.minCoeff() <= 0.0) throw NumericalError("fiber norm weights must be positive");
  return w;
}

double weighted_pnorm(const Vec& u, const Vec& w, double p) {
  if (std::isinf(p)) return (w.cwiseProduct(u)).cwiseAbs().maxCoeff();
  if (p == 1.0) return (w.cwiseProduct(u)).cwiseAbs().sum();
  if (p == 2.0) return (w.cwiseProduct(u)).norm();
  double t = (w.cwiseProduct(u)).cwiseAbs().maxCoeff();
  if (t == 0.0) return 0.0;
  double s = 0.0;
  for (int i = 0; i < u.size(); ++i) s += std::pow(std::abs(w[i] * u[i]) / t, p);
  return t * std::pow(s, 1.0 / p);
}

double SubFinslerStructure::sigma_value(const Vec& x, const Vec& u) const {
  require_dim(u.size(), d_, "sigma");
  if (sigma_.kind == FiberNorm::Kind::Hilbert) {
    if (sigma_.gram.dim_out() == 0) return u.norm();
    return std::sqrt(std::max(0.0, u.dot(gram(x) * u)));
  }
  return weighted_pnorm(u, weights(x), sigma_.p);
}

double SubFinslerStructure::sigma_dual(const Vec& x, const Vec& g) const {
  require_dim(g.size(), d_, "sigma dual");
  if (sigma_.kind == FiberNorm::Kind::Hilbert) {
    if (sigma_.gram.dim_out() == 0) return g.norm();
    return std::sqrt(std::max(0.0, g.dot(gram(x).ldlt().solve(g))));
  }
  // Dual of the weighted p-norm is the q-norm with reciprocal weights.
  double p = sigma_.p;
  double q = std::isinf(p) ? 1.0 : (p == 1.0 ? std::numeric_limits<double>::infinity() : p / (p - 1.0));
  return weighted_pnorm(g, weights(x).cwiseInverse(), q);
}

int numerical_rank(const Mat& A) {
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(A);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > kRankCutoff * s[0]) ++r;
  return r;
}

RangeSplit range_split(const Mat& A) {
  const int n = static_cast<int>(A.rows());
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullU);
  const Vec& s = svd.singularValues();
  int r = 0;
  if (s.size() > 0 && s[0] > 0.0)
    for (int i = 0; i < s.size(); ++i)
      if (s[i] > kRankCutoff * s[0]) ++r;
  return {svd.matrixU().leftCols(r), svd.matrixU().rightCols(n - r)};
}

int rank(const SubFinslerStructure& S, const Vec& x) { return numerical_rank(S.psi(x)); }

namespace {

// Minimize a convex function of one variable on [a,b] by golden section.
template <class F>
double golden_min(F&& f, double a, double b, double& fx) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && (b - a) > 1e-14 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  double x = fc <= fd ? c : d;
  fx = std::min(fc, fd);
  return x;
}

// Convex minimization of sigma(u0 + N z) over z for a weighted p-norm.
Vec pnorm_affine_min(const Vec& u0, const Mat& N, const Vec& w, double p) {
  const int m = static_cast<int>(N.cols());
  auto f = [&](const Vec& z) { return weighted_pnorm(u0 + N * z, w, p); };
  Vec z = Vec::Zero(m);
  double fz = f(z);
  if (m == 0 || fz == 0.0) return u0;
  // Minimizers satisfy |z| <= sigma(u0) / min_{|u|=1} sigma(u) since u0 is orthogonal to N.
  double radius = fz * std::sqrt(static_cast<double>(u0.size())) / w.minCoeff();
  std::vector<Vec> dirs;
  for (int k = 0; k < m; ++k) dirs.push_back(Vec::Unit(m, k));
  if (m > 1)
    for (const auto& s : sphere_directions(m, 16 * m)) dirs.push_back(s);
  for (int it = 0; it < 10000; ++it) {
    double before = fz;
    for (const auto& dvec : dirs) {
      double fl;
      double t = golden_min([&](double s) { return f(z + s * dvec); }, -2 * radius, 2 * radius, fl);
      if (fl < fz) {
        z += t * dvec;
        fz = fl;
      }
    }
    if (m == 1 || before - fz <= 1e-8 * std::max(fz, 1e-300)) return u0 + N * z;
  }
  throw NumericalError("weighted p-norm minimization did not converge within 1e4 iterations");
}

}  // namespace

Preimage min_norm_preimage(const SubFinslerStructure& S, const Vec& x, const Vec& v) {
  require_dim(v.size(), S.n(), "horizontal_norm vector");
  Preimage out;
  const Mat A = S.psi(x);
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  int r = 0;
  if (s.size() > 0 && s[0] > 0.0)
    for (int i = 0; i < s.size(); ++i)
      if (s[i] > kRankCutoff * s[0]) ++r;
  out.rank = r;
  const Mat Ur = svd.matrixU().leftCols(r);
  const Vec c = Ur.transpose() * v;
  out.residual = (v - Ur * c).norm();
  if (out.residual > kTolRange * v.norm()) {
    out.value = GenMetricValue::infinite();
    return out;
  }
  Vec u0 = svd.matrixV().leftCols(r) * c.cwiseQuotient(s.head(r));
  if (S.sigma().kind == FiberNorm::Kind::Hilbert) {
    if (S.sigma().is_identity_gram()) {
      out.u = u0;
    } else {
      // Whitened least-norm problem: sigma(u) = |L^T u| with G = L L^T.
      const Mat G = S.gram(x);
      Eigen::LLT<Mat> llt(G);
      const Mat Linv_T = llt.matrixU().solve(Mat::Identity(S.d(), S.d()));
      const Mat B = A * Linv_T;
      Eigen::JacobiSVD<Mat> sb(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Vec& sv = sb.singularValues();
      const Vec cb = sb.matrixU().leftCols(r).transpose() * v;
      Vec wv = sb.matrixV().leftCols(r) * cb.cwiseQuotient(sv.head(r));
      out.u = Linv_T * wv;
    }
  } else {
    const Mat N = svd.matrixV().rightCols(S.d() - r);
    out.u = pnorm_affine_min(u0, N, S.weights(x), S.sigma().p);
  }
  out.value = GenMetricValue::finite(S.sigma_value(x, out.u));
  return out;
}

GenMetricValue horizontal_norm(const SubFinslerStructure& S, const Vec& x, const Vec& v) {
  return min_norm_preimage(S, x, v).value;
}

bool is_horizontal(const SubFinslerStructure& S, const Vec& x, const Vec& v, double tol) {
  RangeSplit rs = range_split(S.psi(x));
  double res = (v - rs.range * (rs.range.transpose() * v)).norm();
  return res <= tol * std::max(v.norm(), 1.0);
}

bool HormanderReport::all_pass() const {
  return std::all_of(step.begin(), step.end(), [](int s) { return s > 0; });
}

int HormanderReport::max_step() const { return step.empty() ? 0 : *std::max_element(step.begin(), step.end()); }

HormanderReport check_hormander(const SubFinslerStructure& S, const std::vector<Vec>& samples, int step_max) {
  HormanderReport rep;
  rep.step_max = step_max;
  const auto hull = lie_hull(S.fields(), step_max);
  for (const auto& x : samples) {
    require_dim(x.size(), S.n(), "hormander sample");
    std::vector<Vec> cols;
    int found = 0;
    size_t next = 0;
    for (int s = 1; s <= step_max && !found; ++s) {
      while (next < hull.size() && hull[next].step <= s) cols.push_back(hull[next++].field.eval(x));
      if (static_cast<int>(cols.size()) < S.n()) continue;
      Mat M(S.n(), cols.size());
      for (size_t j = 0; j < cols.size(); ++j) M.col(j) = cols[j];
      if (numerical_rank(M) == S.n()) found = s;
    }
    rep.points.push_back(x);
    rep.step.push_back(found);
  }
  return rep;
}

LscResult lsc_probe_detail(const SubFinslerStructure& S, const std::vector<LscSample>& tail, const LscSample& limit) {
  LscResult res;
  res.limit_value = horizontal_norm(S, limit.x, limit.v);
  if (tail.empty()) {
    res.liminf_estimate = GenMetricValue::infinite();
    res.pass = true;
    return res;
  }
  const size_t start = tail.size() - std::max<size_t>(1, tail.size() / 4);
  std::vector<double> logd, logr;
  double mn = std::numeric_limits<double>::infinity();
  bool any_finite = false;
  for (size_t k = start; k < tail.size(); ++k) {
    GenMetricValue r = horizontal_norm(S, tail[k].x, tail[k].v);
    if (r.is_infinite()) continue;
    any_finite = true;
    mn = std::min(mn, r.value());
    double dist = (tail[k].x - limit.x).norm() + (tail[k].v - limit.v).norm();
    if (dist > 0.0 && r.value() > 0.0) {
      logd.push_back(std::log(dist));
      logr.push_back(std::log(r.value()));
    }
  }
  if (!any_finite) {
    res.liminf_estimate = GenMetricValue::infinite();
  } else {
    // A tail whose values grow like a negative power of the distance to the
    // limit is read as diverging, i.e. an Infinite liminf.
    bool diverging = false;
    if (logd.size() >= 3) {
      double md = 0, mr = 0;
      for (size_t i = 0; i < logd.size(); ++i) md += logd[i], mr += logr[i];
      md /= logd.size();
      mr /= logd.size();
      double sdd = 0, sdr = 0;
      for (size_t i = 0; i < logd.size(); ++i) {
        sdd += (logd[i] - md) * (logd[i] - md);
        sdr += (logd[i] - md) * (logr[i] - mr);
      }
      diverging = sdd > 1e-12 && sdr / sdd <= -0.5;
    }
    res.liminf_estimate = diverging ? GenMetricValue::infinite() : GenMetricValue::finite(mn);
  }
  if (res.liminf_estimate.is_infinite())
    res.pass = true;
  else
    res.pass = res.limit_value.is_finite() && res.limit_value.value() <= res.liminf_estimate.value() + 1e-6;
  return res;
}

bool lsc_probe(const SubFinslerStructure& S, const std::vector<LscSample>& tail, const LscSample& limit) {
  return lsc_probe_detail(S, tail, limit).pass;
}

}  // namespace ccml
