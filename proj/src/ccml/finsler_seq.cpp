#include "ccml/finsler_seq.hpp"

#include "ccml/parallel.hpp"
#include "ccml/sampling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace ccml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Extreme eigenvalues of a small symmetric matrix.
std::pair<double, double> sym_extremes(const Mat& M) {
  const auto r = M.rows();
  if (r == 0) return {0.0, 0.0};
  if (r == 1) return {M(0, 0), M(0, 0)};
  if (r == 2) {
    double a = M(0, 0), b = 0.5 * (M(0, 1) + M(1, 0)), c = M(1, 1);
    double m = 0.5 * (a + c), h = std::hypot(0.5 * (a - c), b);
    return {m - h, m + h};
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return {es.eigenvalues()(0), es.eigenvalues()(r - 1)};
}

// Extremes of X + c Y without a temporary for small sizes.
std::pair<double, double> sym_extremes(const Mat& X, double c, const Mat& Y) {
  const auto r = X.rows();
  if (r == 0) return {0.0, 0.0};
  if (r == 1) return {X(0, 0) + c * Y(0, 0), X(0, 0) + c * Y(0, 0)};
  if (r == 2) {
    double a = X(0, 0) + c * Y(0, 0), d = X(1, 1) + c * Y(1, 1);
    double b = 0.5 * (X(0, 1) + X(1, 0) + c * (Y(0, 1) + Y(1, 0)));
    double m = 0.5 * (a + d), h = std::hypot(0.5 * (a - d), b);
    return {m - h, m + h};
  }
  return sym_extremes(X + c * Y);
}

std::string vec_str(const Vec& v) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (int i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ")";
  return os.str();
}

// Unit vectors from Halton points in the ball, deterministic by start index.
std::vector<Vec> unit_vectors(int dim, int count, unsigned long long start) {
  std::vector<Vec> out;
  if (dim <= 0) return out;
  for (const auto& p : ball_points(Vec::Zero(dim), 1.0, count * 2 + 8, start)) {
    if (static_cast<int>(out.size()) == count) break;
    double nrm = p.norm();
    if (nrm > 1e-3) out.push_back(p / nrm);
  }
  while (static_cast<int>(out.size()) < count) out.push_back(Vec::Unit(dim, out.size() % dim));
  return out;
}

// rho(z, W a) as a norm on the frame coordinates a.
class FrameRho : public MetricField {
public:
  FrameRho(StructurePtr S, Vec z, Mat W) : S_(std::move(S)), z_(std::move(z)), W_(std::move(W)) {
    // Injective psi: the preimage is unique, so rho is sigma of a linear map.
    Mat A = S_->psi(z_);
    if (numerical_rank(A) == A.cols()) C_ = A.completeOrthogonalDecomposition().solve(W_);
  }
  int dim() const override { return static_cast<int>(W_.cols()); }
  double value(const Vec&, const Vec& a) const override {
    if (C_.size() > 0) return S_->sigma_value(z_, C_ * a);
    GenMetricValue r = horizontal_norm(*S_, z_, W_ * a);
    if (r.is_infinite()) throw NumericalError("anchor frame vector is not horizontal");
    return r.value();
  }

private:
  StructurePtr S_;
  Vec z_;
  Mat W_, C_;
};

class LevelField : public MetricField {
public:
  LevelField(SequencePtr seq, int level) : seq_(std::move(seq)), level_(level) {}
  int dim() const override { return seq_->structure().n(); }
  double value(const Vec& x, const Vec& v) const override { return seq_->value(level_, x, v); }

private:
  SequencePtr seq_;
  int level_;
};

// Data at one sample point: rank, range basis, complement, and the factor Lm
// with rho(x, Ur Lm b) = |b| for Hilbert fibers.
struct PointData {
  Vec x;
  int r = 0;
  Mat A, Ur, Nx, Lm;
};

PointData point_data(const SubFinslerStructure& S, const Vec& x) {
  PointData pd;
  pd.x = x;
  pd.A = S.psi(x);
  const int n = S.n();
  Eigen::JacobiSVD<Mat> svd(pd.A, Eigen::ComputeFullU);
  const Vec& s = svd.singularValues();
  int r = 0;
  if (s.size() > 0 && s[0] > 0.0)
    for (int i = 0; i < s.size(); ++i)
      if (s[i] > kRankCutoff * s[0]) ++r;
  pd.r = r;
  pd.Ur = svd.matrixU().leftCols(r);
  pd.Nx = svd.matrixU().rightCols(n - r);
  if (S.is_sub_riemannian() && r > 0) {
    if (S.sigma().is_identity_gram()) {
      pd.Lm = s.head(r).asDiagonal();
    } else {
      const Mat G = S.gram(x);
      const Mat AU = pd.A.transpose() * pd.Ur;
      Mat M = AU.transpose() * G.ldlt().solve(AU);
      pd.Lm = Eigen::LLT<Mat>(0.5 * (M + M.transpose())).matrixL();
    }
  }
  return pd;
}

void grid_axis_positions(double lo, double hi, double blo, double bhi, double out[3]) {
  double a = std::max(lo, blo), b = std::min(hi, bhi);
  out[0] = a;
  out[1] = 0.5 * (lo + hi);
  if (out[1] < a) out[1] = a;
  if (out[1] > b) out[1] = b;
  out[2] = b;
}

// 3^n grid for n <= 4, otherwise corners plus center. Entry order: axis 0 fastest.
std::vector<Vec> cell_samples(const Vec& lo, const Vec& hi, const Vec& blo, const Vec& bhi) {
  const int n = static_cast<int>(lo.size());
  std::vector<std::array<double, 3>> pos(n);
  for (int a = 0; a < n; ++a) grid_axis_positions(lo[a], hi[a], blo[a], bhi[a], pos[a].data());
  std::vector<Vec> out;
  if (n <= 4) {
    int total = 1;
    for (int a = 0; a < n; ++a) total *= 3;
    for (int idx = 0; idx < total; ++idx) {
      Vec x(n);
      int t = idx;
      for (int a = 0; a < n; ++a, t /= 3) x[a] = pos[a][t % 3];
      out.push_back(x);
    }
  } else {
    Vec c(n);
    for (int a = 0; a < n; ++a) c[a] = pos[a][1];
    out.push_back(c);
    for (int m = 0; m < (1 << n); ++m) {
      Vec x(n);
      for (int a = 0; a < n; ++a) x[a] = pos[a][(m >> a) & 1 ? 2 : 0];
      out.push_back(x);
    }
  }
  return out;
}

std::vector<Vec> anchor_candidates(const CoverCell& c) {
  const int n = static_cast<int>(c.lo.size());
  const double f[3] = {0.02, 0.5, 0.98};
  std::vector<Vec> out;
  Vec center = 0.5 * (c.core_lo + c.core_hi);
  out.push_back(center);
  if (n <= 4) {
    int total = 1;
    for (int a = 0; a < n; ++a) total *= 3;
    for (int idx = 0; idx < total; ++idx) {
      Vec x(n);
      int t = idx;
      bool is_center = true;
      for (int a = 0; a < n; ++a, t /= 3) {
        x[a] = c.core_lo[a] + f[t % 3] * (c.core_hi[a] - c.core_lo[a]);
        if (t % 3 != 1) is_center = false;
      }
      if (!is_center) out.push_back(x);
    }
  } else {
    for (int m = 0; m < (1 << n); ++m) {
      Vec x(n);
      for (int a = 0; a < n; ++a) x[a] = c.core_lo[a] + f[(m >> a) & 1 ? 2 : 0] * (c.core_hi[a] - c.core_lo[a]);
      out.push_back(x);
    }
  }
  return out;
}

bool meets(const Vec& lo1, const Vec& hi1, const Vec& lo2, const Vec& hi2) {
  for (int i = 0; i < lo1.size(); ++i)
    if (lo1[i] > hi2[i] || hi1[i] < lo2[i]) return false;
  return true;
}

}  // namespace

// ------------------------------------------------------------------ bumps

bool CoverCell::contains(const Vec& x) const {
  for (int i = 0; i < x.size(); ++i)
    if (!(x[i] > lo[i] && x[i] < hi[i])) return false;
  return true;
}

bool CoverCell::closure_contains(const Vec& x) const {
  for (int i = 0; i < x.size(); ++i)
    if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
  return true;
}

double plateau(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

double raw_bump(const CoverCell& c, const Vec& x) {
  double p = 1.0;
  for (int i = 0; i < x.size(); ++i) {
    double d = std::min(x[i] - c.lo[i], c.hi[i] - x[i]);
    if (d <= 0.0) return 0.0;
    double m = c.core_lo[i] - c.lo[i];
    p *= plateau(d / (2.0 * m));
  }
  return p;
}

double hole_factor(const Vec& z, double r, const Vec& x) {
  double h = 0.5 * r;
  return plateau(((x - z).norm() - h) / h);
}

double hole_radius(const CoverCell& c) {
  double d = kInf;
  for (int i = 0; i < c.z.size(); ++i) d = std::min({d, c.z[i] - c.core_lo[i], c.core_hi[i] - c.z[i]});
  if (!(d > 0.0)) throw NumericalError("anchor " + vec_str(c.z) + " is not inside its cell core");
  return 0.45 * d;
}

PartitionOfUnity::PartitionOfUnity(std::vector<CoverCell> cells) : cells_(std::move(cells)) {
  if (cells_.empty()) throw ConfigError("partition_of_unity: empty cover");
  for (const auto& c : cells_) {
    for (int i = 0; i < c.lo.size(); ++i)
      if (!(c.lo[i] < c.core_lo[i] && c.core_lo[i] < c.core_hi[i] && c.core_hi[i] < c.hi[i]))
        throw ConfigError("partition_of_unity: each core must lie strictly inside its open set");
    radius_.push_back(hole_radius(c));
  }
  holes_.resize(cells_.size());
  for (size_t i = 0; i < cells_.size(); ++i)
    for (size_t l = 0; l < cells_.size(); ++l)
      if (l != i && cells_[i].closure_contains(cells_[l].z)) holes_[i].push_back(static_cast<int>(l));
}

std::vector<std::pair<int, double>> PartitionOfUnity::weights(const Vec& x) const {
  std::vector<std::pair<int, double>> out;
  double sum = 0.0;
  for (size_t i = 0; i < cells_.size(); ++i) {
    double p = raw_bump(cells_[i], x);
    for (int l : holes_[i]) {
      if (p == 0.0) break;
      p *= hole_factor(cells_[l].z, radius_[l], x);
    }
    if (p > 0.0) {
      out.push_back({static_cast<int>(i), p});
      sum += p;
    }
  }
  if (!(sum > 0.0)) throw NumericalError("partition_of_unity: point " + vec_str(x) + " is not covered");
  for (auto& w : out) w.second /= sum;
  return out;
}

double PartitionOfUnity::phi(int i, const Vec& x) const {
  for (const auto& w : weights(x))
    if (w.first == i) return w.second;
  return 0.0;
}

PartitionOfUnity partition_of_unity(std::vector<CoverCell> cells) { return PartitionOfUnity(std::move(cells)); }

// ------------------------------------------------------------- cell norms

double CellNorm::base_sq(const Vec& v) const {
  if (k == 0) return 0.0;
  if (quadratic) return std::max(0.0, v.dot(A * v));
  double b = smooth_scale * smooth.value(W.transpose() * v);
  return b * b;
}

double CellNorm::value_parts(int level, double bsq, double tsq) const {
  if (level == 0) return 0.0;
  double lp = lambda_prime[level];
  return (1.0 - delta[level]) * std::sqrt(bsq + lp * lp * tsq);
}

double CellNorm::value(int level, const Vec& v) const {
  if (level == 0) return 0.0;
  return value_parts(level, base_sq(v), transverse_sq(v));
}

Mat CellNorm::gram(int level) const {
  if (!quadratic) throw Error("cell norm is not quadratic");
  if (level == 0) return Mat::Zero(n, n);
  double s = 1.0 - delta[level], lp = lambda_prime[level];
  return s * s * (A + lp * lp * B);
}

Mat CellNorm::majorant(int level) const {
  if (quadratic) return gram(level);
  double s = 1.0 - delta[level], lp = lambda_prime[level];
  return s * s * (base_max * base_max * W * W.transpose() + lp * lp * B);
}

// --------------------------------------------------------------- sequence

FinslerSequence::FinslerSequence(StructurePtr S, SequenceParams p) : S_(std::move(S)), p_(std::move(p)) {
  if (!S_) throw ConfigError("sequence needs a structure");
  if (p_.levels < 1) throw ConfigError("sequence levels must be >= 1");
  if (!(p_.eps_scale > 0.0)) throw ConfigError("eps_scale must be > 0");
  if (!(p_.lambda_scale >= 0.0)) throw ConfigError("lambda_scale must be >= 0");
  if (!(p_.overlap > 0.0 && p_.overlap < 1.0)) throw ConfigError("overlap must lie in (0,1)");
  if (!(p_.shrink > 0.0 && p_.shrink < 1.0)) throw ConfigError("shrink must lie in (0,1)");
  if (!(p_.check_margin >= 0.0 && p_.check_margin <= 1.0)) throw ConfigError("check_margin must lie in [0,1]");
  if (!(p_.hausdorff_margin > 0.0 && p_.hausdorff_margin <= 1.0)) throw ConfigError("hausdorff_margin must lie in (0,1]");
  if (p_.max_depth < 0) throw ConfigError("max_depth must be >= 0");
  box_ = p_.box ? *p_.box : S_->domain();
  const int n = S_->n();
  require_dim(box_.dim(), n, "working box");
  for (int i = 0; i < n; ++i) {
    if (!(box_.lower[i] < box_.upper[i])) throw ConfigError("working box must have positive extent");
    if (box_.lower[i] < S_->domain().lower[i] - 1e-12 || box_.upper[i] > S_->domain().upper[i] + 1e-12)
      throw ConfigError("working box must lie inside the structure box");
  }
  // Diameter of U is sqrt(n) * (1 + overlap) * side; keep it below 1/N.
  const double side = (1.0 - 1e-9) / (p_.levels * (1.0 + p_.overlap) * std::sqrt(static_cast<double>(n)));
  counts_.resize(n);
  step_.resize(n);
  for (int i = 0; i < n; ++i) {
    int m = static_cast<int>(std::ceil((box_.upper[i] - box_.lower[i]) / side));
    if (m < 1) m = 1;
    if (m % 2 == 0) ++m;  // odd counts centre a cell on the box midplane
    counts_[i] = m;
    step_[i] = (box_.upper[i] - box_.lower[i]) / m;
  }
}

const CoverNode& FinslerSequence::root(long idx) const {
  std::lock_guard<std::mutex> lk(roots_mu_);
  auto it = roots_.find(idx);
  if (it != roots_.end()) return *it->second;
  const int n = S_->n();
  auto nd = std::make_unique<CoverNode>();
  CoverCell& c = nd->cell_;
  c.lo.resize(n);
  c.hi.resize(n);
  c.core_lo.resize(n);
  c.core_hi.resize(n);
  long t = idx;
  for (int a = 0; a < n; ++a) {
    int i = static_cast<int>(t % counts_[a]);
    t /= counts_[a];
    c.core_lo[a] = box_.lower[a] + i * step_[a];
    c.core_hi[a] = i + 1 == counts_[a] ? box_.upper[a] : box_.lower[a] + (i + 1) * step_[a];
    double m = 0.5 * p_.overlap * step_[a];
    c.lo[a] = c.core_lo[a] - m;
    c.hi[a] = c.core_hi[a] + m;
  }
  c.depth = 0;
  nd->path_ = {static_cast<int>(idx)};
  auto& ref = *nd;
  roots_.emplace(idx, std::move(nd));
  return ref;
}

std::vector<long> FinslerSequence::roots_meeting(const Vec& lo, const Vec& hi) const {
  const int n = S_->n();
  std::vector<int> first(n), last(n);
  for (int a = 0; a < n; ++a) {
    double m = 0.5 * p_.overlap * step_[a];
    first[a] = std::max(0, static_cast<int>(std::floor((lo[a] - box_.lower[a] - m) / step_[a])) - 1);
    last[a] = std::min(counts_[a] - 1, static_cast<int>(std::floor((hi[a] - box_.lower[a] + m) / step_[a])) + 1);
    if (first[a] > last[a]) return {};
  }
  std::vector<long> out;
  std::vector<int> k = first;
  for (;;) {
    bool ok = true;
    long idx = 0, mul = 1;
    for (int a = 0; a < n; ++a) {
      double m = 0.5 * p_.overlap * step_[a];
      double clo = box_.lower[a] + k[a] * step_[a] - m;
      double chi = (k[a] + 1 == counts_[a] ? box_.upper[a] : box_.lower[a] + (k[a] + 1) * step_[a]) + m;
      if (clo > hi[a] || chi < lo[a]) ok = false;
      idx += k[a] * mul;
      mul *= counts_[a];
    }
    if (ok) out.push_back(idx);
    // Highest axis slowest so indices come out in increasing order.
    int a = 0;
    while (a < n && ++k[a] > last[a]) k[a] = first[a], ++a;
    if (a == n) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

void FinslerSequence::resolve(const CoverNode& nd) const {
  std::call_once(nd.resolved_, [&] { resolve_impl(nd); });
}

std::unique_ptr<CellNorm> FinslerSequence::make_norm(const Vec& z) const {
  const auto& S = *S_;
  const int n = S.n(), N = p_.levels;
  auto cn = std::make_unique<CellNorm>();
  cn->n = n;
  PointData pd = point_data(S, z);
  const int k = pd.r;
  cn->k = k;
  if (k > 0) {
    Frame f = orthonormal_frame(pd.A);
    if (static_cast<int>(f.pivots.size()) != k) throw NumericalError("anchor frame rank mismatch at " + vec_str(z));
    cn->pivots = f.pivots;
    cn->W = f.w;
  } else {
    cn->W = Mat(n, 0);
  }
  cn->N = pd.Nx;
  cn->B = pd.Nx * pd.Nx.transpose();
  if (S.is_sub_riemannian()) {
    cn->quadratic = true;
    if (k > 0) {
      // rho(z, Ur a)^2 = a^T (Lm Lm^T)^{-1} a.
      Mat Linv = pd.Lm.triangularView<Eigen::Lower>().solve(Mat::Identity(k, k));
      Mat P = pd.Ur * Linv.transpose();
      cn->A = P * P.transpose();
      Mat M = pd.Lm * pd.Lm.transpose();
      cn->rho_max = 1.0 / std::sqrt(sym_extremes(M).first);
    } else {
      cn->A = Mat::Zero(n, n);
    }
    cn->base_max = cn->rho_max;
  } else {
    cn->quadratic = false;
    cn->A = Mat::Zero(n, n);
    if (k > 0) {
      auto field = std::make_shared<FrameRho>(S_, z, cn->W);
      NormPtr target = field_at(field, Vec::Zero(k));
      double bmax = 0.0, bmin = kInf;
      for (const auto& a : sphere_directions(k, k == 1 ? 2 : 512)) {
        double b = (*target)(a);
        bmax = std::max(bmax, b);
        bmin = std::min(bmin, b);
      }
      cn->rho_max = k == 1 ? bmax : 1.01 * bmax;
      double tol = 0.25 * eps(N) * bmin / cn->rho_max;
      SmoothApprox sm = smooth_norm_approx(*target, tol, 1000);
      cn->smooth = sm.norm;
      cn->smooth_scale = 1.0 - tol / bmin;
      cn->base_max = cn->smooth_scale * (cn->rho_max + tol);
    }
  }
  cn->delta.assign(N + 1, 0.0);
  cn->lambda_prime.assign(N + 1, 0.0);
  for (int l = 1; l <= N; ++l) {
    double bound = 1.0 / (lambda(l) + 1.0);
    if (cn->rho_max > 0.0) bound = std::min(bound, eps(l) / cn->rho_max);
    cn->delta[l] = p_.shrink * bound;
    cn->lambda_prime[l] = lambda_prime(l);
  }
  return cn;
}

void FinslerSequence::resolve_impl(const CoverNode& nd) const {
  const auto& S = *S_;
  const int n = S.n(), N = p_.levels;
  CoverCell& c = nd.cell_;
  const auto pts = cell_samples(c.lo, c.hi, box_.lower, box_.upper);
  std::vector<PointData> pd;
  pd.reserve(pts.size());
  for (const auto& x : pts) pd.push_back(point_data(S, x));
  int min_rank = n + 1;
  for (const auto& d : pd) min_rank = std::min(min_rank, d.r);

  // Anchor: minimal-rank candidate in the core, closest to its centre.
  const auto cands = anchor_candidates(c);
  const Vec center = 0.5 * (c.core_lo + c.core_hi);
  int best = -1, best_rank = n + 1;
  double best_dist = kInf;
  for (size_t i = 0; i < cands.size(); ++i) {
    int r = rank(S, cands[i]);
    min_rank = std::min(min_rank, r);
    double dist = (cands[i] - center).norm();
    if (r < best_rank || (r == best_rank && dist < best_dist)) {
      best = static_cast<int>(i);
      best_rank = r;
      best_dist = dist;
    }
  }
  c.z = cands[best];
  c.min_rank = min_rank;
  CellStatus st;
  st.rank_ok = best_rank == min_rank;

  std::unique_ptr<CellNorm> cn = make_norm(c.z);
  const int k = cn->k;
  const double mg = p_.check_margin;
  std::vector<double> viol(pts.size(), 0.0);
  for (size_t i = 0; i < pts.size(); ++i) {
    const PointData& d = pd[i];
    double up = 0.0, tr = 0.0, hd = 0.0;
    // Upper sandwich on D_x.
    if (d.r > 0) {
      if (cn->quadratic) {
        Mat P = d.Ur * d.Lm;
        Mat At = P.transpose() * cn->A * P, Bt = P.transpose() * cn->B * P;
        for (int l = 1; l <= N; ++l) {
          double s = 1.0 - cn->delta[l], lp = cn->lambda_prime[l];
          double tau = 1.0 - mg * (1.0 - s * s);
          up = std::max(up, s * s * sym_extremes(At, lp * lp, Bt).second / tau);
        }
      } else {
        for (const auto& q : sphere_directions(d.r, 16)) {
          Vec v = d.Ur * q;
          double rho = horizontal_norm(S, d.x, v).value();
          double bsq = cn->base_sq(v), tsq = cn->transverse_sq(v);
          for (int l = 1; l <= N; ++l) up = std::max(up, cn->value_parts(l, bsq, tsq) / ((1.0 - mg * cn->delta[l]) * rho));
        }
      }
    }
    // Transverse lower bound and frame closeness on the equal-rank set.
    if (d.r == k) {
      if (k < n) {
        Mat Ct = d.Nx.transpose() * cn->A * d.Nx, Dt = d.Nx.transpose() * cn->B * d.Nx;
        for (int l = 1; l <= N; ++l) {
          double lam = lambda(l);
          double s = 1.0 - cn->delta[l], lp = cn->lambda_prime[l];
          double slack = (s * lp) * (s * lp) / (lam * lam) - 1.0;
          if (!(lam > 0.0) || !(slack > 0.0)) continue;
          if (cn->quadratic) {
            double need = lam * lam * (1.0 + mg * slack);
            double have = s * s * sym_extremes(Ct, lp * lp, Dt).first;
            tr = std::max(tr, have > 0.0 ? need / have : kInf);
          } else {
            double need = lam * (1.0 + mg * (s * lp / lam - 1.0));
            for (const auto& q : sphere_directions(n - k, 16)) {
              double have = cn->value(l, d.Nx * q);
              tr = std::max(tr, have > 0.0 ? need / have : kInf);
            }
          }
        }
      }
      if (k > 0) {
        Mat Wx;
        bool ok = true;
        try {
          Wx = frame_with_pivots(d.A, cn->pivots);
        } catch (const NumericalError&) {
          ok = false;
        }
        if (!ok) {
          hd = kInf;
        } else {
          Mat D = Wx - cn->W;
          double sd = std::sqrt(std::max(0.0, sym_extremes(D.transpose() * D).second));
          // majorant = (1-delta)^2 (base + lambda'^2 B) with a level-independent base.
          Mat WD = cn->W.transpose() * D;
          Mat DA = cn->quadratic ? Mat(D.transpose() * cn->A * D) : Mat(cn->base_max * cn->base_max * WD.transpose() * WD);
          Mat ND = cn->N.transpose() * D;
          Mat DB = ND.transpose() * ND;
          for (int l = 1; l <= N; ++l) {
            double s = 1.0 - cn->delta[l], lp = cn->lambda_prime[l];
            double bound = s * std::sqrt(std::max(0.0, sym_extremes(DA, lp * lp, DB).second)) + sd;
            hd = std::max(hd, bound * l / p_.hausdorff_margin);
          }
        }
      }
    }
    if (up > 1.0) st.upper_ok = false;
    if (tr > 1.0) st.transverse_ok = false;
    if (hd > 1.0) st.hausdorff_ok = false;
    viol[i] = std::max({up, tr, hd});
    st.worst = std::max(st.worst, viol[i]);
  }

  if (st.all() || c.depth >= p_.max_depth) {
    nd.status_ = st;
    nd.norm_ = std::move(cn);
    nd.hole_r_ = hole_radius(c);
    return;
  }

  // Split along the axes carrying most of the variation of the violations.
  std::vector<int> axes;
  if (n <= 4) {
    std::vector<double> score(n, 0.0);
    std::vector<bool> rank_axis(n, false);
    int stride = 1;
    for (int a = 0; a < n; ++a, stride *= 3) {
      for (size_t i = 0; i < pts.size(); ++i) {
        int ta = (static_cast<int>(i) / stride) % 3;
        if (ta == 2) continue;
        size_t j = i + stride;
        double vi = std::min(viol[i], 1e6), vj = std::min(viol[j], 1e6);
        score[a] = std::max(score[a], std::abs(vi - vj));
        if (pd[i].r != pd[j].r) rank_axis[a] = true;
      }
    }
    double mx = *std::max_element(score.begin(), score.end());
    for (int a = 0; a < n; ++a)
      if ((!st.rank_ok && rank_axis[a]) || (mx > 0.0 && score[a] >= 0.5 * mx)) axes.push_back(a);
  }
  if (axes.empty())
    for (int a = 0; a < n; ++a) axes.push_back(a);
  const int na = static_cast<int>(axes.size());
  int total = 1;
  for (int i = 0; i < na; ++i) total *= 3;
  for (int combo = 0; combo < total; ++combo) {
    auto ch = std::make_unique<CoverNode>();
    CoverCell& cc = ch->cell_;
    cc.core_lo = c.core_lo;
    cc.core_hi = c.core_hi;
    int t = combo;
    for (int i = 0; i < na; ++i, t /= 3) {
      int a = axes[i], j = t % 3;
      double w = (c.core_hi[a] - c.core_lo[a]) / 3.0;
      cc.core_lo[a] = c.core_lo[a] + j * w;
      cc.core_hi[a] = j == 2 ? c.core_hi[a] : c.core_lo[a] + (j + 1) * w;
    }
    cc.lo.resize(n);
    cc.hi.resize(n);
    for (int a = 0; a < n; ++a) {
      double m = 0.5 * p_.overlap * (cc.core_hi[a] - cc.core_lo[a]);
      cc.lo[a] = cc.core_lo[a] - m;
      cc.hi[a] = cc.core_hi[a] + m;
    }
    cc.depth = c.depth + 1;
    ch->path_ = nd.path_;
    ch->path_.push_back(combo);
    nd.children_.push_back(std::move(ch));
  }
}

void FinslerSequence::collect(const CoverNode& nd, const Vec& lo, const Vec& hi,
                              std::vector<const CoverNode*>& out) const {
  resolve(nd);
  if (nd.children_.empty()) {
    out.push_back(&nd);
    return;
  }
  for (const auto& ch : nd.children_)
    if (meets(ch->cell_.lo, ch->cell_.hi, lo, hi)) collect(*ch, lo, hi, out);
}

std::vector<const CoverNode*> FinslerSequence::leaves_in(const Vec& lo, const Vec& hi) const {
  std::vector<const CoverNode*> out;
  for (long idx : roots_meeting(lo, hi)) collect(root(idx), lo, hi, out);
  return out;
}

std::vector<const CoverNode*> FinslerSequence::leaves_containing(const Vec& x) const {
  require_dim(x.size(), S_->n(), "sequence point");
  if (!box_.contains(x, 1e-9)) throw ConfigError("point " + vec_str(x) + " lies outside the working box");
  std::vector<const CoverNode*> out;
  for (const CoverNode* l : leaves_in(x, x))
    if (l->cell_.contains(x)) out.push_back(l);
  return out;
}

void FinslerSequence::link(const CoverNode& nd) const {
  std::call_once(nd.linked_, [&] {
    for (const CoverNode* l : leaves_in(nd.cell_.lo, nd.cell_.hi))
      if (l != &nd && nd.cell_.closure_contains(l->cell_.z)) nd.holes_.push_back({l->cell_.z, l->hole_r_});
  });
}

std::vector<FinslerSequence::Weight> FinslerSequence::blend(const Vec& x) const {
  std::vector<Weight> out;
  double sum = 0.0;
  for (const CoverNode* l : leaves_containing(x)) {
    double p = raw_bump(l->cell_, x);
    if (p == 0.0) continue;
    link(*l);
    for (const auto& h : l->holes_) {
      p *= hole_factor(h.first, h.second, x);
      if (p == 0.0) break;
    }
    if (p > 0.0) {
      out.push_back({l, p});
      sum += p;
    }
  }
  if (!(sum > 0.0)) throw NumericalError("partition of unity does not cover " + vec_str(x));
  for (auto& w : out) w.phi /= sum;
  return out;
}

double FinslerSequence::value(int level, const std::vector<Weight>& w, const Vec& v) {
  if (level == 0) return 0.0;
  double s = 0.0;
  for (const auto& e : w) s += e.phi * e.leaf->norm().value(level, v);
  return s;
}

std::vector<double> FinslerSequence::values(int levels, const std::vector<Weight>& w, const Vec& v) {
  std::vector<double> out(levels + 1, 0.0);
  for (const auto& e : w) {
    const CellNorm& cn = e.leaf->norm();
    const double bsq = cn.base_sq(v), tsq = cn.transverse_sq(v);
    for (int l = 1; l <= levels; ++l) out[l] += e.phi * cn.value_parts(l, bsq, tsq);
  }
  return out;
}

double FinslerSequence::value(int level, const Vec& x, const Vec& v) const {
  if (level < 0 || level > p_.levels) throw ConfigError("sequence level out of range");
  require_dim(v.size(), S_->n(), "sequence vector");
  if (level == 0) return 0.0;
  return value(level, blend(x), v);
}

Mat FinslerSequence::gram(int level, const Vec& x) const {
  if (!S_->is_sub_riemannian()) throw ConfigError("Gram fields need a Hilbert fiber norm");
  if (level < 0 || level > p_.levels) throw ConfigError("sequence level out of range");
  Mat G = Mat::Zero(S_->n(), S_->n());
  for (const auto& e : blend(x)) G += e.phi * e.leaf->norm().gram(level);
  return G;
}

CoverStats FinslerSequence::stats() const {
  CoverStats st;
  std::vector<const CoverNode*> stack;
  {
    std::lock_guard<std::mutex> lk(roots_mu_);
    for (const auto& kv : roots_) stack.push_back(kv.second.get());
  }
  while (!stack.empty()) {
    const CoverNode* nd = stack.back();
    stack.pop_back();
    ++st.nodes;
    if (nd->norm_) {
      ++st.leaves;
      st.max_depth = std::max(st.max_depth, nd->cell_.depth);
      if (!nd->status_.all()) ++st.flagged;
    }
    for (const auto& ch : nd->children_) stack.push_back(ch.get());
  }
  return st;
}

void FinslerSequence::scale_anchor_norms(const Vec& x, double factor) const {
  if (!(factor > 0.0)) throw ConfigError("scale factor must be positive");
  for (const CoverNode* l : leaves_containing(x))
    for (int i = 1; i <= p_.levels; ++i) l->norm_->delta[i] = 1.0 - factor * (1.0 - l->norm_->delta[i]);
}

// ----------------------------------------------------------- free helpers

std::vector<CoverCell> build_cover(StructurePtr S, const ChartDomain& domain, int n) {
  SequenceParams p;
  p.levels = n;
  p.box = domain;
  FinslerSequence seq(std::move(S), p);
  std::vector<CoverCell> out;
  for (const CoverNode* l : seq.all_leaves()) out.push_back(l->cell());
  return out;
}

MetricFieldPtr assemble_F(SequencePtr seq, int n) {
  if (n < 0 || n > seq->levels()) throw ConfigError("assemble_F: level out of range");
  return std::make_shared<LevelField>(std::move(seq), n);
}

GramField::GramField(SequencePtr seq, int level) : seq_(std::move(seq)), level_(level) {
  if (!seq_->structure().is_sub_riemannian()) throw ConfigError("Riemannian variant needs a Hilbert fiber norm");
}

double GramField::value(const Vec& x, const Vec& v) const { return std::sqrt(std::max(0.0, v.dot(gram(x) * v))); }

std::vector<std::shared_ptr<const GramField>> riemannian_variant(SequencePtr seq) {
  if (!seq->structure().is_sub_riemannian()) throw ConfigError("Riemannian variant needs a Hilbert fiber norm");
  std::vector<std::shared_ptr<const GramField>> out;
  for (int l = 1; l <= seq->levels(); ++l) out.push_back(std::make_shared<GramField>(seq, l));
  return out;
}

// -------------------------------------------------------------- validation

bool in_gn(const FinslerSequence& seq, const Vec& x, int n, double step_factor) {
  const auto& S = seq.structure();
  const int r = rank(S, x);
  for (const CoverNode* l : seq.leaves_containing(x))
    if (l->cell().min_rank != r || l->norm().k != r) return false;
  return gn_membership(S, x, n, step_factor / n);
}

void ItemReport::fail(const std::string& w) {
  pass = false;
  ++failed;
  if (witness.empty()) witness = w;
}

SequenceReport validate_sequence(const FinslerSequence& seq, const ValidateOptions& opt) {
  const auto& S = seq.structure();
  const int n = S.n(), N = seq.levels();
  const ChartDomain& box = seq.box();
  SequenceReport rep;
  ItemReport &ia = rep.item[0], &ib = rep.item[1], &ic = rep.item[2], &id = rep.item[3];

  // a) strict monotone sandwich, and the anchors met on the way for c).
  const auto xs = box_points(box.lower, box.upper, opt.points, opt.start);
  struct AResult {
    ItemReport rep;
    std::vector<const CoverNode*> leaves;
  };
  std::vector<AResult> ares(xs.size());
  parallel_for(xs.size(), opt.jobs, [&](size_t i) {
    const Vec& x = xs[i];
    auto w = seq.blend(x);
    for (const auto& e : w) ares[i].leaves.push_back(e.leaf);
    RangeSplit rs = range_split(S.psi(x));
    const int r = static_cast<int>(rs.range.cols());
    auto hdirs = unit_vectors(r, opt.dirs, opt.start + 31 * i);
    auto gdirs = unit_vectors(n, opt.dirs, opt.start + 31 * i + 17);
    for (int j = 0; j < opt.dirs; ++j) {
      Vec v = (j % 2 == 0 && r > 0) ? Vec(rs.range * hdirs[j]) : gdirs[j];
      GenMetricValue rho = horizontal_norm(S, x, v);
      double prev = 0.0;
      const auto fs = FinslerSequence::values(N, w, v);
      for (int l = 1; l <= N; ++l) {
        double f = fs[l];
        ++ares[i].rep.checked;
        double lower = f - prev;
        double m = lower / std::max(1.0, f);
        bool upper_ok = true;
        if (rho.is_finite()) {
          double upper = rho.value() - f;
          m = std::min(m, upper / std::max(1.0, rho.value()));
          upper_ok = upper > 1e-12 * std::max(1.0, rho.value());
        }
        ares[i].rep.worst_margin = std::min(ares[i].rep.worst_margin, m);
        if (!(lower > 1e-12 * std::max(1.0, f)) || !upper_ok || !std::isfinite(f)) {
          std::ostringstream os;
          os.precision(17);
          os << "n=" << l << " x=" << vec_str(x) << " v=" << vec_str(v) << " F_{n-1}=" << prev << " F_n=" << f
             << " rho=" << rho.value();
          ares[i].rep.fail(os.str());
        }
        prev = f;
      }
    }
  });
  std::vector<const CoverNode*> anchors;
  std::set<const CoverNode*> seen;
  for (auto& a : ares) {
    ia.checked += a.rep.checked;
    ia.worst_margin = std::min(ia.worst_margin, a.rep.worst_margin);
    if (!a.rep.pass) {
      ia.pass = false;
      ia.failed += a.rep.failed;
      if (ia.witness.empty()) ia.witness = a.rep.witness;
    }
    for (auto* l : a.leaves)
      if (seen.insert(l).second) anchors.push_back(l);
  }

  // c) anchor closeness.
  if (opt.all_anchors) anchors = seq.all_leaves();
  std::vector<ItemReport> cres(anchors.size());
  parallel_for(anchors.size(), opt.jobs, [&](size_t i) {
    const CoverNode* leaf = anchors[i];
    const Vec& z = leaf->cell().z;
    auto w = seq.blend(z);
    const Mat& W = leaf->norm().W;
    for (const auto& q : unit_vectors(static_cast<int>(W.cols()), W.cols() ? opt.anchor_dirs : 0, opt.start + 7 * i)) {
      Vec v = W * q;
      double rho = horizontal_norm(S, z, v).value();
      const auto fs = FinslerSequence::values(N, w, v);
      for (int l = 1; l <= N; ++l) {
        double f = fs[l];
        ++cres[i].checked;
        double slack = 1.0 / l + 1e-9 - std::abs(f - rho);
        cres[i].worst_margin = std::min(cres[i].worst_margin, slack);
        if (!(slack >= 0.0)) {
          std::ostringstream os;
          os.precision(17);
          os << "n=" << l << " z=" << vec_str(z) << " v=" << vec_str(v) << " F_n=" << f << " rho=" << rho;
          cres[i].fail(os.str());
        }
      }
    }
  });
  for (auto& c : cres) {
    ic.checked += c.checked;
    ic.worst_margin = std::min(ic.worst_margin, c.worst_margin);
    if (!c.pass) {
      ic.pass = false;
      ic.failed += c.failed;
      if (ic.witness.empty()) ic.witness = c.witness;
    }
  }

  // b) and d) on G_n.
  const auto ts = box_points(box.lower, box.upper, opt.transverse_points, opt.start + 7777);
  std::vector<ItemReport> bres(ts.size()), dres(ts.size());
  parallel_for(ts.size(), opt.jobs, [&](size_t i) {
    const Vec& x = ts[i];
    auto w = seq.blend(x);
    auto leaves = seq.leaves_containing(x);
    std::vector<std::vector<FinslerSequence::Weight>> zw;
    for (const auto* l : leaves) zw.push_back(seq.blend(l->cell().z));
    RangeSplit rs = range_split(S.psi(x));
    const int r = static_cast<int>(rs.range.cols());
    auto tdirs = unit_vectors(n - r, n - r > 0 ? opt.dirs : 0, opt.start + 13 * i);
    auto gdirs = unit_vectors(n, opt.dirs, opt.start + 13 * i + 5);
    std::map<std::pair<size_t, int>, double> haus;
    for (int l = 1; l <= N; ++l) {
      if (!in_gn(seq, x, l, opt.gn_step_factor)) continue;
      for (const auto& q : tdirs) {
        Vec v = rs.complement * q;
        double f = FinslerSequence::value(l, w, v);
        ++bres[i].checked;
        bres[i].worst_margin = std::min(bres[i].worst_margin, f - l);
        if (!(f >= l)) {
          std::ostringstream os;
          os.precision(17);
          os << "n=" << l << " x=" << vec_str(x) << " v=" << vec_str(v) << " F_n=" << f;
          bres[i].fail(os.str());
        }
      }
      for (const auto& v : gdirs) {
        size_t best = 0;
        double bestv = kInf;
        for (size_t j = 0; j < leaves.size(); ++j) {
          double fz = FinslerSequence::value(l, zw[j], v);
          if (fz < bestv) bestv = fz, best = j;
        }
        ++id.checked, ++dres[i].checked;
        const CoverNode* leaf = leaves[best];
        const Vec& z = leaf->cell().z;
        double fx = FinslerSequence::value(l, w, v);
        auto key = std::make_pair(best, l);
        if (!haus.count(key)) {
          double h = kInf;
          if (leaf->norm().k == r && r > 0) {
            const auto& wz = zw[best];
            NormFn nf = [&](const Vec& u) { return FinslerSequence::value(l, wz, u) + u.norm(); };
            // Same pivots on both sides align the sampled spheres, so the
            // estimate is not dominated by the sampling gap.
            Mat Vx = rs.range;
            try {
              Vx = frame_with_pivots(S.psi(x), leaf->norm().pivots);
            } catch (const NumericalError&) {
            }
            h = sphere_hausdorff(leaf->norm().W, Vx, nf, opt.hausdorff_dirs);
          } else if (r == 0 && leaf->norm().k == 0) {
            h = 0.0;
          }
          haus[key] = h;
        }
        double h = haus[key];
        double dz = (x - z).norm();
        double slack = std::min({1.0 / l - h, 1.0 / l - dz, fx - bestv});
        dres[i].worst_margin = std::min(dres[i].worst_margin, slack);
        if (!(h < 1.0 / l) || !(dz < 1.0 / l) || !(fx >= bestv * (1.0 - 1e-12))) {
          std::ostringstream os;
          os.precision(17);
          os << "n=" << l << " x=" << vec_str(x) << " z=" << vec_str(z) << " |x-z|=" << dz << " hausdorff=" << h
             << " F_n(x,v)=" << fx << " F_n(z,v)=" << bestv;
          dres[i].fail(os.str());
        }
      }
    }
  });
  id.checked = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    for (auto* pr : {&bres[i], &dres[i]}) {
      ItemReport& dst = pr == &bres[i] ? ib : id;
      dst.checked += pr->checked;
      dst.worst_margin = std::min(dst.worst_margin, pr->worst_margin);
      if (!pr->pass) {
        dst.pass = false;
        dst.failed += pr->failed;
        if (dst.witness.empty()) dst.witness = pr->witness;
      }
    }
  }
  return rep;
}

std::vector<ProbeResult> convergence_probe(const FinslerSequence& seq, const std::vector<std::pair<Vec, Vec>>& probes,
                                           double gn_step_factor) {
  const auto& S = seq.structure();
  const int N = seq.levels();
  std::vector<ProbeResult> out;
  for (const auto& pr : probes) {
    ProbeResult res;
    res.x = pr.first;
    res.v = pr.second;
    require_dim(res.v.size(), S.n(), "probe vector");
    auto w = seq.blend(res.x);
    for (int l = 1; l <= N; ++l) {
      double f = FinslerSequence::value(l, w, res.v);
      if (!res.values.empty() && !(f >= res.values.back())) res.monotone = false;
      res.values.push_back(f);
    }
    GenMetricValue rho = horizontal_norm(S, res.x, res.v);
    res.rho = rho.value();
    res.horizontal = rho.is_finite();
    res.pass = res.monotone;
    if (res.horizontal) {
      res.gap = res.rho - res.values.back();
      if (!(res.values.back() < res.rho) && res.v.norm() > 0.0) res.pass = false;
    } else {
      RangeSplit rs = range_split(S.psi(res.x));
      Vec vp = rs.range * (rs.range.transpose() * res.v);
      res.beta = (res.v - vp).norm();
      res.rho_parallel = horizontal_norm(S, res.x, vp).value();
      res.lower.assign(N, std::numeric_limits<double>::quiet_NaN());
      for (int l = 1; l <= N; ++l) {
        if (!in_gn(seq, res.x, l, gn_step_factor)) continue;
        double lb = res.beta * l - res.rho_parallel;
        res.lower[l - 1] = lb;
        if (!(res.values[l - 1] >= lb - 1e-9 * std::max(1.0, std::abs(lb)))) res.pass = false;
      }
    }
    out.push_back(std::move(res));
  }
  return out;
}

// ------------------------------------------------------------ serialization

nlohmann::json params_to_json(const SequenceParams& p) {
  nlohmann::json j;
  j["levels"] = p.levels;
  j["eps_scale"] = p.eps_scale;
  j["lambda_scale"] = p.lambda_scale;
  j["overlap"] = p.overlap;
  j["shrink"] = p.shrink;
  j["check_margin"] = p.check_margin;
  j["hausdorff_margin"] = p.hausdorff_margin;
  j["max_depth"] = p.max_depth;
  if (p.box) {
    j["box"] = {{"lower", to_std(p.box->lower)}, {"upper", to_std(p.box->upper)}};
  } else {
    j["box"] = nullptr;
  }
  return j;
}

SequenceParams params_from_json(const nlohmann::json& j, SequenceParams p) {
  if (!j.is_object()) throw ConfigError("sequence parameters must be an object");
  static const std::set<std::string> known = {"levels", "eps_scale", "lambda_scale", "overlap", "shrink",
                                               "check_margin", "hausdorff_margin", "max_depth", "box"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown sequence parameter '" + it.key() + "'");
  try {
    if (j.contains("levels")) p.levels = j.at("levels").get<int>();
    if (j.contains("eps_scale")) p.eps_scale = j.at("eps_scale").get<double>();
    if (j.contains("lambda_scale")) p.lambda_scale = j.at("lambda_scale").get<double>();
    if (j.contains("overlap")) p.overlap = j.at("overlap").get<double>();
    if (j.contains("shrink")) p.shrink = j.at("shrink").get<double>();
    if (j.contains("check_margin")) p.check_margin = j.at("check_margin").get<double>();
    if (j.contains("hausdorff_margin")) p.hausdorff_margin = j.at("hausdorff_margin").get<double>();
    if (j.contains("max_depth")) p.max_depth = j.at("max_depth").get<int>();
    if (j.contains("box") && !j.at("box").is_null())
      p.box = ChartDomain(to_vec(j.at("box").at("lower").get<std::vector<double>>()),
                          to_vec(j.at("box").at("upper").get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sequence parameters: ") + e.what());
  }
  return p;
}

nlohmann::json sequence_to_json(const FinslerSequence& seq) {
  nlohmann::json j;
  j["structure"] = seq.structure().name();
  j["params"] = params_to_json(seq.params());
  j["root_counts"] = seq.root_counts();
  nlohmann::json leaves = nlohmann::json::array();
  std::vector<const CoverNode*> resolved;
  // Resolved leaves only: the cover is built lazily and rebuilt on load.
  for (const CoverNode* l : seq.all_leaves()) resolved.push_back(l);
  for (const CoverNode* l : resolved) {
    const CoverCell& c = l->cell();
    const CellNorm& cn = l->norm();
    nlohmann::json e;
    e["path"] = l->path();
    e["lo"] = to_std(c.lo);
    e["hi"] = to_std(c.hi);
    e["core_lo"] = to_std(c.core_lo);
    e["core_hi"] = to_std(c.core_hi);
    e["z"] = to_std(c.z);
    e["min_rank"] = c.min_rank;
    e["depth"] = c.depth;
    e["hole_radius"] = l->hole_radius();
    e["rank"] = cn.k;
    e["pivots"] = cn.pivots;
    e["rho_max"] = cn.rho_max;
    e["delta"] = cn.delta;
    e["lambda_prime"] = cn.lambda_prime;
    e["quadratic"] = cn.quadratic;
    if (!cn.quadratic && cn.k > 0) {
      const Mat& H = cn.smooth.support();
      nlohmann::json cols = nlohmann::json::array();
      for (int c = 0; c < H.cols(); ++c) cols.push_back(to_std(H.col(c)));
      e["support"] = cols;
      e["power"] = cn.smooth.power();
      e["smooth_scale"] = cn.smooth_scale;
    }
    e["status_ok"] = l->status().all();
    leaves.push_back(e);
  }
  j["leaves"] = leaves;
  return j;
}

std::shared_ptr<FinslerSequence> sequence_from_json(const nlohmann::json& j, StructurePtr S) {
  try {
    if (j.at("structure").get<std::string>() != S->name())
      throw ConfigError("stored sequence was built for structure '" + j.at("structure").get<std::string>() + "'");
    auto seq = std::make_shared<FinslerSequence>(S, params_from_json(j.at("params")));
    std::map<std::vector<int>, Vec> stored;
    for (const auto& e : j.at("leaves")) stored[e.at("path").get<std::vector<int>>()] = to_vec(e.at("z").get<std::vector<double>>());
    std::map<std::vector<int>, Vec> rebuilt;
    for (const CoverNode* l : seq->all_leaves()) rebuilt[l->path()] = l->cell().z;
    if (stored.size() != rebuilt.size()) throw ConfigError("stored sequence does not match its rebuild (leaf count)");
    for (const auto& [path, z] : stored) {
      auto it = rebuilt.find(path);
      if (it == rebuilt.end() || (it->second - z).norm() > 1e-12)
        throw ConfigError("stored sequence does not match its rebuild (anchor)");
    }
    return seq;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("stored sequence: ") + e.what());
  }
}

}  // namespace ccml
