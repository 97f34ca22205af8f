#include "ccml/distribution.hpp"

#include "ccml/sampling.hpp"

#include <cmath>

namespace ccml {

RankRadiusEstimate rank_radius(const SubFinslerStructure& S, const Vec& x, double r_cap, double grid_step) {
  require_dim(x.size(), S.n(), "rank_radius point");
  if (!(grid_step > 0.0) || !(r_cap > 0.0)) throw ConfigError("rank_radius needs positive r_cap and grid_step");
  RankRadiusEstimate est{x, std::nullopt, grid_step, r_cap};
  const int n = S.n();
  const int base = rank(S, x);
  const int m = static_cast<int>(std::floor(r_cap / grid_step));
  double nearest = std::numeric_limits<double>::infinity();
  std::vector<int> k(n, -m);
  while (true) {
    Vec off(n);
    for (int i = 0; i < n; ++i) off[i] = k[i] * grid_step;
    double dist = off.norm();
    if (dist < r_cap && dist < nearest) {
      Vec p = x + off;
      if (S.domain().contains(p) && rank(S, p) < base) nearest = dist;
    }
    int i = 0;
    while (i < n && ++k[i] > m) k[i++] = -m;
    if (i == n) break;
  }
  if (std::isfinite(nearest)) est.r_hat = nearest;
  return est;
}

bool gn_membership(const SubFinslerStructure& S, const Vec& x, int n, double grid_step) {
  if (n < 1) throw ConfigError("gn_membership needs n >= 1");
  auto est = rank_radius(S, x, 1.0 / n, grid_step);
  return est.unbounded() || *est.r_hat >= 1.0 / n;
}

Mat frame_with_pivots(const Mat& columns, const std::vector<int>& pivots) {
  Mat w(columns.rows(), pivots.size());
  for (size_t j = 0; j < pivots.size(); ++j) {
    Vec c = columns.col(pivots[j]);
    // Modified Gram-Schmidt against the previous frame vectors.
    for (size_t i = 0; i < j; ++i) c -= w.col(i).dot(c) * w.col(i);
    double nrm = c.norm();
    if (nrm == 0.0) throw NumericalError("orthonormal_frame: zero column after pivot selection");
    w.col(j) = c / nrm;
  }
  return w;
}

Frame orthonormal_frame(const Mat& columns) {
  Frame f;
  const int r = numerical_rank(columns);
  Mat sel(columns.rows(), 0);
  for (int j = 0; j < columns.cols() && static_cast<int>(f.pivots.size()) < r; ++j) {
    Mat trial(columns.rows(), sel.cols() + 1);
    trial << sel, columns.col(j);
    if (numerical_rank(trial) == trial.cols()) {
      sel = trial;
      f.pivots.push_back(j);
    }
  }
  if (f.pivots.empty()) throw NumericalError("orthonormal_frame: rank zero");
  f.w = frame_with_pivots(columns, f.pivots);
  return f;
}

Frame orthonormal_frame(const SubFinslerStructure& S, const Vec& x) { return orthonormal_frame(S.psi(x)); }

double sphere_hausdorff(const Mat& V_basis, const Mat& W_basis, const NormFn& norm, int n_dirs) {
  if (V_basis.cols() == 0 || W_basis.cols() == 0) throw ConfigError("sphere_hausdorff: empty basis");
  require_dim(W_basis.rows(), V_basis.rows(), "sphere_hausdorff ambient dimension");
  auto sample = [&](const Mat& B) {
    std::vector<int> piv(B.cols());
    for (int j = 0; j < B.cols(); ++j) piv[j] = j;
    Mat Q = frame_with_pivots(B, piv);
    std::vector<Vec> pts;
    for (const auto& q : sphere_directions(static_cast<int>(Q.cols()), n_dirs)) pts.push_back(Q * q);
    return pts;
  };
  const auto A = sample(V_basis), B = sample(W_basis);
  auto directed = [&](const std::vector<Vec>& P, const std::vector<Vec>& R) {
    double worst = 0.0;
    for (const auto& a : P) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : R) best = std::min(best, norm(a - b));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(A, B), directed(B, A));
}

}  // namespace ccml
