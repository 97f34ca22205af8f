#pragma once

#include "ccml/structure.hpp"

#include <functional>

namespace ccml {

struct RankRadiusEstimate {
  Vec x;
  std::optional<double> r_hat;  // empty means Unbounded
  double grid_step = 0.0;
  double r_cap = 0.0;
  bool unbounded() const { return !r_hat.has_value(); }
};

// Grid anchored at x with the given spacing, restricted to the open ball of
// radius r_cap intersected with the box.
RankRadiusEstimate rank_radius(const SubFinslerStructure& S, const Vec& x, double r_cap, double grid_step);
bool gn_membership(const SubFinslerStructure& S, const Vec& x, int n, double grid_step);

struct Frame {
  std::vector<int> pivots;  // selected column indices of psi(x)
  Mat w;                    // n x k, orthonormal columns
};

// Greedy pivot selection then sequential Gram-Schmidt on the pivot columns.
Frame orthonormal_frame(const Mat& columns);
Frame orthonormal_frame(const SubFinslerStructure& S, const Vec& x);
// Gram-Schmidt of psi(x) restricted to the given pivot columns.
Mat frame_with_pivots(const Mat& columns, const std::vector<int>& pivots);

using NormFn = std::function<double(const Vec&)>;

// Hausdorff distance between V and W unit spheres, with n_dirs sampled
// directions per subspace. Both spheres are parametrized through the
// Gram-Schmidt frame of the given basis with shared coefficient samples.
double sphere_hausdorff(const Mat& V_basis, const Mat& W_basis, const NormFn& norm, int n_dirs);

}  // namespace ccml
