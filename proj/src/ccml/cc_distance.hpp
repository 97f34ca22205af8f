#pragma once

#include "ccml/finsler_seq.hpp"

#include <optional>

namespace ccml {

// A trajectory left the chart box.
class BoxExitError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// Piecewise-constant controls on a uniform partition of [0,1], integrated by RK4.
struct HorizontalPath {
  Vec x0;
  Mat controls;  // d x K, control on segment k
  int substeps = 16;
  std::vector<Vec> states;  // K * substeps + 1 samples on the uniform grid

  int segments() const { return static_cast<int>(controls.cols()); }
  double dt() const { return 1.0 / (segments() * substeps); }
  const Vec& endpoint() const { return states.back(); }
};

HorizontalPath integrate(const SubFinslerStructure& S, const Vec& x0, const Mat& controls, int substeps = 16);
// State and velocity at time t in [0,1]; the velocity uses the control of the
// segment containing t (the later one at a breakpoint).
std::pair<Vec, Vec> path_at(const SubFinslerStructure& S, const HorizontalPath& p, double t);
// Trapezoid rule on the state samples with min-norm preimages.
double cc_length(const SubFinslerStructure& S, const HorizontalPath& p);
// Planar loop of the given length: constant speed, direction turning once.
Mat circle_controls(double length, int K, double phase = 0.0);

struct CCOptions {
  int K = 32;
  int substeps = 16;
  int restarts = 8;  // seeds seed .. seed + restarts - 1
  unsigned long long seed = 0;
  double endpoint_tol = 1e-4;
  double penalty0 = 10.0;
  double penalty_growth = 10.0;
  int max_rounds = 10;
  int max_iters = 500;
  int jobs = 1;
};

struct CCResult {
  double value = 0.0;  // cc_length of the returned path
  double endpoint_error = 0.0;
  HorizontalPath path;
  int best_restart = -1;
  int restarts_ok = 0;
};

// Upper bound of d_CC(x, y) up to the endpoint slack.
CCResult cc_distance_upper(const SubFinslerStructure& S, const Vec& x, const Vec& y, const CCOptions& opt = {});

// Energy-plus-penalty objective used by the optimizer; exposed for gradient checks.
double cc_objective(const SubFinslerStructure& S, const Vec& x, const Vec& y, int K, int substeps, double penalty,
                    const Vec& controls, Vec* grad);

// Primitive integer offsets with max |coordinate| <= radius, both signs.
std::vector<std::vector<int>> stencil_offsets(int n, int radius);

struct GridOptions {
  double h = 0.05;
  int stencil = 2;
  std::optional<ChartDomain> box;  // lattice box; defaults to the metric's box
};

struct GridResult {
  double value = 0.0;
  double snap_x = 0.0, snap_y = 0.0;  // distances from the endpoints to their lattice nodes
  double error_bar = 0.0;
  long nodes = 0, settled = 0;
};

// Dijkstra on the lattice with midpoint-rule edge weights F(mid, step).
GridResult finsler_distance_grid(const MetricField& F, const Vec& x, const Vec& y, const GridOptions& opt);
// Same for several levels of a sequence, sharing partition-of-unity evaluations.
// With riemannian set the blended Gram fields are used instead of F_n.
std::vector<GridResult> finsler_distance_grid(const FinslerSequence& seq, const std::vector<int>& levels, const Vec& x,
                                              const Vec& y, const GridOptions& opt, bool riemannian = false);

struct ConvergenceRow {
  int n = 0;
  double value = 0.0, error_bar = 0.0;
  bool monotone = true;   // value >= previous value - both error bars
  bool below_cc = true;   // value - error_bar <= d_cc + cc_slack
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  double d_cc = 0.0, cc_slack = 0.0, endpoint_error = 0.0;
  double final_gap = 0.0;  // d_cc - last value
  bool pass() const;
};

ConvergenceReport distance_convergence(const FinslerSequence& seq, const Vec& x, const Vec& y,
                                       const std::vector<int>& levels, const GridOptions& grid,
                                       const CCOptions& cc = {}, bool riemannian = false);

struct SpeedRow {
  double t = 0.0, h = 0.0, quotient = 0.0, speed = 0.0, rel_error = 0.0;
};

struct SpeedReport {
  std::vector<SpeedRow> rows;
  double worst_rel_error = 0.0;  // over the rows with the smallest h
  bool pass = true;
};

SpeedReport metric_speed_check(const SubFinslerStructure& S, const HorizontalPath& p, const std::vector<double>& ts,
                               const std::vector<double>& hs, double tol = 0.03, const CCOptions& cc = {});

struct HorizontalDifferential {
  Vec coefficients;  // d_x f on the orthonormal frame of D_x
  double dual_norm = 0.0;
};

HorizontalDifferential horizontal_differential(const SubFinslerStructure& S, const PolyField& f, const Vec& x);

struct LipReport {
  double dual_norm = 0.0, lip_estimate = 0.0, tolerance = 0.0;
  int samples = 0;
  bool pass = false;
};

struct LipSample {
  Vec y;
  double d_upper = 0.0;  // upper bound of d_CC(x, y)
};

// Nearby points with d_CC upper bounds: constant-control curves of length
// radius plus a few optimizer solves. Independent of f, so shareable.
std::vector<LipSample> lip_samples(const SubFinslerStructure& S, const Vec& x, double radius, int budget = 64,
                                   const CCOptions& cc = {});

LipReport lip_bound_check(const SubFinslerStructure& S, const PolyField& f, const Vec& x,
                          const std::vector<LipSample>& samples);

// lip(f)(x) estimated from upper bounds of d_CC to nearby points.
LipReport lip_bound_check(const SubFinslerStructure& S, const PolyField& f, const Vec& x, double radius,
                          int budget = 64, const CCOptions& cc = {});

// |rho(v+w)^2 + rho(v-w)^2 - 2 rho(v)^2 - 2 rho(w)^2| for horizontal v, w.
double parallelogram_defect(const SubFinslerStructure& S, const Vec& x, const Vec& v, const Vec& w);

struct ParallelogramReport {
  double max_defect = 0.0;  // relative: defect / (1 + scale^2), scale = rho(v) + rho(w)
  Vec x, v, w;              // witness of the maximum
  int samples = 0;
};

ParallelogramReport parallelogram_check(const SubFinslerStructure& S, int budget, unsigned long long start = 0);

}  // namespace ccml
