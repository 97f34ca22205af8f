#pragma once

#include "ccml/cc_distance.hpp"

#include <json.hpp>

namespace ccml {

// Outcome of one property check. For a negative control, pass means the
// property failed as expected.
struct CheckResult {
  std::string name;
  std::string structure;
  bool pass = true;
  bool expected_fail = false;
  long checked = 0, failed = 0;
  double worst = 0.0;      // check-specific statistic, compared with tolerance
  double tolerance = 0.0;
  std::string witness;
  double seconds = 0.0;

  void fail(const std::string& w);
  nlohmann::json to_json() const;
};

// Sequence items a) to d) as four results.
std::vector<CheckResult> sequence_checks(const FinslerSequence& seq, const ValidateOptions& opt);

// F_n(x,v) >= n for all n at the given points, v fixed.
CheckResult transverse_literal(const FinslerSequence& seq, const std::vector<Vec>& points, const Vec& v,
                               bool require_gn, double gn_step_factor = 0.25);

// Lemma checks for extend_norm on random instances: the extension equals the
// base on V, dominates the minorant strictly, and is >= lambda on V^perp.
CheckResult norm_lemma_suite(int instances, int samples, unsigned long long seed);

// Frame perturbation bound: whenever max_i |w_i(xb) - w_i(x)| <= eps / (C sqrt k)
// the Euclidean sphere Hausdorff distance is at most eps + 1e-3.
CheckResult frame_perturbation_check(const SubFinslerStructure& S, double eps, int trials, double max_step,
                                     unsigned long long seed);

// Random convergent sequences (x_k, v_k) -> (x, v), including limits on
// rank-drop sets and non-horizontal limits.
CheckResult lsc_suite(const SubFinslerStructure& S, int count, unsigned long long seed);

// Minimal bracket step at each sample against an expected step map.
CheckResult hormander_regression(const SubFinslerStructure& S, const std::vector<Vec>& samples,
                                 const std::function<int(const Vec&)>& expected_step);

// dual_norm <= lip + 0.05 dual_norm + 1e-6 at each point for each f.
CheckResult differential_bound(const SubFinslerStructure& S, const std::vector<PolyField>& fs,
                               const std::vector<Vec>& points, double radius, int budget, const CCOptions& cc);

// Relative parallelogram defect over the sampled budget.
CheckResult parallelogram_suite(const SubFinslerStructure& S, int budget, double tol);

// Metric speed against rho along a path at times away from breakpoints.
CheckResult speed_suite(const SubFinslerStructure& S, const HorizontalPath& p, const std::vector<double>& ts, double h,
                        double tol, const CCOptions& cc);

// Sampled t in (0,1) such that [t, t+h] stays inside one control segment,
// a tenth of a segment away from its ends.
std::vector<double> times_off_breakpoints(int K, int count, double h);

// Heisenberg loop of length 2 sqrt(pi) from the origin, centred on the diagonal.
Mat dido_controls(int K);

}  // namespace ccml
