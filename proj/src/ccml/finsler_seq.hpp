#pragma once

#include "ccml/distribution.hpp"
#include "ccml/norm_factory.hpp"

#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

namespace ccml {

struct SequenceParams {
  int levels = 12;             // N
  double eps_scale = 1.0;      // eps_n = eps_scale / n
  double lambda_scale = 1.0;   // lambda_n = lambda_scale * n
  double overlap = 0.3;        // neighbouring cells overlap by this fraction of a cell width
  double shrink = 0.5;         // delta_n as a fraction of its admissible bound
  double check_margin = 0.5;   // fraction of the anchor slack still required at cell samples
  double hausdorff_margin = 0.95;  // frame bound must stay below hausdorff_margin / n
  int max_depth = 8;           // ternary refinement cap
  std::optional<ChartDomain> box;  // working box, defaults to the structure box
};

struct CoverCell {
  Vec lo, hi;            // the open set U
  Vec core_lo, core_hi;  // cores tile the working box
  Vec z;                 // anchor, inside the core
  int min_rank = 0;      // sampled minimum of the rank over U
  int depth = 0;

  double diameter() const { return (hi - lo).norm(); }
  bool contains(const Vec& x) const;         // open U
  bool closure_contains(const Vec& x) const;  // closed U
};

// Smooth plateau profile: 0 for t <= 0, 1 for t >= 1.
double plateau(double t);
// Product of per-axis plateau ramps: 1 on the inner core, 0 outside U.
double raw_bump(const CoverCell& c, const Vec& x);
// 0 within r/2 of z and 1 beyond r.
double hole_factor(const Vec& z, double r, const Vec& x);
// Radius of the cut-out around the anchor: it stays inside the core.
double hole_radius(const CoverCell& c);

// Bumps normalized to sum 1, with cut-outs around foreign anchors so that
// phi_i(z_i) = 1. Brute-force neighbour search; for explicit cell lists.
class PartitionOfUnity {
public:
  explicit PartitionOfUnity(std::vector<CoverCell> cells);
  const std::vector<CoverCell>& cells() const { return cells_; }
  // Nonzero weights at x as (cell index, phi).
  std::vector<std::pair<int, double>> weights(const Vec& x) const;
  double phi(int i, const Vec& x) const;

private:
  std::vector<CoverCell> cells_;
  std::vector<double> radius_;
  std::vector<std::vector<int>> holes_;
};

PartitionOfUnity partition_of_unity(std::vector<CoverCell> cells);

// Anchor norm of one cell at every level:
//   n_n(v) = (1 - delta_n) sqrt(b(W^T v)^2 + lambda'_n^2 |N^T v|^2)
// with b = rho(z,.) on D_z for Hilbert fibers and a smoothed minorant of it
// otherwise.
struct CellNorm {
  int n = 0, k = 0;
  std::vector<int> pivots;
  Mat W;  // n x k Gram-Schmidt frame of D_z on the pivot columns
  Mat N;  // n x (n-k) orthonormal basis of the complement
  bool quadratic = true;
  Mat A;  // v.A.v = b(W^T v)^2 when quadratic
  Mat B;  // N N^T
  SmoothNorm smooth;  // base when not quadratic, times smooth_scale
  double smooth_scale = 1.0;
  double base_max = 0.0;  // upper bound of b on the unit sphere of D_z
  double rho_max = 0.0;   // max of rho(z,.) on the unit sphere of D_z
  std::vector<double> delta, lambda_prime;  // indexed by level, entry 0 unused

  double base_sq(const Vec& v) const;
  double transverse_sq(const Vec& v) const { return k == n ? 0.0 : (N.transpose() * v).squaredNorm(); }
  double value(int level, const Vec& v) const;
  double value_parts(int level, double base_sq, double transverse_sq) const;
  Mat gram(int level) const;      // quadratic only
  Mat majorant(int level) const;  // v.M.v >= value^2
};

struct CellStatus {
  bool rank_ok = true, upper_ok = true, transverse_ok = true, hausdorff_ok = true;
  double worst = 0.0;  // largest normalized violation (<= 1 passes)
  bool all() const { return rank_ok && upper_ok && transverse_ok && hausdorff_ok; }
};

class FinslerSequence;

class CoverNode {
public:
  const CoverCell& cell() const { return cell_; }
  const CellNorm& norm() const { return *norm_; }
  const CellStatus& status() const { return status_; }
  const std::vector<int>& path() const { return path_; }
  double hole_radius() const { return hole_r_; }

private:
  friend class FinslerSequence;
  mutable CoverCell cell_;  // anchor fields are set on resolution
  std::vector<int> path_;  // root linear index then child indices
  mutable std::once_flag resolved_, linked_;
  mutable std::vector<std::unique_ptr<CoverNode>> children_;
  mutable std::unique_ptr<CellNorm> norm_;
  mutable CellStatus status_;
  mutable double hole_r_ = 0.0;
  mutable std::vector<std::pair<Vec, double>> holes_;  // foreign anchors in closed U and radii
};

struct CoverStats {
  long nodes = 0, leaves = 0, flagged = 0;
  int max_depth = 0;
};

// The monotone sequence F_1..F_N on one shared lazily refined cover.
class FinslerSequence {
public:
  FinslerSequence(StructurePtr S, SequenceParams p = {});

  const SubFinslerStructure& structure() const { return *S_; }
  const StructurePtr& structure_ptr() const { return S_; }
  const SequenceParams& params() const { return p_; }
  const ChartDomain& box() const { return box_; }
  int levels() const { return p_.levels; }
  double eps(int n) const { return p_.eps_scale / n; }
  double lambda(int n) const { return p_.lambda_scale * n; }
  double lambda_prime(int n) const { return lambda(n) + 1.0; }
  const std::vector<int>& root_counts() const { return counts_; }

  struct Weight {
    const CoverNode* leaf;
    double phi;
  };
  // Nonzero partition-of-unity weights at x, in deterministic order.
  std::vector<Weight> blend(const Vec& x) const;
  double value(int level, const Vec& x, const Vec& v) const;
  static double value(int level, const std::vector<Weight>& w, const Vec& v);
  // F_0..F_levels at once; entry 0 is zero.
  static std::vector<double> values(int levels, const std::vector<Weight>& w, const Vec& v);
  // Blended Gram matrix (Hilbert fibers only).
  Mat gram(int level, const Vec& x) const;

  std::vector<const CoverNode*> leaves_containing(const Vec& x) const;
  // Resolves every node meeting the closed box [lo, hi].
  std::vector<const CoverNode*> leaves_in(const Vec& lo, const Vec& hi) const;
  std::vector<const CoverNode*> all_leaves() const { return leaves_in(box_.lower, box_.upper); }
  CoverStats stats() const;
  // Negative control: multiplies the anchor norms of the leaves containing x
  // by factor at every level.
  void scale_anchor_norms(const Vec& x, double factor) const;

private:
  const CoverNode& root(long idx) const;
  void resolve(const CoverNode& nd) const;
  void resolve_impl(const CoverNode& nd) const;
  void link(const CoverNode& nd) const;
  std::unique_ptr<CellNorm> make_norm(const Vec& z) const;
  std::vector<long> roots_meeting(const Vec& lo, const Vec& hi) const;
  void collect(const CoverNode& nd, const Vec& lo, const Vec& hi, std::vector<const CoverNode*>& out) const;

  StructurePtr S_;
  SequenceParams p_;
  ChartDomain box_;
  std::vector<int> counts_;
  Vec step_;
  mutable std::mutex roots_mu_;
  mutable std::map<long, std::unique_ptr<CoverNode>> roots_;
};

using SequencePtr = std::shared_ptr<const FinslerSequence>;

// Leaves of the cover of diameter < 1/n over the domain.
std::vector<CoverCell> build_cover(StructurePtr S, const ChartDomain& domain, int n);
// Level-n view of a sequence as a metric field.
MetricFieldPtr assemble_F(SequencePtr seq, int n);

// Riemannian variant: blended Gram matrices.
class GramField : public MetricField {
public:
  GramField(SequencePtr seq, int level);
  int dim() const override { return seq_->structure().n(); }
  double value(const Vec& x, const Vec& v) const override;
  Mat gram(const Vec& x) const { return seq_->gram(level_, x); }
  int level() const { return level_; }

private:
  SequencePtr seq_;
  int level_;
};

std::vector<std::shared_ptr<const GramField>> riemannian_variant(SequencePtr seq);

struct ItemReport {
  bool pass = true;
  long checked = 0, failed = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // smallest slack seen
  std::string witness;
  void fail(const std::string& w);
};

struct SequenceReport {
  ItemReport item[4];  // a, b, c, d
  bool all_pass() const { return item[0].pass && item[1].pass && item[2].pass && item[3].pass; }
};

struct ValidateOptions {
  int points = 100;         // sampled x for items a and c
  int dirs = 10;            // sampled v per x
  int transverse_points = 100;  // sampled x for items b and d
  int anchor_dirs = 100;    // v per anchor for item c
  bool all_anchors = false; // item c at every anchor of the cover, not only those met by item a
  int hausdorff_dirs = 64;
  double gn_step_factor = 0.25;  // rank-scan spacing as a fraction of 1/n
  unsigned long long start = 0;
  int jobs = 1;
};

// Grid-scan membership in G_n, tightened by the rank data of the cover: every
// cell containing x lies within 1/n of x, so its sampled ranks must equal
// rank(x). This catches singular sets that the scan grid steps over.
bool in_gn(const FinslerSequence& seq, const Vec& x, int n, double step_factor = 0.25);

SequenceReport validate_sequence(const FinslerSequence& seq, const ValidateOptions& opt = {});

struct ProbeResult {
  Vec x, v;
  std::vector<double> values;  // F_1..F_N
  bool horizontal = false;
  double rho = 0.0;            // +inf when not horizontal
  double gap = 0.0;            // rho - F_N for horizontal probes
  double beta = 0.0;           // transverse size for non-horizontal probes
  double rho_parallel = 0.0;   // rho(x, v') for the horizontal part v'
  std::vector<double> lower;   // beta n - rho(x,v') where x is in G_n, else NaN
  bool monotone = true;
  bool pass = true;
};

std::vector<ProbeResult> convergence_probe(const FinslerSequence& seq, const std::vector<std::pair<Vec, Vec>>& probes,
                                           double gn_step_factor = 0.25);

nlohmann::json sequence_to_json(const FinslerSequence& seq);
nlohmann::json params_to_json(const SequenceParams& p);
SequenceParams params_from_json(const nlohmann::json& j, SequenceParams defaults = {});
// Rebuilds from the stored parameters and checks the stored leaves match.
std::shared_ptr<FinslerSequence> sequence_from_json(const nlohmann::json& j, StructurePtr S);

}  // namespace ccml
