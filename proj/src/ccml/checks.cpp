#include "ccml/checks.hpp"

#include "ccml/distribution.hpp"
#include "ccml/sampling.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace ccml {

namespace {

std::string vstr(const Vec& v) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (int i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ")";
  return os.str();
}

class Timer {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

Vec gaussian(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

}  // namespace

void CheckResult::fail(const std::string& w) {
  pass = false;
  ++failed;
  if (witness.empty()) witness = w;
}

nlohmann::json CheckResult::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["structure"] = structure;
  j["pass"] = pass;
  j["expected_fail"] = expected_fail;
  j["checked"] = checked;
  j["failed"] = failed;
  j["worst"] = std::isfinite(worst) ? nlohmann::json(worst) : nlohmann::json(nullptr);
  j["tolerance"] = tolerance;
  j["witness"] = witness;
  return j;
}

std::vector<CheckResult> sequence_checks(const FinslerSequence& seq, const ValidateOptions& opt) {
  Timer t;
  SequenceReport rep = validate_sequence(seq, opt);
  static const char* names[4] = {"sandwich", "transverse", "anchor_closeness", "frame_closeness"};
  std::vector<CheckResult> out;
  for (int i = 0; i < 4; ++i) {
    CheckResult c;
    c.name = names[i];
    c.structure = seq.structure().name();
    c.pass = rep.item[i].pass;
    c.checked = rep.item[i].checked;
    c.failed = rep.item[i].failed;
    c.worst = rep.item[i].worst_margin;
    c.tolerance = 0.0;  // worst is the smallest slack; pass needs it >= 0
    c.witness = rep.item[i].witness;
    c.seconds = t.seconds();
    out.push_back(c);
  }
  return out;
}

CheckResult transverse_literal(const FinslerSequence& seq, const std::vector<Vec>& points, const Vec& v,
                               bool require_gn, double gn_step_factor) {
  Timer t;
  CheckResult c;
  c.name = "transverse_literal";
  c.structure = seq.structure().name();
  c.worst = std::numeric_limits<double>::infinity();
  const int N = seq.levels();
  for (const auto& x : points) {
    auto w = seq.blend(x);
    const auto fs = FinslerSequence::values(N, w, v);
    for (int l = 1; l <= N; ++l) {
      if (require_gn && !in_gn(seq, x, l, gn_step_factor)) continue;
      ++c.checked;
      c.worst = std::min(c.worst, fs[l] - l);
      if (!(fs[l] >= l)) {
        std::ostringstream os;
        os.precision(17);
        os << "n=" << l << " x=" << vstr(x) << " F_n=" << fs[l];
        c.fail(os.str());
      }
    }
  }
  c.seconds = t.seconds();
  return c;
}

CheckResult norm_lemma_suite(int instances, int samples, unsigned long long seed) {
  Timer t;
  CheckResult c;
  c.name = "norm_lemma";
  c.structure = "random";
  c.tolerance = 1e-12;
  const double ps[] = {1.0, 1.5, 2.0, 3.0, 4.5, std::numeric_limits<double>::infinity()};
  for (int inst = 0; inst < instances; ++inst) {
    std::mt19937_64 rng(seed * 1000003ULL + inst);
    std::uniform_int_distribution<int> dd(2, 6), pi(0, 5);
    std::uniform_real_distribution<double> uw(0.5, 2.0), ul(1.0, 10.0), us(0.3, 0.95);
    const int d = dd(rng);
    const int k = std::uniform_int_distribution<int>(1, d)(rng);
    Mat Vb(d, k);
    for (int j = 0; j < k; ++j) Vb.col(j) = gaussian(rng, d);
    const double p1 = ps[pi(rng)], p2 = ps[pi(rng)];
    Vec w1(d), w2(d);
    for (int i = 0; i < d; ++i) w1[i] = uw(rng), w2[i] = uw(rng);
    // Comparison of weighted p-norms with the Euclidean norm on R^d.
    auto lo_c = [&](double p) { return std::pow(static_cast<double>(d), std::min(0.0, 1.0 / p - 0.5)); };
    auto hi_c = [&](double p) { return std::pow(static_cast<double>(d), std::max(0.0, 1.0 / p - 0.5)); };
    const double base_min = w1.minCoeff() * lo_c(p1), minor_max = w2.maxCoeff() * hi_c(p2);
    w2 *= us(rng) * base_min / minor_max;
    const double lambda = ul(rng);
    auto base = explicit_p(p1, w1);
    auto minorant = explicit_p(p2, w2);
    std::ostringstream tag;
    tag << "instance=" << inst << " d=" << d << " k=" << k << " p=" << p1 << "/" << p2 << " lambda=" << lambda;
    NormPtr nrm;
    try {
      nrm = extend_norm(Vb, base, minorant, lambda);
    } catch (const WitnessError& e) {
      c.fail(tag.str() + " precondition witness " + vstr(e.witness));
      continue;
    }
    Eigen::HouseholderQR<Mat> qr(Vb);
    const Mat Q = qr.householderQ();
    const Mat Qv = Q.leftCols(k), Qp = Q.rightCols(d - k);
    for (const auto& q : sphere_directions(k, samples)) {
      Vec v = Qv * q;
      double a = (*nrm)(v), b = (*base)(v);
      ++c.checked;
      c.worst = std::max(c.worst, std::abs(a - b) / std::max(1.0, b));
      if (!(std::abs(a - b) <= 1e-12 * std::max(1.0, b))) c.fail(tag.str() + " n != base at " + vstr(v));
    }
    for (const auto& v : sphere_directions(d, samples)) {
      ++c.checked;
      if (!((*nrm)(v) > (*minorant)(v))) c.fail(tag.str() + " n <= minorant at " + vstr(v));
    }
    if (d > k)
      for (const auto& q : sphere_directions(d - k, samples)) {
        Vec v = Qp * q;
        ++c.checked;
        if (!((*nrm)(v) >= lambda)) c.fail(tag.str() + " n < lambda on the complement at " + vstr(v));
      }
  }
  c.seconds = t.seconds();
  return c;
}

CheckResult frame_perturbation_check(const SubFinslerStructure& S, double eps, int trials, double max_step,
                                     unsigned long long seed) {
  Timer t;
  CheckResult c;
  c.name = "frame_perturbation";
  c.structure = S.name();
  c.tolerance = eps + 1e-3;
  const int n = S.n();
  const ChartDomain& box = S.domain();
  const double C = 1.0;  // Euclidean norm
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0), du(-max_step, max_step);
  NormFn euclid = [](const Vec& v) { return v.norm(); };
  for (int tr = 0; tr < trials; ++tr) {
    Vec xb(n), x(n);
    for (int i = 0; i < n; ++i) {
      xb[i] = box.lower[i] + u(rng) * (box.upper[i] - box.lower[i]);
      x[i] = std::clamp(xb[i] + du(rng), box.lower[i], box.upper[i]);
    }
    const int k = rank(S, xb);
    if (k < 1 || rank(S, x) != k) continue;
    Frame fb = orthonormal_frame(S, xb);
    Mat wx;
    try {
      wx = frame_with_pivots(S.psi(x), fb.pivots);
    } catch (const NumericalError&) {
      continue;
    }
    double pert = (fb.w - wx).colwise().norm().maxCoeff();
    if (pert > eps / (C * std::sqrt(static_cast<double>(k)))) continue;
    ++c.checked;
    double h = sphere_hausdorff(fb.w, wx, euclid, 200);
    c.worst = std::max(c.worst, h);
    if (!(h <= eps + 1e-3)) c.fail("xb=" + vstr(xb) + " x=" + vstr(x) + " hausdorff=" + std::to_string(h));
  }
  if (c.checked == 0) c.fail("no pair met the frame perturbation bound");
  c.seconds = t.seconds();
  return c;
}

CheckResult lsc_suite(const SubFinslerStructure& S, int count, unsigned long long seed) {
  Timer t;
  CheckResult c;
  c.name = "lsc";
  c.structure = S.name();
  c.tolerance = 1e-6;
  const int n = S.n(), d = S.d();
  const ChartDomain& box = S.domain();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::uniform_int_distribution<int> kind(0, 2);
  for (int i = 0; i < count; ++i) {
    Vec x(n);
    for (int a = 0; a < n; ++a) x[a] = box.lower[a] + u(rng) * (box.upper[a] - box.lower[a]);
    // A third of the limits sit on the hyperplane where the gallery's rank drops.
    if (i % 3 == 0) x[0] = 0.5 * (box.lower[0] + box.upper[0]);
    const Vec dx = 0.1 * gaussian(rng, n).normalized();
    const Vec uu = gaussian(rng, d), du = gaussian(rng, d);
    const Vec dv = gaussian(rng, n);
    const int kd = kind(rng);
    LscSample limit{x, kd == 2 ? Vec(gaussian(rng, n)) : Vec(S.psi(x) * uu)};
    std::vector<LscSample> tail;
    // Geometric convergence: the last quarter of the tail lies within about
    // 1e-11 of the limit, below the probe's fixed 1e-6 slack.
    for (int k = 1; k <= 64; ++k) {
      const double r = std::pow(2.0, -0.75 * k);
      Vec xk = x + r * dx;
      Vec vk = kd == 0 ? Vec(S.psi(xk) * (uu + r * du)) : Vec(limit.v + r * dv);
      tail.push_back({xk, vk});
    }
    auto r = lsc_probe_detail(S, tail, limit);
    ++c.checked;
    if (r.limit_value.is_finite() && r.liminf_estimate.is_finite())
      c.worst = std::max(c.worst, r.limit_value.value() - r.liminf_estimate.value());
    if (!r.pass) c.fail("x=" + vstr(x) + " v=" + vstr(limit.v));
  }
  c.seconds = t.seconds();
  return c;
}

CheckResult hormander_regression(const SubFinslerStructure& S, const std::vector<Vec>& samples,
                                 const std::function<int(const Vec&)>& expected_step) {
  Timer t;
  CheckResult c;
  c.name = "hormander";
  c.structure = S.name();
  int smax = 1;
  for (const auto& x : samples) smax = std::max(smax, expected_step(x));
  auto rep = check_hormander(S, samples, smax + 1);
  for (size_t i = 0; i < samples.size(); ++i) {
    ++c.checked;
    int want = expected_step(samples[i]);
    c.worst = std::max(c.worst, static_cast<double>(rep.step[i]));
    if (rep.step[i] != want)
      c.fail("x=" + vstr(samples[i]) + " step=" + std::to_string(rep.step[i]) + " expected=" + std::to_string(want));
  }
  c.seconds = t.seconds();
  return c;
}

CheckResult differential_bound(const SubFinslerStructure& S, const std::vector<PolyField>& fs,
                               const std::vector<Vec>& points, double radius, int budget, const CCOptions& cc) {
  Timer t;
  CheckResult c;
  c.name = "differential_bound";
  c.structure = S.name();
  c.tolerance = 0.0;
  c.worst = -std::numeric_limits<double>::infinity();
  for (const auto& x : points) {
    const auto samples = lip_samples(S, x, radius, budget, cc);
    for (size_t fi = 0; fi < fs.size(); ++fi) {
      auto r = lip_bound_check(S, fs[fi], x, samples);
      ++c.checked;
      double excess = r.dual_norm - (r.lip_estimate + 0.05 * r.dual_norm + 1e-6);
      c.worst = std::max(c.worst, excess);
      if (!(excess <= 0.0))
        c.fail("f#" + std::to_string(fi) + " x=" + vstr(x) + " dual=" + std::to_string(r.dual_norm) +
               " lip=" + std::to_string(r.lip_estimate));
    }
  }
  c.seconds = t.seconds();
  return c;
}

CheckResult parallelogram_suite(const SubFinslerStructure& S, int budget, double tol) {
  Timer t;
  CheckResult c;
  c.name = "parallelogram";
  c.structure = S.name();
  c.tolerance = tol;
  auto rep = parallelogram_check(S, budget);
  c.checked = rep.samples;
  c.worst = rep.max_defect;
  if (!(rep.max_defect <= tol)) {
    c.fail("x=" + vstr(rep.x) + " v=" + vstr(rep.v) + " w=" + vstr(rep.w) + " defect=" + std::to_string(rep.max_defect));
    c.failed = 1;
  }
  c.seconds = t.seconds();
  return c;
}

CheckResult speed_suite(const SubFinslerStructure& S, const HorizontalPath& p, const std::vector<double>& ts, double h,
                        double tol, const CCOptions& cc) {
  Timer t;
  CheckResult c;
  c.name = "metric_speed";
  c.structure = S.name();
  c.tolerance = tol;
  auto rep = metric_speed_check(S, p, ts, {h}, tol, cc);
  for (const auto& r : rep.rows) {
    ++c.checked;
    c.worst = std::max(c.worst, r.rel_error);
    if (!(r.rel_error <= tol))
      c.fail("t=" + std::to_string(r.t) + " quotient=" + std::to_string(r.quotient) + " speed=" + std::to_string(r.speed));
  }
  c.seconds = t.seconds();
  return c;
}

std::vector<double> times_off_breakpoints(int K, int count, double h) {
  if (K < 1 || count < 1 || !(h > 0.0)) throw ConfigError("times_off_breakpoints needs K, count and h positive");
  const double seg = 1.0 / K, m = 0.1 * seg;
  if (h + 2 * m >= seg) throw ConfigError("h does not fit inside one control segment");
  std::vector<double> out;
  for (unsigned long long i = 1; static_cast<int>(out.size()) < count; ++i) {
    double t = radical_inverse(i, 2);
    int k = static_cast<int>(std::floor(t * K));
    double a = k * seg;
    if (t - a >= m && t + h <= a + seg - m && t + h <= 1.0) out.push_back(t);
  }
  return out;
}

Mat dido_controls(int K) {
  const double L = 2.0 * std::sqrt(std::numbers::pi);
  return circle_controls(L, K, -std::numbers::pi / 4 - std::numbers::pi / K);
}

}  // namespace ccml
