#include "ccml/cc_distance.hpp"

#include "ccml/parallel.hpp"
#include "ccml/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>
#include <random>
#include <unordered_map>

namespace ccml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec field_rhs(const SubFinslerStructure& S, const Vec& x, const Vec& u) { return S.psi(x) * u; }

// (sum_j u_j DX_j(a))^T g
Vec rhs_jac_t(const SubFinslerStructure& S, const Vec& a, const Vec& u, const Vec& g) {
  Vec out = Vec::Zero(a.size());
  for (int j = 0; j < u.size(); ++j)
    if (u[j] != 0.0) out += u[j] * (S.fields()[j].jacobian(a).transpose() * g);
  return out;
}

Vec rk4_step(const SubFinslerStructure& S, const Vec& x, const Vec& u, double h) {
  Vec k1 = field_rhs(S, x, u);
  Vec k2 = field_rhs(S, x + 0.5 * h * k1, u);
  Vec k3 = field_rhs(S, x + 0.5 * h * k2, u);
  Vec k4 = field_rhs(S, x + h * k3, u);
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Reverse pass of one RK4 step: lam is dJ/dx_{next}; returns dJ/dx and adds dJ/du.
Vec rk4_adjoint(const SubFinslerStructure& S, const Vec& x, const Vec& u, double h, const Vec& lam, Vec& gu) {
  Vec k1 = field_rhs(S, x, u);
  Vec a2 = x + 0.5 * h * k1;
  Vec k2 = field_rhs(S, a2, u);
  Vec a3 = x + 0.5 * h * k2;
  Vec k3 = field_rhs(S, a3, u);
  Vec a4 = x + h * k3;
  Vec gk1 = h / 6.0 * lam, gk2 = h / 3.0 * lam, gk3 = h / 3.0 * lam, gk4 = h / 6.0 * lam;
  Vec gx = lam;
  Vec ga4 = rhs_jac_t(S, a4, u, gk4);
  gu += S.psi(a4).transpose() * gk4;
  gx += ga4;
  gk3 += h * ga4;
  Vec ga3 = rhs_jac_t(S, a3, u, gk3);
  gu += S.psi(a3).transpose() * gk3;
  gx += ga3;
  gk2 += 0.5 * h * ga3;
  Vec ga2 = rhs_jac_t(S, a2, u, gk2);
  gu += S.psi(a2).transpose() * gk2;
  gx += ga2;
  gk1 += 0.5 * h * ga2;
  gx += rhs_jac_t(S, x, u, gk1);
  gu += S.psi(x).transpose() * gk1;
  return gx;
}

// Gradient of sigma_x(u)^2 in u.
Vec sigma_sq_grad(const SubFinslerStructure& S, const Vec& x, const Vec& u) {
  if (S.is_sub_riemannian()) return 2.0 * (S.gram(x) * u);
  const Vec w = S.weights(x);
  const double p = S.sigma().p;
  const double s = S.sigma_value(x, u);
  Vec g = Vec::Zero(u.size());
  if (s == 0.0) return g;
  if (std::isinf(p)) {
    int i = 0;
    (w.cwiseProduct(u)).cwiseAbs().maxCoeff(&i);
    g[i] = w[i] * (u[i] > 0 ? 1.0 : -1.0);
  } else {
    for (int i = 0; i < u.size(); ++i) {
      double a = std::abs(w[i] * u[i]);
      if (a == 0.0) continue;
      g[i] = w[i] * (u[i] > 0 ? 1.0 : -1.0) * std::pow(a / s, p - 1.0);
    }
  }
  return 2.0 * s * g;
}

bool sigma_varies(const SubFinslerStructure& S) {
  const auto& sg = S.sigma();
  return S.is_sub_riemannian() ? !(sg.gram.dim_out() == 0 || sg.gram.is_constant())
                               : !(sg.weights.dim_out() == 0 || sg.weights.is_constant());
}

struct Bfgs {
  Vec x;
  double f = kInf;
};

// Quasi-Newton descent with Armijo backtracking; +inf objective values
// (box exits) shrink the step.
Bfgs bfgs(const std::function<double(const Vec&, Vec*)>& fn, Vec x, int max_iters) {
  const long m = x.size();
  Vec g(m);
  double f = fn(x, &g);
  if (!std::isfinite(f)) return {x, f};
  Mat H = Mat::Identity(m, m);
  bool scaled = false;
  int stall = 0;
  for (int it = 0; it < max_iters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + std::abs(f))) break;
    Vec d = -H * g;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      H.setIdentity();
      d = -g;
      slope = -g.squaredNorm();
    }
    double t = 1.0, fn_new = kInf;
    Vec xn, gn(m);
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + t * d;
      fn_new = fn(xn, &gn);
      if (std::isfinite(fn_new) && fn_new <= f + 1e-4 * t * slope) break;
      t *= 0.5;
      fn_new = kInf;
    }
    if (!std::isfinite(fn_new)) break;
    Vec s = xn - x, y = gn - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      double rho = 1.0 / sy;
      Vec Hy = H * y;
      H += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
    stall = (f - fn_new <= 1e-15 * (1.0 + std::abs(f))) ? stall + 1 : 0;
    x = xn;
    g = gn;
    f = fn_new;
    if (stall >= 5) break;
  }
  return {x, f};
}

}  // namespace

// ------------------------------------------------------------------ paths

HorizontalPath integrate(const SubFinslerStructure& S, const Vec& x0, const Mat& controls, int substeps) {
  require_dim(x0.size(), S.n(), "path start");
  require_dim(controls.rows(), S.d(), "path controls");
  if (controls.cols() < 1) throw ConfigError("a path needs at least one segment");
  if (substeps < 1) throw ConfigError("substeps must be >= 1");
  if (!S.domain().contains(x0, 1e-12)) throw BoxExitError("path start lies outside the chart box");
  HorizontalPath p;
  p.x0 = x0;
  p.controls = controls;
  p.substeps = substeps;
  const double h = p.dt();
  p.states.reserve(controls.cols() * substeps + 1);
  p.states.push_back(x0);
  for (int k = 0; k < controls.cols(); ++k) {
    const Vec u = controls.col(k);
    for (int s = 0; s < substeps; ++s) {
      Vec nx = rk4_step(S, p.states.back(), u, h);
      if (!S.domain().contains(nx, 1e-12)) throw BoxExitError("path leaves the chart box");
      p.states.push_back(std::move(nx));
    }
  }
  return p;
}

std::pair<Vec, Vec> path_at(const SubFinslerStructure& S, const HorizontalPath& p, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("path time must lie in [0,1]");
  const int K = p.segments();
  int k = std::min(K - 1, static_cast<int>(std::floor(t * K)));
  const Vec u = p.controls.col(k);
  double tau = t - static_cast<double>(k) / K;
  Vec x = p.states[static_cast<size_t>(k) * p.substeps];
  int steps = std::max(1, static_cast<int>(std::ceil(tau * K * p.substeps)));
  if (tau > 0.0)
    for (int s = 0; s < steps; ++s) x = rk4_step(S, x, u, tau / steps);
  return {x, S.psi(x) * u};
}

double cc_length(const SubFinslerStructure& S, const HorizontalPath& p) {
  const double h = p.dt();
  double L = 0.0;
  auto speed = [&](const Vec& x, const Vec& u) {
    GenMetricValue r = horizontal_norm(S, x, S.psi(x) * u);
    if (r.is_infinite()) throw NumericalError("path velocity is not horizontal within tolerance");
    return r.value();
  };
  for (int k = 0; k < p.segments(); ++k) {
    const Vec u = p.controls.col(k);
    double prev = speed(p.states[static_cast<size_t>(k) * p.substeps], u);
    for (int s = 1; s <= p.substeps; ++s) {
      double cur = speed(p.states[static_cast<size_t>(k) * p.substeps + s], u);
      L += 0.5 * h * (prev + cur);
      prev = cur;
    }
  }
  return L;
}

Mat circle_controls(double length, int K, double phase) {
  if (K < 1) throw ConfigError("circle needs at least one segment");
  Mat U(2, K);
  for (int k = 0; k < K; ++k) {
    double a = phase + 2.0 * std::numbers::pi * (k + 0.5) / K;
    U(0, k) = length * std::cos(a);
    U(1, k) = length * std::sin(a);
  }
  return U;
}

// -------------------------------------------------------------- optimizer

double cc_objective(const SubFinslerStructure& S, const Vec& x, const Vec& y, int K, int substeps, double penalty,
                    const Vec& controls, Vec* grad) {
  const int d = S.d(), n = S.n();
  require_dim(controls.size(), static_cast<long>(d) * K, "control vector");
  const double h = 1.0 / (K * substeps);
  std::vector<Vec> st;
  st.reserve(static_cast<size_t>(K) * substeps + 1);
  st.push_back(x);
  auto U = [&](int k) { return Vec(controls.segment(static_cast<long>(k) * d, d)); };
  for (int k = 0; k < K; ++k) {
    const Vec u = U(k);
    for (int s = 0; s < substeps; ++s) {
      Vec nx = rk4_step(S, st.back(), u, h);
      if (!S.domain().contains(nx, 1e-12) || !nx.allFinite()) return kInf;
      st.push_back(std::move(nx));
    }
  }
  double cost = 0.0;
  for (int k = 0; k < K; ++k) {
    double s = S.sigma_value(st[static_cast<size_t>(k) * substeps], U(k));
    cost += s * s / K;
  }
  const Vec e = st.back() - y;
  const double J = cost + penalty * e.squaredNorm();
  if (!grad) return J;
  grad->setZero(controls.size());
  const bool varies = sigma_varies(S);
  Vec lam = 2.0 * penalty * e;
  for (int k = K - 1; k >= 0; --k) {
    const Vec u = U(k);
    Vec gu = Vec::Zero(d);
    for (int s = substeps - 1; s >= 0; --s) lam = rk4_adjoint(S, st[static_cast<size_t>(k) * substeps + s], u, h, lam, gu);
    const Vec& xs = st[static_cast<size_t>(k) * substeps];
    gu += sigma_sq_grad(S, xs, u) / K;
    if (varies) {
      for (int i = 0; i < n; ++i) {
        Vec a = xs, b = xs;
        double dh = 1e-6 * (1.0 + std::abs(xs[i]));
        a[i] += dh;
        b[i] -= dh;
        double sa = S.sigma_value(a, u), sb = S.sigma_value(b, u);
        lam[i] += (sa * sa - sb * sb) / (2.0 * dh * K);
      }
    }
    grad->segment(static_cast<long>(k) * d, d) = gu;
  }
  return J;
}

CCResult cc_distance_upper(const SubFinslerStructure& S, const Vec& x, const Vec& y, const CCOptions& opt) {
  require_dim(x.size(), S.n(), "cc start");
  require_dim(y.size(), S.n(), "cc end");
  if (!S.domain().contains(x) || !S.domain().contains(y)) throw ConfigError("cc_distance_upper: endpoints must lie in the box");
  if (opt.K < 1 || opt.substeps < 1 || opt.restarts < 1) throw ConfigError("cc_distance_upper: K, substeps and restarts must be >= 1");
  const int d = S.d(), K = opt.K;
  CCResult best;
  if ((x - y).norm() == 0.0) {
    best.path = integrate(S, x, Mat::Zero(d, K), opt.substeps);
    best.best_restart = 0;
    best.restarts_ok = opt.restarts;
    return best;
  }
  // Seed 0: the least-squares horizontal direction towards y, held constant.
  Vec u0 = S.psi(x).completeOrthogonalDecomposition().solve(y - x);
  struct Run {
    bool ok = false;
    double value = kInf, err = kInf;
    Vec u;
  };
  std::vector<Run> runs(opt.restarts);
  parallel_for(runs.size(), opt.jobs, [&](size_t r) {
    const unsigned long long seed = opt.seed + r;
    Vec u(static_cast<long>(d) * K);
    for (int k = 0; k < K; ++k) u.segment(static_cast<long>(k) * d, d) = u0;
    if (seed != 0) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> N(0.0, 1.0);
      double scale = std::max(0.5, (y - x).norm());
      for (long i = 0; i < u.size(); ++i) u[i] += scale * N(rng);
    }
    // Shrink the start until the trajectory stays in the box.
    for (int tries = 0; tries < 40 && !std::isfinite(cc_objective(S, x, y, K, opt.substeps, 0.0, u, nullptr)); ++tries) u *= 0.5;
    double mu = opt.penalty0;
    Vec e;
    for (int round = 0; round < opt.max_rounds; ++round) {
      auto fn = [&](const Vec& v, Vec* g) { return cc_objective(S, x, y, K, opt.substeps, mu, v, g); };
      Bfgs res = bfgs(fn, u, opt.max_iters);
      if (!std::isfinite(res.f)) break;
      u = res.x;
      Mat Um = Eigen::Map<const Mat>(u.data(), d, K);
      HorizontalPath p = integrate(S, x, Um, opt.substeps);
      runs[r].err = (p.endpoint() - y).norm();
      if (runs[r].err < opt.endpoint_tol) {
        runs[r].ok = true;
        runs[r].value = cc_length(S, p);
        runs[r].u = u;
        break;
      }
      mu *= opt.penalty_growth;
    }
  });
  for (size_t r = 0; r < runs.size(); ++r) {
    if (!runs[r].ok) continue;
    ++best.restarts_ok;
    if (best.best_restart < 0 || runs[r].value < best.value) {
      best.best_restart = static_cast<int>(r);
      best.value = runs[r].value;
      best.endpoint_error = runs[r].err;
    }
  }
  if (best.best_restart < 0) {
    double e = kInf;
    for (const auto& r : runs) e = std::min(e, r.err);
    throw NumericalError("cc_distance_upper: no restart reached the endpoint tolerance (best error " +
                         std::to_string(e) + ")");
  }
  const Vec& u = runs[best.best_restart].u;
  best.path = integrate(S, x, Eigen::Map<const Mat>(u.data(), d, K), opt.substeps);
  return best;
}

// ---------------------------------------------------------- grid distance

std::vector<std::vector<int>> stencil_offsets(int n, int radius) {
  if (n < 1 || radius < 1) throw ConfigError("stencil needs dimension >= 1 and radius >= 1");
  std::vector<std::vector<int>> out;
  std::vector<int> o(n, -radius);
  for (;;) {
    int g = 0;
    for (int v : o) g = std::gcd(g, std::abs(v));
    if (g == 1) out.push_back(o);
    int a = n - 1;
    while (a >= 0 && ++o[a] > radius) o[a] = -radius, --a;
    if (a < 0) break;
  }
  return out;
}

namespace {

struct Lattice {
  Vec lo;
  double h = 0.0;
  std::vector<int> m;  // nodes per axis
  long size = 1;

  Lattice(const ChartDomain& box, double h_) : lo(box.lower), h(h_) {
    for (int a = 0; a < box.dim(); ++a) {
      int c = static_cast<int>(std::floor((box.upper[a] - box.lower[a]) / h + 1e-9)) + 1;
      m.push_back(c);
      size *= c;
    }
  }
  int n() const { return static_cast<int>(m.size()); }
  std::vector<int> coords(long idx) const {
    std::vector<int> c(n());
    for (int a = 0; a < n(); ++a) c[a] = static_cast<int>(idx % m[a]), idx /= m[a];
    return c;
  }
  long index(const std::vector<int>& c) const {
    long idx = 0, mul = 1;
    for (int a = 0; a < n(); ++a) idx += c[a] * mul, mul *= m[a];
    return idx;
  }
  Vec point(const std::vector<int>& c) const {
    Vec x(n());
    for (int a = 0; a < n(); ++a) x[a] = lo[a] + c[a] * h;
    return x;
  }
  std::vector<int> snap(const Vec& x) const {
    std::vector<int> c(n());
    for (int a = 0; a < n(); ++a) c[a] = std::clamp(static_cast<int>(std::lround((x[a] - lo[a]) / h)), 0, m[a] - 1);
    return c;
  }
};

// Dijkstra with an edge functor weight(node coords, offset index).
template <class W>
GridResult dijkstra(const Lattice& L, const std::vector<std::vector<int>>& offs, const Vec& x, const Vec& y, W&& weight) {
  GridResult res;
  res.nodes = L.size;
  auto cs = L.snap(x), ct = L.snap(y);
  res.snap_x = (L.point(cs) - x).norm();
  res.snap_y = (L.point(ct) - y).norm();
  const long s = L.index(cs), t = L.index(ct);
  std::vector<double> dist(L.size, kInf);
  std::vector<long> pred(L.size, -1);
  std::vector<int> pred_off(L.size, -1);
  std::vector<char> done(L.size, 0);
  using QE = std::pair<double, long>;
  std::priority_queue<QE, std::vector<QE>, std::greater<QE>> pq;
  dist[s] = 0.0;
  pq.push({0.0, s});
  const int n = L.n();
  std::vector<int> c(n), nb(n);
  while (!pq.empty()) {
    auto [du, u] = pq.top();
    pq.pop();
    if (done[u]) continue;
    done[u] = 1;
    ++res.settled;
    if (u == t) break;
    c = L.coords(u);
    for (size_t j = 0; j < offs.size(); ++j) {
      bool inside = true;
      for (int a = 0; a < n; ++a) {
        nb[a] = c[a] + offs[j][a];
        if (nb[a] < 0 || nb[a] >= L.m[a]) inside = false;
      }
      if (!inside) continue;
      long v = L.index(nb);
      if (done[v]) continue;
      double nd = du + weight(c, static_cast<int>(j));
      if (nd < dist[v]) {
        dist[v] = nd;
        pred[v] = u;
        pred_off[v] = static_cast<int>(j);
        pq.push({nd, v});
      }
    }
  }
  if (!std::isfinite(dist[t])) throw NumericalError("finsler_distance_grid: target not reachable on the lattice");
  res.value = dist[t];
  // Error bar: local metric scale along the path times snap and one cell.
  double M = 0.0;
  for (long v = t; v != s; v = pred[v]) {
    const auto& o = offs[pred_off[v]];
    double len = 0.0;
    for (int a : o) len += static_cast<double>(a) * a;
    M = std::max(M, weight(L.coords(pred[v]), pred_off[v]) / (std::sqrt(len) * L.h));
  }
  if (s == t) M = 0.0;
  res.error_bar = M * (res.snap_x + res.snap_y + L.h);
  return res;
}

void check_grid(const ChartDomain& box, const Vec& x, const Vec& y, const GridOptions& opt) {
  if (!(opt.h > 0.0)) throw ConfigError("grid spacing must be positive");
  if (opt.stencil < 1) throw ConfigError("stencil radius must be >= 1");
  require_dim(x.size(), box.dim(), "grid start");
  require_dim(y.size(), box.dim(), "grid end");
  if (!box.contains(x, 1e-12) || !box.contains(y, 1e-12)) throw ConfigError("grid endpoints must lie in the lattice box");
}

}  // namespace

GridResult finsler_distance_grid(const MetricField& F, const Vec& x, const Vec& y, const GridOptions& opt) {
  if (!opt.box) throw ConfigError("finsler_distance_grid needs a lattice box");
  check_grid(*opt.box, x, y, opt);
  Lattice L(*opt.box, opt.h);
  const auto offs = stencil_offsets(L.n(), opt.stencil);
  return dijkstra(L, offs, x, y, [&](const std::vector<int>& c, int j) {
    Vec step(L.n()), mid(L.n());
    for (int a = 0; a < L.n(); ++a) {
      step[a] = offs[j][a] * L.h;
      mid[a] = L.lo[a] + (c[a] + 0.5 * offs[j][a]) * L.h;
    }
    return F.value(mid, step);
  });
}

std::vector<GridResult> finsler_distance_grid(const FinslerSequence& seq, const std::vector<int>& levels, const Vec& x,
                                              const Vec& y, const GridOptions& opt, bool riemannian) {
  const ChartDomain box = opt.box ? *opt.box : seq.box();
  check_grid(box, x, y, opt);
  for (int a = 0; a < box.dim(); ++a)
    if (box.lower[a] < seq.box().lower[a] - 1e-12 || box.upper[a] > seq.box().upper[a] + 1e-12)
      throw ConfigError("grid box must lie inside the sequence box");
  for (int l : levels)
    if (l < 1 || l > seq.levels()) throw ConfigError("grid level out of range");
  if (riemannian && !seq.structure().is_sub_riemannian()) throw ConfigError("Gram fields need a Hilbert fiber norm");
  Lattice L(box, opt.h);
  const int n = L.n();
  const auto offs = stencil_offsets(n, opt.stencil);

  // Partition-of-unity weights on the half lattice, computed on first use.
  std::vector<long> hm(n);
  long hsize = 1;
  for (int a = 0; a < n; ++a) hm[a] = 2L * L.m[a] - 1, hsize *= hm[a];
  std::vector<int> first(hsize, -1);
  std::vector<unsigned char> count(hsize, 0);
  std::vector<std::pair<int, double>> weights;
  std::unordered_map<const CoverNode*, int> ids;
  std::vector<const CoverNode*> leaves;
  const bool quadratic = seq.structure().is_sub_riemannian();

  // Quadratic forms packed as upper triangles; off-diagonal entries doubled.
  const int np = n * (n + 1) / 2;
  std::vector<std::vector<double>> prods(offs.size(), std::vector<double>(np));
  for (size_t j = 0; j < offs.size(); ++j)
    for (int a = 0, t = 0; a < n; ++a)
      for (int b = a; b < n; ++b, ++t) prods[j][t] = offs[j][a] * offs[j][b] * L.h * L.h;
  int level = 0;
  std::vector<double> Q;
  auto ensure_q = [&] {
    while (Q.size() < leaves.size() * np) {
      Mat G = leaves[Q.size() / np]->norm().gram(level);
      for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b) Q.push_back(a == b ? G(a, a) : G(a, b) + G(b, a));
    }
  };
  auto blend_at = [&](long hidx, const std::vector<int>& hc) {
    if (first[hidx] >= 0) return;
    Vec p(n);
    for (int a = 0; a < n; ++a) p[a] = L.lo[a] + 0.5 * hc[a] * L.h;
    auto w = seq.blend(p);
    if (w.size() > 255) throw NumericalError("too many overlapping cells at a lattice point");
    first[hidx] = static_cast<int>(weights.size());
    count[hidx] = static_cast<unsigned char>(w.size());
    for (const auto& e : w) {
      auto it = ids.find(e.leaf);
      int id;
      if (it == ids.end()) {
        id = static_cast<int>(leaves.size());
        ids.emplace(e.leaf, id);
        leaves.push_back(e.leaf);
      } else {
        id = it->second;
      }
      weights.push_back({id, e.phi});
    }
  };

  std::vector<GridResult> out;
  std::vector<int> hc(n);
  Vec step(n);
  for (int l : levels) {
    level = l;
    Q.clear();
    out.push_back(dijkstra(L, offs, x, y, [&](const std::vector<int>& c, int j) {
      long hidx = 0, mul = 1;
      for (int a = 0; a < n; ++a) {
        hc[a] = 2 * c[a] + offs[j][a];
        hidx += hc[a] * mul;
        mul *= hm[a];
        step[a] = offs[j][a] * L.h;
      }
      blend_at(hidx, hc);
      const int f0 = first[hidx], cnt = count[hidx];
      double acc = 0.0;
      if (quadratic) {
        ensure_q();
        const double* pr = prods[j].data();
        for (int e = 0; e < cnt; ++e) {
          const auto& [id, phi] = weights[f0 + e];
          const double* q = &Q[static_cast<size_t>(id) * np];
          double s = 0.0;
          for (int t = 0; t < np; ++t) s += q[t] * pr[t];
          acc += riemannian ? phi * s : phi * std::sqrt(std::max(0.0, s));
        }
        return riemannian ? std::sqrt(std::max(0.0, acc)) : acc;
      }
      for (int e = 0; e < cnt; ++e) acc += weights[f0 + e].second * leaves[weights[f0 + e].first]->norm().value(level, step);
      return acc;
    }));
  }
  return out;
}

// ----------------------------------------------------------- convergence

bool ConvergenceReport::pass() const {
  for (const auto& r : rows)
    if (!r.monotone || !r.below_cc) return false;
  return true;
}

ConvergenceReport distance_convergence(const FinslerSequence& seq, const Vec& x, const Vec& y,
                                       const std::vector<int>& levels, const GridOptions& grid, const CCOptions& cc,
                                       bool riemannian) {
  ConvergenceReport rep;
  const auto& S = seq.structure();
  if ((x - y).norm() == 0.0) {
    for (int l : levels) rep.rows.push_back({l, 0.0, 0.0, true, true});
    return rep;
  }
  auto ccr = cc_distance_upper(S, x, y, cc);
  rep.d_cc = ccr.value;
  rep.endpoint_error = ccr.endpoint_error;
  // The endpoint misses y by e; a CC ball of Euclidean radius e has CC radius of order e^(1/step).
  rep.cc_slack = 4.0 * std::pow(ccr.endpoint_error, 1.0 / std::max(1, S.declared_step()));
  auto grid_rows = finsler_distance_grid(seq, levels, x, y, grid, riemannian);
  for (size_t i = 0; i < levels.size(); ++i) {
    ConvergenceRow r{levels[i], grid_rows[i].value, grid_rows[i].error_bar, true, true};
    if (i > 0) r.monotone = r.value >= rep.rows.back().value - (r.error_bar + rep.rows.back().error_bar);
    r.below_cc = r.value - r.error_bar <= rep.d_cc + rep.cc_slack;
    rep.rows.push_back(r);
  }
  if (!rep.rows.empty()) rep.final_gap = rep.d_cc - rep.rows.back().value;
  return rep;
}

SpeedReport metric_speed_check(const SubFinslerStructure& S, const HorizontalPath& p, const std::vector<double>& ts,
                               const std::vector<double>& hs, double tol, const CCOptions& cc) {
  SpeedReport rep;
  if (hs.empty()) throw ConfigError("metric_speed_check needs at least one h");
  const double hmin = *std::min_element(hs.begin(), hs.end());
  for (double t : ts) {
    auto [xt, vt] = path_at(S, p, t);
    GenMetricValue sp = horizontal_norm(S, xt, vt);
    if (sp.is_infinite()) throw NumericalError("path velocity is not horizontal");
    for (double h : hs) {
      if (!(h > 0.0) || t + h > 1.0) throw ConfigError("metric_speed_check needs 0 < h and t + h <= 1");
      Vec xh = path_at(S, p, t + h).first;
      CCOptions o = cc;
      o.endpoint_tol = cc.endpoint_tol * h;
      double q = cc_distance_upper(S, xt, xh, o).value / h;
      SpeedRow r{t, h, q, sp.value(), 0.0};
      r.rel_error = sp.value() > 0.0 ? std::abs(q - sp.value()) / sp.value() : std::abs(q);
      if (h == hmin) rep.worst_rel_error = std::max(rep.worst_rel_error, r.rel_error);
      rep.rows.push_back(r);
    }
  }
  rep.pass = rep.worst_rel_error <= tol;
  return rep;
}

// ---------------------------------------------------- horizontal calculus

HorizontalDifferential horizontal_differential(const SubFinslerStructure& S, const PolyField& f, const Vec& x) {
  require_dim(f.dim_in(), S.n(), "function");
  if (f.dim_out() != 1) throw DimensionError("horizontal_differential needs a scalar function");
  const Mat A = S.psi(x);
  if (numerical_rank(A) < 1) throw ConfigError("horizontal_differential needs rank >= 1");
  const Vec grad = f.jacobian(x).row(0).transpose();
  HorizontalDifferential hd;
  hd.coefficients = range_split(A).range.transpose() * grad;
  // max{df[psi u] : sigma(u) <= 1} is the dual norm of sigma at psi^T df.
  hd.dual_norm = S.sigma_dual(x, A.transpose() * grad);
  return hd;
}

std::vector<LipSample> lip_samples(const SubFinslerStructure& S, const Vec& x, double radius, int budget,
                                   const CCOptions& cc) {
  if (!(radius > 0.0) || budget < 1) throw ConfigError("lip_bound_check needs positive radius and budget");
  std::vector<LipSample> out;
  // Constant-control curves: their length bounds d_CC from above.
  for (const auto& u : sphere_directions(S.d(), budget)) {
    try {
      HorizontalPath p = integrate(S, x, radius * u, 16);
      out.push_back({p.endpoint(), cc_length(S, p)});
    } catch (const BoxExitError&) {
    }
  }
  // A few generic nearby targets through the optimizer. The returned path's
  // endpoint is used as the sample, so its length is a rigorous upper bound.
  CCOptions o = cc;
  o.K = std::min(cc.K, 8);
  o.restarts = 1;
  for (const auto& y : ball_points(x, radius, std::max(1, budget / 32), 1)) {
    if (!S.domain().contains(y)) continue;
    try {
      CCResult r = cc_distance_upper(S, x, y, o);
      out.push_back({r.path.endpoint(), r.value});
    } catch (const NumericalError&) {
    }
  }
  return out;
}

LipReport lip_bound_check(const SubFinslerStructure& S, const PolyField& f, const Vec& x,
                          const std::vector<LipSample>& samples) {
  LipReport rep;
  rep.dual_norm = horizontal_differential(S, f, x).dual_norm;
  const double fx = f.eval(x)[0];
  for (const auto& s : samples) {
    if (!(s.d_upper > 0.0)) continue;
    rep.lip_estimate = std::max(rep.lip_estimate, std::abs(f.eval(s.y)[0] - fx) / s.d_upper);
    ++rep.samples;
  }
  rep.tolerance = 0.05 * rep.dual_norm + 1e-6;
  rep.pass = rep.dual_norm <= rep.lip_estimate + rep.tolerance;
  return rep;
}

LipReport lip_bound_check(const SubFinslerStructure& S, const PolyField& f, const Vec& x, double radius, int budget,
                          const CCOptions& cc) {
  return lip_bound_check(S, f, x, lip_samples(S, x, radius, budget, cc));
}

double parallelogram_defect(const SubFinslerStructure& S, const Vec& x, const Vec& v, const Vec& w) {
  auto r = [&](const Vec& a) {
    GenMetricValue g = horizontal_norm(S, x, a);
    if (g.is_infinite()) throw ConfigError("parallelogram_defect needs horizontal vectors");
    return g.value();
  };
  double a = r(v + w), b = r(v - w), c = r(v), d = r(w);
  return std::abs(a * a + b * b - 2.0 * c * c - 2.0 * d * d);
}

ParallelogramReport parallelogram_check(const SubFinslerStructure& S, int budget, unsigned long long start) {
  ParallelogramReport rep;
  const auto xs = box_points(S.domain().lower, S.domain().upper, budget, start);
  const auto us = ball_points(Vec::Zero(S.d()), 1.0, 2 * budget, start + 1);
  rep.max_defect = -1.0;
  for (int i = 0; i < budget; ++i) {
    const Vec& x = xs[i];
    const Mat A = S.psi(x);
    Vec v = A * us[2 * i], w = A * us[2 * i + 1];
    double scale = horizontal_norm(S, x, v).value() + horizontal_norm(S, x, w).value();
    if (!(scale > 0.0)) continue;
    double def = parallelogram_defect(S, x, v, w) / (1.0 + scale * scale);
    ++rep.samples;
    if (def > rep.max_defect) {
      rep.max_defect = def;
      rep.x = x;
      rep.v = v;
      rep.w = w;
    }
  }
  rep.max_defect = std::max(0.0, rep.max_defect);
  return rep;
}

}  // namespace ccml
