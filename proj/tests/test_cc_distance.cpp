#include "doctest.h"

#include "ccml/cc_distance.hpp"
#include "ccml/gallery.hpp"

#include <cmath>
#include <numbers>

using namespace ccml;

namespace {
Vec V(std::initializer_list<double> l) {
  Vec v(l.size());
  int i = 0;
  for (double x : l) v[i++] = x;
  return v;
}

const double kDido = 2.0 * std::sqrt(std::numbers::pi);

// Loop centered on the diagonal so it stays inside the unit cube.
Mat dido_controls(int K) { return circle_controls(kDido, K, -std::numbers::pi / 4 - std::numbers::pi / K); }

class EuclidField : public MetricField {
public:
  EuclidField(int n, double scale = 1.0) : n_(n), scale_(scale) {}
  int dim() const override { return n_; }
  double value(const Vec&, const Vec& v) const override { return scale_ * v.norm(); }

private:
  int n_;
  double scale_;
};

CCOptions quick() {
  CCOptions o;
  o.K = 16;
  o.restarts = 3;
  return o;
}

PolyField coord(int n, int j) { return PolyField(n, {Polynomial::variable(n, j)}); }
}  // namespace

TEST_CASE("integration of piecewise constant controls") {
  auto S = builtin("heisenberg").structure;
  Mat U(2, 2);
  U << 1, 0, 0, 1;
  auto p = integrate(*S, Vec::Zero(3), U);
  CHECK((p.endpoint() - V({0.5, 0.5, 0.125})).norm() < 1e-12);
  CHECK(p.states.size() == 2u * 16u + 1u);
  CHECK(cc_length(*S, p) == doctest::Approx(1.0).epsilon(1e-12));

  auto mid = path_at(*S, p, 0.25);
  CHECK((mid.first - V({0.25, 0, 0})).norm() < 1e-12);
  CHECK((mid.second - V({1, 0, 0})).norm() < 1e-12);
  CHECK_THROWS_AS(path_at(*S, p, 1.5), ConfigError);
  CHECK_THROWS_AS(integrate(*S, Vec::Zero(3), 10.0 * U), BoxExitError);
}

TEST_CASE("a Dido loop of length 2 sqrt(pi) lifts to nearly (0,0,1)") {
  auto S = builtin("heisenberg").structure;
  auto p = integrate(*S, Vec::Zero(3), dido_controls(64));
  CHECK(cc_length(*S, p) == doctest::Approx(kDido).epsilon(1e-9));
  CHECK(p.endpoint().head(2).norm() < 1e-9);
  // Regular 64-gon of perimeter 2 sqrt(pi) encloses pi / (64 tan(pi / 64)).
  double ratio = std::numbers::pi / (64 * std::tan(std::numbers::pi / 64));
  CHECK(p.endpoint()[2] == doctest::Approx(ratio).epsilon(1e-6));
}

TEST_CASE("adjoint gradient matches central differences") {
  for (std::string name : {"heisenberg", "grushin", "heisenberg_linf"}) {
    auto S = builtin(name).structure;
    const int d = S->d(), n = S->n(), K = 4;
    Vec y = Vec::Constant(n, 0.3);
    Vec u(d * K);
    for (int i = 0; i < u.size(); ++i) u[i] = 0.2 + 0.1 * std::sin(1.7 * i + 0.3);
    Vec g;
    double f = cc_objective(*S, Vec::Zero(n), y, K, 8, 10.0, u, &g);
    REQUIRE(std::isfinite(f));
    for (int i = 0; i < u.size(); ++i) {
      const double e = 1e-6;
      Vec a = u, b = u;
      a[i] += e;
      b[i] -= e;
      double fd = (cc_objective(*S, Vec::Zero(n), y, K, 8, 10.0, a, nullptr) -
                   cc_objective(*S, Vec::Zero(n), y, K, 8, 10.0, b, nullptr)) / (2 * e);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("cc distance upper bounds on reference pairs") {
  auto H = builtin("heisenberg").structure;
  auto G = builtin("grushin").structure;
  auto r1 = cc_distance_upper(*H, Vec::Zero(3), V({1, 0, 0}), quick());
  CHECK(r1.value == doctest::Approx(1.0).epsilon(0.02));
  CHECK(r1.endpoint_error < 1e-4);
  CHECK(cc_length(*H, r1.path) == doctest::Approx(r1.value).epsilon(1e-12));
  auto r2 = cc_distance_upper(*G, V({0, 0}), V({1, 0}), quick());
  CHECK(r2.value == doctest::Approx(1.0).epsilon(0.02));
  auto r0 = cc_distance_upper(*H, V({0.1, 0.2, 0.3}), V({0.1, 0.2, 0.3}), quick());
  CHECK(r0.value < 1e-6);
}

TEST_CASE("cc upper bound is nearly symmetric and respects the triangle inequality") {
  auto S = builtin("grushin").structure;
  Vec a = V({0.2, -0.3}), b = V({-0.4, 0.1}), c = V({0.5, 0.4});
  auto o = quick();
  double ab = cc_distance_upper(*S, a, b, o).value, ba = cc_distance_upper(*S, b, a, o).value;
  double bc = cc_distance_upper(*S, b, c, o).value, ac = cc_distance_upper(*S, a, c, o).value;
  CHECK(std::abs(ab - ba) < 0.02 * ab);
  CHECK(ac <= (ab + bc) * 1.02);
}

TEST_CASE("stencil offsets are primitive and symmetric") {
  CHECK(stencil_offsets(2, 1).size() == 8u);
  CHECK(stencil_offsets(2, 2).size() == 16u);
  CHECK(stencil_offsets(3, 1).size() == 26u);
  CHECK(stencil_offsets(3, 2).size() == 98u);
  for (auto& o : stencil_offsets(3, 3)) {
    int g = 0;
    for (int c : o) g = std::gcd(g, std::abs(c));
    CHECK(g == 1);
  }
}

TEST_CASE("grid distance for the Euclidean field") {
  GridOptions o;
  o.h = 0.05;
  o.box = ChartDomain::cube(2, 1.0);
  EuclidField E(2), E2(2, 2.0);
  auto r = finsler_distance_grid(E, V({0, 0}), V({1, 0}), o);
  CHECK(r.value == doctest::Approx(1.0).epsilon(0.02));
  CHECK(r.error_bar >= 0.0);
  CHECK(finsler_distance_grid(E2, V({0, 0}), V({1, 0}), o).value == doctest::Approx(2.0 * r.value).epsilon(1e-12));
  CHECK(finsler_distance_grid(E, V({0.3, 0.3}), V({0.3, 0.3}), o).value == 0.0);
  // Diagonal direction: stencil 2 overestimates, finer stencils approach |v|.
  auto d2 = finsler_distance_grid(E, V({-0.5, -0.5}), V({0.5, 0.2}), o).value;
  o.stencil = 4;
  auto d4 = finsler_distance_grid(E, V({-0.5, -0.5}), V({0.5, 0.2}), o).value;
  CHECK(d4 <= d2 + 1e-12);
  CHECK(d4 >= std::hypot(1.0, 0.7) - 1e-12);
  GridOptions nobox;
  CHECK_THROWS_AS(finsler_distance_grid(E, V({0, 0}), V({1, 0}), nobox), ConfigError);
}

TEST_CASE("distance convergence on a Euclidean sequence") {
  SequenceParams p;
  p.levels = 3;
  p.box = ChartDomain::cube(2, 0.5);
  FinslerSequence seq(builtin("euclidean").structure, p);
  GridOptions g;
  g.h = 0.05;
  g.box = p.box;
  auto rep = distance_convergence(seq, V({-0.25, 0}), V({0.25, 0}), {1, 2, 3}, g, quick());
  REQUIRE(rep.rows.size() == 3u);
  CHECK(rep.d_cc == doctest::Approx(0.5).epsilon(1e-3));
  for (auto& row : rep.rows) {
    CHECK(row.monotone);
    CHECK(row.below_cc);
  }
  CHECK(rep.pass());
}

TEST_CASE("metric speed matches sigma along straight and Dido paths") {
  auto S = builtin("heisenberg").structure;
  Mat U(2, 1);
  U << 0.6, -0.3;
  auto straight = integrate(*S, V({0.1, 0.1, 0}), U);
  auto rep = metric_speed_check(*S, straight, {0.2, 0.5}, {1e-1, 1e-2}, 0.03, quick());
  CHECK(rep.pass);
  for (auto& r : rep.rows) CHECK(r.speed == doctest::Approx(std::hypot(0.6, 0.3)).epsilon(1e-9));

  auto dido = integrate(*S, Vec::Zero(3), dido_controls(32));
  auto rd = metric_speed_check(*S, dido, {0.3}, {1e-2}, 0.03, quick());
  CHECK(rd.pass);
  CHECK(rd.worst_rel_error <= 0.03);
}

TEST_CASE("horizontal differential examples") {
  auto H = builtin("heisenberg").structure;
  auto G = builtin("grushin").structure;
  Vec x = V({0.2, -0.1, 0.3});
  CHECK(horizontal_differential(*H, coord(3, 0), x).dual_norm == doctest::Approx(1.0));
  CHECK(horizontal_differential(*H, coord(3, 2), Vec::Zero(3)).dual_norm == doctest::Approx(0.0));
  // dz on the frame is (-y/2, x/2).
  CHECK(horizontal_differential(*H, coord(3, 2), x).dual_norm == doctest::Approx(0.5 * std::hypot(0.2, 0.1)));
  CHECK(horizontal_differential(*G, coord(2, 1), V({0.4, 0})).dual_norm == doctest::Approx(0.4));
  CHECK(horizontal_differential(*G, coord(2, 1), V({0.0, 0.2})).dual_norm == doctest::Approx(0.0));
}

TEST_CASE("lip bound dominates the dual norm") {
  auto S = builtin("heisenberg").structure;
  PolyField xy(3, {Polynomial::variable(3, 0) * Polynomial::variable(3, 1)});
  for (auto f : {coord(3, 0), coord(3, 2), xy}) {
    auto r = lip_bound_check(*S, f, V({0.1, 0.2, 0.0}), 0.05, 32, quick());
    CHECK(r.pass);
    CHECK(r.dual_norm <= r.lip_estimate + 0.05 * r.dual_norm + 1e-6);
  }
}

TEST_CASE("parallelogram defect") {
  auto H = builtin("heisenberg").structure;
  auto L = builtin("heisenberg_linf").structure;
  auto rep = parallelogram_check(*H, 500);
  CHECK(rep.samples == 500);
  CHECK(rep.max_defect <= 1e-9);
  Vec x = Vec::Zero(3), e1 = V({1, 0, 0}), e2 = V({0, 1, 0});
  CHECK(parallelogram_defect(*L, x, e1, e2) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(parallelogram_defect(*L, x, e1, e1) == doctest::Approx(0.0).scale(1.0));
  CHECK(parallelogram_check(*L, 200).max_defect > 0.1);
}
