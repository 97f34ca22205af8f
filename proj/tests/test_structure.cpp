#include "doctest.h"

#include "ccml/gallery.hpp"
#include "ccml/sampling.hpp"
#include "ccml/structure.hpp"

#include <cmath>
#include <random>

using namespace ccml;

namespace {

Vec V(std::initializer_list<double> l) {
  Vec v(l.size());
  int i = 0;
  for (double x : l) v[i++] = x;
  return v;
}

StructurePtr line_structure(FiberNorm sigma, std::vector<double> coeffs) {
  std::vector<PolyField> fs;
  for (double c : coeffs) fs.push_back(PolyField(1, {Polynomial::constant(1, c)}));
  return std::make_shared<SubFinslerStructure>("line", ChartDomain::cube(1, 1.0), fs, sigma, 1);
}

}  // namespace

TEST_CASE("horizontal_norm examples") {
  auto E = builtin("euclidean(3)").structure;
  CHECK(horizontal_norm(*E, V({0.2, -0.1, 0.4}), V({3, 4, 12})).value() == doctest::Approx(13.0).epsilon(1e-14));
  auto H = builtin("heisenberg").structure;
  CHECK(horizontal_norm(*H, V({0, 0, 0}), V({0, 0, 1})).is_infinite());
  auto L = builtin("overdetermined_line").structure;
  CHECK(horizontal_norm(*L, V({0.3}), V({1})).value() == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("horizontal_norm with a position-dependent Gram matrix") {
  // Oracle: KKT closed form u = G^-1 A^T (A G^-1 A^T)^-1 v evaluated in numpy.
  const int n = 2;
  auto x = Polynomial::variable(n, 0), y = Polynomial::variable(n, 1);
  auto c = [&](double v) { return Polynomial::constant(n, v); };
  std::vector<PolyField> fs = {PolyField(n, {c(1), c(0)}), PolyField(n, {c(0), x}), PolyField(n, {y, c(1)})};
  FiberNorm s;
  s.gram = PolyField(n, {c(2), c(0.5), x * 0.1, c(0.5), c(1) + x * x, c(0), x * 0.1, c(0), c(1.5) + y});
  SubFinslerStructure S("gram", ChartDomain::cube(2, 1.0), fs, s, 2);
  CHECK(horizontal_norm(S, V({0.5, 0.3}), V({1, 0.7})).value() == doctest::Approx(1.4783156694505564).epsilon(1e-12));
}

TEST_CASE("weighted p-norm fibers") {
  // Oracle: Hoelder duality 1/||W^-1 a||_q for the single constraint a.u = 1.
  Vec w = V({1, 2, 3});
  auto mk = [&](double p) {
    FiberNorm f = FiberNorm::weighted_p(p, PolyField(1, {Polynomial::constant(1, 1), Polynomial::constant(1, 2),
                                                         Polynomial::constant(1, 3)}));
    return line_structure(f, {1, 2, -1});
  };
  CHECK(horizontal_norm(*mk(1.0), V({0}), V({1})).value() == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(horizontal_norm(*mk(3.0), V({0}), V({1})).value() == doctest::Approx(0.5925343375729123).epsilon(1e-7));
  CHECK(horizontal_norm(*mk(INFINITY), V({0}), V({1})).value() == doctest::Approx(0.42857142857142855).epsilon(1e-8));
}

TEST_CASE("rank and is_horizontal examples") {
  auto E = builtin("euclidean(3)").structure;
  CHECK(rank(*E, V({0.1, 0.2, 0.3})) == 3);
  auto G = builtin("grushin").structure;
  CHECK(rank(*G, V({0, 1})) == 1);
  CHECK(rank(*G, V({0.5, 1})) == 2);
  auto H = builtin("heisenberg").structure;
  for (const auto& x : box_points(H->domain().lower, H->domain().upper, 50)) CHECK(rank(*H, x) == 2);
  CHECK(is_horizontal(*H, V({0.3, 0.1, 0}), V({0, 0, 0})));
  CHECK_FALSE(is_horizontal(*H, V({0, 0, 0}), V({0, 0, 1})));
  CHECK_FALSE(is_horizontal(*G, V({0, 0}), V({0, 1})));
}

TEST_CASE("check_hormander examples") {
  auto E = builtin("euclidean(3)").structure;
  auto pts = box_points(Vec::Constant(3, -1), Vec::Constant(3, 1), 20);
  auto rE = check_hormander(*E, pts, 3);
  CHECK(rE.all_pass());
  CHECK(rE.max_step() == 1);
  auto H = builtin("heisenberg").structure;
  auto rH = check_hormander(*H, pts, 3);
  for (int s : rH.step) CHECK(s == 2);
  auto M = builtin("martinet").structure;
  auto rM = check_hormander(*M, {V({0, 0.3, -0.2}), V({0.4, 0.3, -0.2}), V({-1e-3, 0, 0})}, 3);
  CHECK(rM.step == std::vector<int>{3, 2, 2});
  auto rFail = check_hormander(*M, {V({0, 0, 0})}, 2);
  CHECK(rFail.step[0] == 0);
}

TEST_CASE("lsc_probe examples") {
  auto G = builtin("grushin").structure;
  std::vector<LscSample> tail;
  for (int k = 1; k <= 200; ++k) tail.push_back({V({1.0 / k, 0}), V({0, 1})});
  CHECK(lsc_probe(*G, tail, {V({0, 0}), V({0, 1})}));
  std::vector<LscSample> cst(40, LscSample{V({0.2, 0.1}), V({1, 2})});
  CHECK(lsc_probe(*G, cst, cst.back()));
  auto H = builtin("heisenberg").structure;
  std::vector<LscSample> ht;
  for (int k = 1; k <= 100; ++k) {
    Vec x = V({0.3 + 1.0 / k, -0.2, 0.1});
    ht.push_back({x, H->psi(x) * V({1, 0.5 + 1.0 / k})});
  }
  Vec xl = V({0.3, -0.2, 0.1});
  auto r = lsc_probe_detail(*H, ht, {xl, H->psi(xl) * V({1, 0.5})});
  CHECK(r.pass);
  CHECK(r.liminf_estimate.is_finite());
  // Jump at the singular line: finite limit strictly below the tail values.
  std::vector<LscSample> jump;
  for (int k = 1; k <= 100; ++k) jump.push_back({V({1.0 / k, 0}), V({1, 0.5 / k})});
  auto rj = lsc_probe_detail(*G, jump, {V({0, 0}), V({1, 0})});
  CHECK(rj.pass);
  CHECK(rj.limit_value.value() == doctest::Approx(1.0));
  // Upper semicontinuous-looking data must be rejected.
  std::vector<LscSample> bad(20, LscSample{V({0.5, 0}), V({0.5, 0})});
  CHECK_FALSE(lsc_probe(*G, bad, {V({0.5, 0}), V({1, 0})}));
}

TEST_CASE("fiber norm properties on random samples") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto& name : {"heisenberg", "grushin", "martinet", "heisenberg_linf"}) {
    auto S = builtin(name).structure;
    for (int t = 0; t < 200; ++t) {
      Vec x(S->n()), a(S->d()), b(S->d()), raw(S->n());
      for (int i = 0; i < S->n(); ++i) x[i] = u(rng), raw[i] = u(rng);
      for (int i = 0; i < S->d(); ++i) a[i] = u(rng), b[i] = u(rng);
      Vec v = S->psi(x) * a, w = S->psi(x) * b;
      double c = 3.0 * u(rng);
      if (c == 0.0) c = 1.0;
      auto rv = horizontal_norm(*S, x, v), rcv = horizontal_norm(*S, x, c * v);
      REQUIRE(rv.is_finite());
      CHECK(rcv.value() == doctest::Approx(std::abs(c) * rv.value()).epsilon(1e-8));
      double rw = horizontal_norm(*S, x, w).value(), rs = horizontal_norm(*S, x, v + w).value();
      CHECK(rs <= rv.value() + rw + 1e-8);
      // Finiteness domain agrees with is_horizontal for unit vectors.
      Vec e = raw.normalized();
      CHECK(horizontal_norm(*S, x, e).is_finite() == is_horizontal(*S, x, e));
      CHECK(horizontal_norm(*S, x, 5 * e).is_infinite() == !is_horizontal(*S, x, 5 * e));
    }
  }
}

TEST_CASE("rank is lower semicontinuous along sequences") {
  auto G = builtin("grushin").structure;
  auto M = builtin("martinet").structure;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 100; ++t) {
    Vec lim(2);
    lim << (t % 2 ? 0.0 : u(rng)), u(rng);
    int tail_min = 99;
    for (int k = 30; k < 40; ++k) tail_min = std::min(tail_min, rank(*G, lim + V({0.5 / k, 0.2 / k})));
    CHECK(rank(*G, lim) <= tail_min);
  }
  CHECK(rank(*M, V({0, 0, 0})) == 2);
}

TEST_CASE("GenMetricValue ordering") {
  CHECK(GenMetricValue::finite(1e300) < GenMetricValue::infinite());
  CHECK(GenMetricValue::finite(0) < GenMetricValue::finite(1));
  CHECK(GenMetricValue::infinite() == GenMetricValue::infinite());
}
