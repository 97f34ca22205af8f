#include "doctest.h"

#include "ccml/smoothmap.hpp"

#include <random>

using namespace ccml;

namespace {

Polynomial P(int n, std::vector<Term> t) { return Polynomial(n, std::move(t)); }

PolyField random_cubic_field(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-1, 1);
  std::uniform_int_distribution<int> e(0, 3);
  std::vector<Polynomial> ent;
  for (int i = 0; i < n; ++i) {
    std::vector<Term> ts;
    for (int k = 0; k < 4; ++k) {
      std::vector<int> ex(n);
      int tot = 0;
      for (int j = 0; j < n; ++j) {
        ex[j] = std::min(e(rng), 3 - tot);
        tot += ex[j];
      }
      // Dyadic coefficients keep bracket arithmetic exact.
      ts.push_back({ex, std::round(c(rng) * 8) / 8});
    }
    ent.emplace_back(n, ts);
  }
  return PolyField(n, ent);
}

}  // namespace

TEST_CASE("eval examples") {
  PolyField sq(1, {P(1, {{{2}, 1.0}})});
  CHECK(sq.eval(Vec::Constant(1, 3.0))[0] == 9.0);
  CHECK(PolyField::zero(2, 1).eval(Vec::Ones(2))[0] == 0.0);
  PolyField grushin_col(2, {Polynomial(2), Polynomial::variable(2, 0)});
  Vec x(2);
  x << 0.5, 2;
  CHECK(grushin_col.eval(x)[0] == 0.0);
  CHECK(grushin_col.eval(x)[1] == 0.5);
  CHECK_THROWS_AS(sq.eval(Vec::Ones(2)), DimensionError);
}

TEST_CASE("jacobian examples") {
  PolyField sq(1, {P(1, {{{2}, 1.0}})});
  CHECK(sq.jacobian(Vec::Constant(1, 3.0))(0, 0) == 6.0);
  CHECK(PolyField(2, {Polynomial::constant(2, 4.0)}).jacobian(Vec::Ones(2)).isZero(0));
  PolyField f(2, {P(2, {{{1, 1}, 1.0}}), Polynomial::variable(2, 1)});
  Vec x(2);
  x << 1, 2;
  Mat want(2, 2);
  want << 2, 1, 0, 1;
  CHECK(f.jacobian(x) == want);
}

TEST_CASE("canonical form collects and orders terms") {
  Polynomial a(2, {{{0, 1}, 1.0}, {{2, 0}, 2.0}, {{0, 1}, -1.0}});
  Polynomial b(2, {{{2, 0}, 2.0}});
  CHECK(a == b);
  CHECK((a - b).is_zero());
  Polynomial c(2, {{{0, 0}, 1.0}, {{1, 0}, 1.0}, {{0, 2}, 1.0}});
  REQUIRE(c.terms().size() == 3);
  CHECK(c.terms()[0].exps == std::vector<int>{0, 2});
  CHECK(c.terms()[2].exps == std::vector<int>{0, 0});
}

TEST_CASE("lie brackets of reference fields") {
  const int n = 3;
  auto x = Polynomial::variable(n, 0), y = Polynomial::variable(n, 1);
  auto one = Polynomial::constant(n, 1), zero = Polynomial(n);
  PolyField X1(n, {one, zero, y * -0.5}), X2(n, {zero, one, x * 0.5});
  CHECK(lie_bracket(X1, X1).is_zero());
  CHECK(lie_bracket(X1, X2) == PolyField(n, {zero, zero, one}));

  auto gx = Polynomial::variable(2, 0);
  PolyField G1(2, {Polynomial::constant(2, 1), Polynomial(2)}), G2(2, {Polynomial(2), gx});
  CHECK(lie_bracket(G1, G2) == PolyField(2, {Polynomial(2), Polynomial::constant(2, 1)}));
}

TEST_CASE("lie_hull examples") {
  const int n = 3;
  auto x = Polynomial::variable(n, 0), y = Polynomial::variable(n, 1);
  auto one = Polynomial::constant(n, 1), zero = Polynomial(n);
  PolyField X1(n, {one, zero, y * -0.5}), X2(n, {zero, one, x * 0.5});
  auto h2 = lie_hull({X1, X2}, 2);
  REQUIRE(h2.size() == 3);
  CHECK(h2[2].field == PolyField(n, {zero, zero, one}));
  CHECK(h2[2].step == 2);
  CHECK(lie_hull({X1, X2}, 1).size() == 2);

  PolyField M1(n, {one, zero, zero}), M2(n, {zero, one, x * x});
  auto hm = lie_hull({M1, M2}, 3);
  bool has2x = false, has2 = false;
  for (const auto& h : hm) {
    if (h.field == PolyField(n, {zero, zero, x * 2.0})) has2x = h.step == 2;
    if (h.field == PolyField(n, {zero, zero, Polynomial::constant(n, 2.0)})) has2 = h.step == 3;
  }
  CHECK(has2x);
  CHECK(has2);
}

TEST_CASE("antisymmetry and Jacobi identity on random cubic fields") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto X = random_cubic_field(3, rng), Y = random_cubic_field(3, rng), Z = random_cubic_field(3, rng);
    CHECK(lie_bracket(X, Y) == lie_bracket(Y, X) * -1.0);
    auto J = lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X)) + lie_bracket(Z, lie_bracket(X, Y));
    // Dyadic coefficients: the sum cancels exactly.
    CHECK(J.is_zero());
  }
}

TEST_CASE("jacobian matches central differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    auto F = random_cubic_field(3, rng);
    Vec x(3);
    x << u(rng), u(rng), u(rng);
    Mat J = F.jacobian(x), Jfd(3, 3);
    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
      Vec e = Vec::Unit(3, j) * h;
      Jfd.col(j) = (F.eval(x + e) - F.eval(x - e)) / (2 * h);
    }
    CHECK((J - Jfd).norm() <= 1e-6 * std::max(1.0, J.norm()));
  }
}
