#include "doctest.h"

#include "ccml/gallery.hpp"
#include "ccml/sampling.hpp"

#include <cmath>

using namespace ccml;

namespace {
Vec V(std::initializer_list<double> l) {
  Vec v(l.size());
  int i = 0;
  for (double x : l) v[i++] = x;
  return v;
}
double rho(const SubFinslerStructure& S, const Vec& x, const Vec& v) { return horizontal_norm(S, x, v).value(); }
}  // namespace

TEST_CASE("every builtin passes the Hormander check within its declared step") {
  for (const auto& name : builtin_names()) {
    auto g = builtin(name);
    const auto& S = *g.structure;
    auto pts = box_points(S.domain().lower, S.domain().upper, 60);
    pts.push_back(S.domain().center());
    auto rep = check_hormander(S, pts, S.declared_step());
    CHECK_MESSAGE(rep.all_pass(), name);
    CHECK(rep.max_step() <= S.declared_step());
  }
}

TEST_CASE("every reference carries a tag and derived ones an oracle") {
  for (const auto& name : builtin_names()) {
    for (const auto& r : builtin(name).references) {
      CHECK(!r.tag.empty());
      if (r.tag == "DERIVED") CHECK(!r.oracle.empty());
    }
  }
}

TEST_CASE("unknown builtin is rejected") {
  CHECK_THROWS_AS(builtin("sphere"), ConfigError);
  CHECK_THROWS_AS(builtin("euclidean(0)"), ConfigError);
}

TEST_CASE("euclidean(n) dimensions") {
  for (int n = 1; n <= 4; ++n) {
    auto S = builtin("euclidean(" + std::to_string(n) + ")").structure;
    CHECK(S->n() == n);
    CHECK(rho(*S, Vec::Zero(n), Vec::Ones(n)) == doctest::Approx(std::sqrt(double(n))).epsilon(1e-14));
  }
}

TEST_CASE("heisenberg fields") {
  auto S = builtin("heisenberg").structure;
  CHECK(S->n() == 3);
  CHECK(S->d() == 2);
  Mat A = S->psi(V({0.4, -0.6, 0.1}));
  CHECK(A(2, 0) == doctest::Approx(0.3));
  CHECK(A(2, 1) == doctest::Approx(0.2));
}

TEST_CASE("grushin references") {
  auto S = builtin("grushin").structure;
  CHECK(rank(*S, V({0, 0.3})) == 1);
  CHECK(rank(*S, V({0.2, 0.3})) == 2);
  for (double x : {0.1, -0.25, 0.5, 0.9})
    CHECK(rho(*S, V({x, 0.4}), V({0, 1})) == doctest::Approx(1.0 / std::abs(x)).epsilon(1e-12));
  CHECK(horizontal_norm(*S, V({0, 0.4}), V({0, 1})).is_infinite());
}

TEST_CASE("overdetermined line reproduces the pseudoinverse norm") {
  auto S = builtin("overdetermined_line").structure;
  CHECK(S->n() == 1);
  CHECK(S->d() == 2);
  for (double x : {-0.7, 0.0, 0.5}) CHECK(rho(*S, V({x}), V({1})) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("martinet step profile") {
  auto S = builtin("martinet").structure;
  auto rep = check_hormander(*S, {V({0, 0.3, -0.2}), V({0.5, 0, 0}), V({-0.1, 0.9, 0.4})}, 3);
  CHECK(rep.step == std::vector<int>{3, 2, 2});
}

TEST_CASE("heisenberg_linf fiber norm") {
  auto S = builtin("heisenberg_linf").structure;
  CHECK(rho(*S, V({0, 0, 0}), V({1, 0, 0})) == doctest::Approx(1.0));
  CHECK(rho(*S, V({0, 0, 0}), V({1, 1, 0})) == doctest::Approx(1.0));
  CHECK(rho(*S, V({0, 0, 0}), V({1, -1, 0})) == doctest::Approx(1.0));
}
