#include "doctest.h"

#include "ccml/gallery.hpp"
#include "ccml/norm_factory.hpp"
#include "ccml/sampling.hpp"

#include <Eigen/Eigenvalues>
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
Vec e(int d, int i) { return Vec::Unit(d, i); }
}  // namespace

TEST_CASE("extend_norm worked example") {
  Mat basis = e(2, 0);
  auto base = explicit_p(1.0, V({2, 2}));
  auto n = extend_norm(basis, base, euclidean_norm(2), 3.0);
  const auto& ext = std::get<Extension>(n->node());
  CHECK(ext.lambda_prime == doctest::Approx(4.0).epsilon(1e-12));
  CHECK((*n)(e(2, 0)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((*n)(e(2, 1)) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK((*n)(V({1, 1})) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK((*n)(e(2, 1)) >= 3.0);
  CHECK((*n)(e(2, 1)) > 1.0);
}

TEST_CASE("extend_norm with full subspace returns the base") {
  Mat basis = Mat::Identity(3, 3);
  auto base = explicit_p(3.0, V({1, 2, 3}));
  auto n = extend_norm(basis, base, zero_norm(3), 1.0);
  for (const auto& v : sphere_directions(3, 200)) CHECK(std::abs((*n)(v) - (*base)(v)) <= 1e-12);
}

TEST_CASE("extend_norm rejects a violated precondition with a witness") {
  Mat basis = e(2, 0);
  auto base = explicit_p(2.0, V({0.5, 0.5}));
  try {
    extend_norm(basis, base, euclidean_norm(2), 1.0);
    FAIL("expected WitnessError");
  } catch (const WitnessError& w) {
    CHECK(w.witness.size() == 2);
  }
}

TEST_CASE("extend_norm guarantees on random instances") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int inst = 0; inst < 10; ++inst) {
    const int d = 3, k = 1 + inst % 2;
    Mat B(d, k);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < k; ++j) B(i, j) = g(rng);
    Mat G = Mat::Identity(d, d) * 2.0;
    for (int i = 0; i < d; ++i) G(i, i) += std::abs(g(rng));
    auto base = quadratic_norm(G);
    auto minorant = explicit_p(1.5, V({0.5, 0.6, 0.7}));
    double lambda = 1.0 + inst;
    auto n = extend_norm(B, base, minorant, lambda);
    Eigen::HouseholderQR<Mat> qr(B);
    Mat Q = qr.householderQ();
    for (const auto& a : sphere_directions(d, 1000)) {
      CHECK((*n)(a) > (*minorant)(a));
      Vec on_v = Q.leftCols(k) * (Q.leftCols(k).transpose() * a);
      if (on_v.norm() > 1e-8) CHECK(std::abs((*n)(on_v) - (*base)(on_v)) <= 1e-12 * std::max(1.0, (*base)(on_v)));
      Vec perp = a - on_v;
      if (perp.norm() > 1e-8) CHECK((*n)(perp / perp.norm()) >= lambda);
    }
  }
}

TEST_CASE("smooth_norm_approx examples") {
  auto eu = smooth_norm_approx(*euclidean_norm(3), 0.01);
  CHECK(eu.deviation <= 1e-14);
  CHECK(eu.norm.power() == 2);

  auto linf = smooth_norm_approx(*explicit_p(INFINITY, V({1, 1})), 0.05);
  CHECK(linf.deviation <= 0.05);
  auto l1 = smooth_norm_approx(*explicit_p(1.0, V({1, 2})), 0.1);
  CHECK(l1.deviation <= 0.1);
  // Independent check on a shifted direction set.
  for (int i = 0; i < 2000; ++i) {
    double t = 2 * M_PI * (i + 0.37) / 2000;
    Vec v = V({std::cos(t), std::sin(t)});
    CHECK(std::abs(l1.norm.value(v) - (std::abs(v[0]) + 2 * std::abs(v[1]))) <= 0.1);
    CHECK(std::abs(linf.norm.value(v) - std::max(std::abs(v[0]), std::abs(v[1]))) <= 0.05);
  }
}

TEST_CASE("SmoothNorm homogeneity and Hessian bound") {
  auto l1 = smooth_norm_approx(*explicit_p(1.0, V({1, 2, 1})), 0.1).norm.with_euclid(0.2);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int i = 0; i < 50; ++i) {
    Vec v = V({g(rng), g(rng), g(rng)});
    v.normalize();
    for (double t : {0.3, -2.0, 7.5})
      CHECK(std::abs(l1.value(t * v) - std::abs(t) * l1.value(v)) <= 1e-12 * std::abs(t) * l1.value(v));
    Eigen::SelfAdjointEigenSolver<Mat> es(l1.hessian_sq(v));
    CHECK(es.eigenvalues().minCoeff() >= 0.2 * 0.2 / 2 - 1e-9);
  }
}

TEST_CASE("anchor norm at the Heisenberg origin") {
  auto H = builtin("heisenberg").structure;
  auto a = build_anchor_norm(H, V({0, 0, 0}), 0.1, 10.0);
  CHECK(a.closeness <= 0.1);
  CHECK(a.norm.value(e(3, 2)) >= 10.0);
  CHECK(a.r_U > 0.0);
  const auto& c = a.constants;
  CHECK((a.lambda + 1) * (1 - c.delta) - c.delta1 > a.lambda);
  CHECK(c.eps2 < c.delta * c.min_n1);
  CHECK(c.delta < c.eps1 / c.max_n1);
  CHECK(verify_anchor(*H, a).all_pass());
}

TEST_CASE("anchor norm for the Euclidean structure") {
  auto E = builtin("euclidean").structure;
  auto a = build_anchor_norm(E, V({0.3, -0.2}), 0.05, 4.0);
  for (const auto& v : sphere_directions(2, 500)) CHECK(std::abs(a.norm.value(v) - 1.0) <= 0.05);
  CHECK(verify_anchor(*E, a).all_pass());
}

TEST_CASE("anchor norm for Grushin at (1,0)") {
  auto G = builtin("grushin").structure;
  auto a = build_anchor_norm(G, V({1, 0}), 0.05, 5.0);
  CHECK(verify_anchor(*G, a).all_pass());
}

TEST_CASE("anchor norm on the Grushin singular line") {
  auto G = builtin("grushin").structure;
  auto a = build_anchor_norm(G, V({0, 0.2}), 0.1, 6.0);
  CHECK(a.norm.value(e(2, 1)) >= 6.0);
  CHECK(verify_anchor(*G, a).all_pass());
}

TEST_CASE("verify_anchor detects constructed failures") {
  auto H = builtin("heisenberg").structure;
  auto a = build_anchor_norm(H, V({0, 0, 0}), 0.1, 10.0);
  auto bad = a;
  bad.eps = a.closeness / 2;
  auto r1 = verify_anchor(*H, bad);
  CHECK_FALSE(r1.item[0]);
  CHECK_FALSE(r1.witness[0].empty());
  auto bad3 = a;
  bad3.lambda = a.norm.value(e(3, 2)) + 1.0;
  auto r3 = verify_anchor(*H, bad3);
  CHECK_FALSE(r3.item[2]);
}
