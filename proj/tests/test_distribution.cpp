#include "doctest.h"

#include "ccml/distribution.hpp"
#include "ccml/gallery.hpp"
#include "ccml/sampling.hpp"

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
double euclid(const Vec& v) { return v.norm(); }
}  // namespace

TEST_CASE("rank_radius examples") {
  auto E = builtin("euclidean").structure;
  CHECK(rank_radius(*E, V({0.1, 0.2}), 1.0, 0.05).unbounded());
  auto G = builtin("grushin").structure;
  auto est = rank_radius(*G, V({0.3, 0}), 1.0, 0.01);
  REQUIRE_FALSE(est.unbounded());
  CHECK(*est.r_hat == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(*est.r_hat <= est.r_cap);
  CHECK(rank_radius(*G, V({0, 0.5}), 1.0, 0.01).unbounded());
}

TEST_CASE("gn_membership examples and nesting") {
  auto G = builtin("grushin").structure;
  CHECK(gn_membership(*G, V({0.3, 0}), 4, 0.01));
  CHECK_FALSE(gn_membership(*G, V({0.1, 0}), 4, 0.01));
  for (int n : {1, 3, 12}) CHECK(gn_membership(*G, V({0, 0.7}), n, 0.01));
  for (double x : {0.05, 0.13, 0.31, 0.6}) {
    // The sets grow with n: membership at n implies membership at n + 1.
    for (int n = 1; n < 12; ++n)
      if (gn_membership(*G, V({x, 0.2}), n, 0.01)) CHECK(gn_membership(*G, V({x, 0.2}), n + 1, 0.01));
  }
}

TEST_CASE("orthonormal_frame examples") {
  Mat A(3, 2);
  A << 2, 1, 0, 1, 0, 0;
  auto f = orthonormal_frame(A);
  CHECK((f.w.col(0) - V({1, 0, 0})).norm() < 1e-15);
  CHECK((f.w.col(1) - V({0, 1, 0})).norm() < 1e-15);
  Mat B(3, 1);
  B << 0, 3, 4;
  CHECK((orthonormal_frame(B).w.col(0) - V({0, 0.6, 0.8})).norm() < 1e-15);
  auto G = builtin("grushin").structure;
  auto fg = orthonormal_frame(*G, V({0.5, 0}));
  CHECK((fg.w - Mat::Identity(2, 2)).norm() < 1e-15);
  // Redundant columns are skipped by the pivot selection.
  auto L = builtin("overdetermined_line").structure;
  CHECK(orthonormal_frame(*L, V({0.2})).pivots == std::vector<int>{0});
}

TEST_CASE("orthonormal_frame invariants on random structures") {
  auto H = builtin("martinet").structure;
  for (const auto& x : box_points(H->domain().lower, H->domain().upper, 200)) {
    auto f = orthonormal_frame(*H, x);
    CHECK((f.w.transpose() * f.w - Mat::Identity(f.w.cols(), f.w.cols())).norm() < 1e-12);
    Mat A = H->psi(x);
    for (int p : f.pivots) {
      Vec c = A.col(p);
      CHECK((c - f.w * (f.w.transpose() * c)).norm() <= 1e-10 * std::max(1.0, c.norm()));
    }
  }
}

TEST_CASE("sphere_hausdorff examples") {
  Mat e1 = V({1, 0}), e2 = V({0, 1});
  CHECK(sphere_hausdorff(e1, e1, euclid, 64) == 0.0);
  CHECK(sphere_hausdorff(e1, e2, euclid, 64) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  Mat r = V({std::cos(0.1), std::sin(0.1)});
  CHECK(sphere_hausdorff(e1, r, euclid, 64) == doctest::Approx(2 * std::sin(0.05)).epsilon(1e-12));
  Mat P(3, 2), Q(3, 2);
  P << 1, 0, 0, 1, 0, 0;
  Q << 1, 0, 0, 1, 0, 0.3;
  CHECK(sphere_hausdorff(P, Q, euclid, 200) == doctest::Approx(sphere_hausdorff(Q, P, euclid, 200)).epsilon(1e-15));
  CHECK(sphere_hausdorff(P, Q, euclid, 200) > 0.0);
  CHECK_THROWS(sphere_hausdorff(Mat(3, 0), Q, euclid, 10));
}

TEST_CASE("quantified frame-perturbation bound") {
  // Weighted norm with comparison constant C = max weight.
  auto norm = [](const Vec& v) { return std::sqrt(v[0] * v[0] + 4 * v[1] * v[1] + 9 * v[2] * v[2]); };
  const double C = 3.0, eps = 0.1;
  auto M = builtin("martinet").structure;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.9, 0.9), du(-0.05, 0.05);
  int tested = 0;
  for (int t = 0; t < 300; ++t) {
    Vec xb(3), dx(3);
    xb << u(rng), u(rng), u(rng);
    dx << du(rng), du(rng), du(rng);
    auto fb = orthonormal_frame(*M, xb);
    Mat wx = frame_with_pivots(M->psi(xb + dx), fb.pivots);
    double pert = (fb.w - wx).colwise().norm().maxCoeff();
    if (pert > eps / (C * std::sqrt(2.0))) continue;
    ++tested;
    CHECK(sphere_hausdorff(fb.w, wx, norm, 200) <= eps + 1e-3);
  }
  CHECK(tested > 50);
}
