#include "doctest.h"

#include "ccml/finsler_seq.hpp"
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

CoverCell make_cell(Vec lo, Vec hi, double margin) {
  CoverCell c;
  c.core_lo = lo;
  c.core_hi = hi;
  c.lo = lo.array() - margin;
  c.hi = hi.array() + margin;
  c.z = 0.5 * (lo + hi);
  return c;
}

SequencePtr make_seq(const std::string& name, int levels, std::optional<ChartDomain> box = std::nullopt) {
  SequenceParams p;
  p.levels = levels;
  p.box = box;
  return std::make_shared<FinslerSequence>(builtin(name).structure, p);
}
}  // namespace

TEST_CASE("cover cells have small diameter and minimal-rank anchors") {
  auto S = builtin("grushin").structure;
  auto cells = build_cover(S, S->domain(), 4);
  REQUIRE(cells.size() > 10);
  int on_line = 0;
  for (const auto& c : cells) {
    CHECK(c.diameter() < 0.25);
    CHECK(rank(*S, c.z) == c.min_rank);
    if (c.lo[0] < 0.0 && c.hi[0] > 0.0) {
      CHECK(rank(*S, c.z) == 1);
      CHECK(std::abs(c.z[0]) < 1e-12);
      ++on_line;
    }
  }
  CHECK(on_line > 0);
}

TEST_CASE("euclidean anchors are cell centres") {
  auto S = builtin("euclidean").structure;
  for (const auto& c : build_cover(S, S->domain(), 3)) {
    CHECK((c.z - 0.5 * (c.core_lo + c.core_hi)).norm() < 1e-15);
    CHECK(c.depth == 0);
  }
}

TEST_CASE("one level on a small box gives a single cell") {
  auto S = builtin("euclidean").structure;
  auto cells = build_cover(S, ChartDomain(V({0, 0}), V({0.5, 0.5})), 1);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].z.isApprox(V({0.25, 0.25})));
}

TEST_CASE("partition of unity: single and overlapping cells") {
  PartitionOfUnity one({make_cell(V({0, 0}), V({1, 1}), 0.1)});
  for (const auto& x : box_points(V({0, 0}), V({1, 1}), 50)) CHECK(one.phi(0, x) == 1.0);

  PartitionOfUnity two({make_cell(V({0, 0}), V({1, 1}), 0.2), make_cell(V({1, 0}), V({2, 1}), 0.2)});
  for (const auto& x : box_points(V({0, 0}), V({2, 1}), 200)) {
    double s = 0.0;
    for (const auto& w : two.weights(x)) {
      CHECK(w.second >= 0.0);
      s += w.second;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  CHECK(two.phi(0, V({0.5, 0.5})) == 1.0);
  CHECK(two.phi(1, V({1.5, 0.5})) == 1.0);
  CHECK_THROWS_AS(two.weights(V({3, 3})), NumericalError);
}

TEST_CASE("partition of unity on the grushin cover sums to one and is 1 at anchors") {
  auto seq = make_seq("grushin", 4);
  double worst = 0.0;
  for (const auto& x : grid_points(V({-1, -1}), V({1, 1}), 100)) {
    double s = 0.0;
    for (const auto& w : seq->blend(x)) s += w.phi;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  CHECK(worst <= 1e-10);
  for (const CoverNode* l : seq->all_leaves()) {
    auto w = seq->blend(l->cell().z);
    REQUIRE(w.size() == 1);
    CHECK(w[0].leaf == l);
    CHECK(std::abs(w[0].phi - 1.0) <= 1e-10);
  }
}

TEST_CASE("plateau profile") {
  CHECK(plateau(-1.0) == 0.0);
  CHECK(plateau(0.0) == 0.0);
  CHECK(plateau(1.0) == 1.0);
  CHECK(plateau(0.5) == doctest::Approx(0.5));
  for (double t = 0.05; t < 1.0; t += 0.05) CHECK(plateau(t) + plateau(1.0 - t) == doctest::Approx(1.0));
}

TEST_CASE("one-cell cover gives the anchor norm everywhere") {
  auto seq = make_seq("euclidean", 1, ChartDomain(V({0, 0}), V({0.5, 0.5})));
  auto F = assemble_F(seq, 1);
  auto leaves = seq->all_leaves();
  REQUIRE(leaves.size() == 1);
  for (const auto& x : box_points(V({0, 0}), V({0.5, 0.5}), 20))
    for (const auto& v : sphere_directions(2, 8)) CHECK(F->value(x, v) == leaves[0]->norm().value(1, v));
}

TEST_CASE("grushin anchor closeness and transverse blow-up on the line") {
  auto seq = make_seq("grushin", 4);
  auto rep = validate_sequence(*seq, {.points = 40, .dirs = 6, .transverse_points = 20, .anchor_dirs = 50});
  CHECK_MESSAGE(rep.item[2].pass, rep.item[2].witness);
  CHECK(rep.item[2].checked > 0);
  const auto& S = seq->structure();
  for (double y : {-0.7, -0.2, 0.2, 0.55}) {
    Vec x = V({0, y});
    REQUIRE(gn_membership(S, x, 4, 0.0625));
    CHECK(seq->value(4, x, V({0, 1})) >= 4.0);
  }
}

TEST_CASE("euclidean validator passes all items") {
  auto seq = make_seq("euclidean", 10);
  auto rep = validate_sequence(*seq);
  for (int i = 0; i < 4; ++i) CHECK_MESSAGE(rep.item[i].pass, rep.item[i].witness);
  CHECK(rep.item[0].checked == 1000 * 10);
  CHECK(rep.item[0].worst_margin > 0.0);
}

TEST_CASE("heisenberg transverse direction blows up at every level") {
  auto seq = make_seq("heisenberg", 12);
  const auto& S = seq->structure();
  for (int n = 1; n <= 12; ++n) CHECK(seq->value(n, V({0, 0, 0.3}), V({0, 0, 1})) >= n);
  for (const auto& x : box_points(V({-1, -1, -1}), V({1, 1, 1}), 15, 3)) {
    Vec t = range_split(S.psi(x)).complement.col(0);
    for (int n = 1; n <= 12; ++n) CHECK(seq->value(n, x, t) >= n);
  }
  // Off the axis e3 has a horizontal part; the divergence profile still holds.
  std::vector<std::pair<Vec, Vec>> probes;
  for (const auto& x : box_points(V({-1, -1, -1}), V({1, 1, 1}), 15, 3)) probes.push_back({x, V({0, 0, 1})});
  for (const auto& pr : convergence_probe(*seq, probes)) {
    CHECK(pr.pass);
    CHECK(pr.values.back() >= 12 * pr.beta - pr.rho_parallel);
  }
}

TEST_CASE("scaling one anchor norm above rho breaks the sandwich") {
  auto seq = make_seq("euclidean", 4);
  auto ok = validate_sequence(*seq, {.points = 60, .dirs = 6, .transverse_points = 10, .anchor_dirs = 10});
  CHECK(ok.item[0].pass);
  auto bad = make_seq("euclidean", 4);
  for (const auto& x : box_points(V({-1, -1}), V({1, 1}), 60)) bad->scale_anchor_norms(x, 1.5);
  auto rep = validate_sequence(*bad, {.points = 60, .dirs = 6, .transverse_points = 10, .anchor_dirs = 10});
  CHECK_FALSE(rep.item[0].pass);
  CHECK(rep.item[0].failed > 0);
  CHECK(rep.item[0].witness.find("rho=") != std::string::npos);
}

TEST_CASE("norm axioms at sampled points") {
  auto seq = make_seq("martinet", 3);
  for (const auto& x : box_points(V({-1, -1, -1}), V({1, 1, 1}), 20, 11)) {
    auto dirs = sphere_directions(3, 12);
    for (size_t i = 0; i < dirs.size(); ++i) {
      const Vec& v = dirs[i];
      const Vec& u = dirs[(i + 5) % dirs.size()];
      double f = seq->value(3, x, v);
      CHECK(f > 0.0);
      CHECK(std::abs(seq->value(3, x, 2.5 * v) - 2.5 * f) <= 1e-12 * f * 2.5);
      CHECK(seq->value(3, x, -v) == doctest::Approx(f).epsilon(1e-12));
      CHECK(seq->value(3, x, u + v) <= seq->value(3, x, u) + f + 1e-9);
    }
  }
}

TEST_CASE("convergence probes") {
  auto eu = make_seq("euclidean", 6);
  Vec z = eu->leaves_containing(V({0.1, 0.1}))[0]->cell().z;
  for (const auto& pr : convergence_probe(*eu, {{z, V({0.6, 0.8})}})) {
    CHECK(pr.pass);
    CHECK(pr.horizontal);
    for (int n = 1; n <= 6; ++n) CHECK(pr.rho - pr.values[n - 1] <= 1.0 / n);
  }

  auto he = make_seq("heisenberg", 12);
  auto pr = convergence_probe(*he, {{V({0, 0, 0}), V({1, 0, 0})}})[0];
  CHECK(pr.pass);
  CHECK(pr.monotone);
  CHECK(pr.rho == doctest::Approx(1.0));
  CHECK(pr.gap > 0.0);
  CHECK(pr.gap <= 1.0 / 12);

  auto gr = make_seq("grushin", 6);
  auto pg = convergence_probe(*gr, {{V({0, 0}), V({0, 1})}})[0];
  CHECK(pg.pass);
  CHECK_FALSE(pg.horizontal);
  for (int n = 1; n <= 6; ++n) CHECK(pg.values[n - 1] >= n);

  CHECK_THROWS_AS(convergence_probe(*gr, {{V({3, 0}), V({0, 1})}}), ConfigError);
}

TEST_CASE("riemannian variant") {
  auto eu = make_seq("euclidean", 5);
  auto g = riemannian_variant(eu);
  REQUIRE(g.size() == 5);
  Vec v = V({0.3, -0.4});
  for (const auto& x : box_points(V({-1, -1}), V({1, 1}), 30)) {
    double prev = 0.0;
    for (const auto& gn : g) {
      double val = gn->value(x, v);
      CHECK(val > prev);
      CHECK(val < v.norm());
      CHECK(val >= eu->value(gn->level(), x, v) * (1.0 - 1e-12));
      prev = val;
    }
    CHECK(g.back()->value(x, v) > v.norm() * (1.0 - 0.2));
  }

  auto he = make_seq("heisenberg", 4);
  auto gh = riemannian_variant(he);
  for (const auto& x : box_points(V({-1, -1, -1}), V({1, 1, 1}), 1000, 5)) {
    Mat G = gh.back()->gram(x);
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    CHECK(es.eigenvalues()(0) > 0.0);
    for (const auto& gn : gh)
      if (x.norm() < 0.6) CHECK(gn->value(x, V({0, 0, 1})) >= gn->level());
  }
  CHECK_THROWS_AS(riemannian_variant(make_seq("heisenberg_linf", 2)), ConfigError);
}

TEST_CASE("riemannian sandwich on horizontal vectors") {
  auto he = make_seq("heisenberg", 4);
  auto gh = riemannian_variant(he);
  const auto& S = he->structure();
  for (const auto& x : box_points(V({-1, -1, -1}), V({1, 1, 1}), 50, 9)) {
    Mat A = S.psi(x);
    Vec v = A * V({0.6, -0.8});
    double rho = horizontal_norm(S, x, v).value();
    for (const auto& gn : gh) {
      CHECK(gn->value(x, v) < rho);
      CHECK(gn->value(x, v) >= he->value(gn->level(), x, v) * (1.0 - 1e-12));
    }
  }
}

TEST_CASE("blended values are deterministic and independent of jobs") {
  auto a = make_seq("heisenberg", 6), b = make_seq("heisenberg", 6);
  for (const auto& x : box_points(V({-1, -1, -1}), V({1, 1, 1}), 20, 2))
    CHECK(a->value(6, x, V({0.2, 0.5, 0.7})) == b->value(6, x, V({0.2, 0.5, 0.7})));
  ValidateOptions o{.points = 20, .dirs = 4, .transverse_points = 10, .anchor_dirs = 10};
  auto r1 = validate_sequence(*make_seq("grushin", 3), o);
  o.jobs = 3;
  auto r2 = validate_sequence(*make_seq("grushin", 3), o);
  for (int i = 0; i < 4; ++i) {
    CHECK(r1.item[i].checked == r2.item[i].checked);
    CHECK(r1.item[i].worst_margin == r2.item[i].worst_margin);
  }
}

TEST_CASE("serialization round trip") {
  auto S = builtin("grushin").structure;
  SequenceParams p;
  p.levels = 2;
  p.box = ChartDomain(V({-0.5, -0.5}), V({0.5, 0.5}));
  FinslerSequence seq(S, p);
  auto j = sequence_to_json(seq);
  CHECK(j["leaves"].size() == seq.all_leaves().size());
  auto back = sequence_from_json(j, S);
  CHECK(back->value(2, V({0.1, 0.2}), V({1, 1})) == seq.value(2, V({0.1, 0.2}), V({1, 1})));
  auto tampered = j;
  tampered["leaves"][0]["z"][0] = 0.123456;
  CHECK_THROWS_AS(sequence_from_json(tampered, S), ConfigError);
  CHECK_THROWS_AS(sequence_from_json(j, builtin("euclidean").structure), ConfigError);
  CHECK_THROWS_AS(params_from_json({{"levelz", 3}}), ConfigError);
  CHECK(params_from_json(params_to_json(p)).box->upper.isApprox(p.box->upper));
}

TEST_CASE("parameter validation") {
  auto S = builtin("euclidean").structure;
  SequenceParams p;
  p.overlap = 1.5;
  CHECK_THROWS_AS(FinslerSequence(S, p), ConfigError);
  p = {};
  p.levels = 0;
  CHECK_THROWS_AS(FinslerSequence(S, p), ConfigError);
  p = {};
  p.box = ChartDomain(V({-2, 0}), V({0, 1}));
  CHECK_THROWS_AS(FinslerSequence(S, p), ConfigError);
  FinslerSequence seq(S);
  CHECK_THROWS_AS(seq.value(13, V({0, 0}), V({1, 0})), ConfigError);
  CHECK(seq.value(0, V({0, 0}), V({1, 0})) == 0.0);
}
