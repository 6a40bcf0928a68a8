#include <doctest.h>

#include <cmath>

#include "cpmtl/descent.hpp"
#include "oracles.hpp"

using namespace cpmtl;

namespace {

Layout flat(std::size_t n) {
  auto t = std::make_shared<SegmentTable>();
  t->append("x", {n});
  return t;
}

ParamVector pv(Vector v) {
  const std::size_t n = v.size();
  return ParamVector(flat(n), std::move(v));
}

std::vector<ParamVector> random_grads(std::size_t count, std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ParamVector> out;
  for (std::size_t i = 0; i < count; ++i) {
    Vector v(dim);
    for (double& x : v) x = normal(rng);
    out.push_back(pv(std::move(v)));
  }
  return out;
}

std::vector<oracle::Vec> raw(std::span<const ParamVector> vs) {
  std::vector<oracle::Vec> out;
  for (const auto& v : vs) out.push_back(v.data);
  return out;
}

PreferenceVector sphere(Vector v) { return PreferenceVector::normalized(v, NormMode::Sphere); }

Vector unit_random(std::size_t m, Rng& rng) {
  Vector v(m);
  for (double& x : v) x = uniform01(rng);
  const double n = norm2(v);
  for (double& x : v) x /= n;
  return v;
}

void check_dual_feasible(const DualSolution& s) {
  double sum = 0.0;
  for (double x : s.lambda) {
    CHECK(x >= 0.0);
    sum += x;
  }
  for (double x : s.beta) {
    CHECK(x >= 0.0);
    sum += x;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-9);
}

}  // namespace

TEST_CASE("linear direction: one-hot, arithmetic and recomposition") {
  const std::vector<ParamVector> g{pv({1.0, 0.0}), pv({0.0, 1.0})};
  const auto d1 = linear_direction(PreferenceVector({1.0, 0.0}, NormMode::Simplex), g);
  CHECK(d1.d.data == g[0].data);
  const auto d2 = linear_direction(PreferenceVector({0.5, 0.5}, NormMode::Simplex), g);
  CHECK(d2.d.data == Vector{0.5, 0.5});
  CHECK(d2.weights.alpha == Vector{0.5, 0.5});

  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto grads = random_grads(4, 30, rng);
    const auto p = PreferenceVector::normalized(unit_random(4, rng), NormMode::Simplex);
    const auto d = linear_direction(p, grads);
    for (std::size_t k = 0; k < 30; ++k) {
      double s = 0.0;
      for (std::size_t i = 4; i-- > 0;) s += p[i] * grads[i].data[k];
      CHECK(std::abs(d.d.data[k] - s) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(linear_direction(PreferenceVector({1.0, 0.0}, NormMode::Simplex), std::vector<ParamVector>{g[0]}), Error);
  CHECK_THROWS_AS(linear_direction(PreferenceVector({0.5, 0.5}, NormMode::Simplex), std::vector<ParamVector>{g[0], pv({1.0})}), Error);
}

TEST_CASE("min-norm dual: degenerate, antipodal and orthonormal hulls") {
  const std::vector<ParamVector> same{pv({1.0, 2.0}), pv({1.0, 2.0}), pv({1.0, 2.0})};
  const auto a = min_norm_dual(same);
  CHECK(norm2(a.direction.data) == doctest::Approx(std::sqrt(5.0)));
  check_dual_feasible(a);

  const std::vector<ParamVector> anti{pv({1.0, -3.0}), pv({-1.0, 3.0})};
  const auto b = min_norm_dual(anti);
  CHECK(norm2(b.direction.data) <= 1e-15);
  CHECK(b.lambda[0] == doctest::Approx(0.5));
  CHECK(b.lambda[1] == doctest::Approx(0.5));

  const std::vector<ParamVector> ortho{pv({1.0, 0.0}), pv({0.0, 1.0})};
  const auto c = min_norm_dual(ortho);
  CHECK(c.lambda[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c.direction.data[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(dot(c.direction.data, c.direction.data) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(min_norm_dual(std::vector<ParamVector>{}), Error);
}

TEST_CASE("min-norm dual on two vectors matches the closed form") {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = random_grads(2, 1 + trial % 8, rng);
    const oracle::Vec want = oracle::two_vector_min_norm(g[0].data, g[1].data);
    const auto sol = min_norm_dual(g);
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(sol.direction.data[k] - want[k]) <= 1e-9);
  }
}

TEST_CASE("min-norm dual matches the exact face-enumeration oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + trial % 4;
    const std::size_t dim = 2 + trial % 7;
    const auto g = random_grads(n, dim, rng);
    const auto sol = min_norm_dual(g);
    check_dual_feasible(sol);
    CHECK(std::abs(norm2(sol.direction.data) - oracle::kkt_min_norm(raw(g))) <= 1e-3);
    // Recomposition of the returned weights.
    const oracle::Vec r = oracle::combine(raw(g), sol.lambda);
    for (std::size_t k = 0; k < dim; ++k) CHECK(std::abs(r[k] - sol.direction.data[k]) <= 1e-9);
    // Frank-Wolfe iterates never increase the objective.
    for (std::size_t t = 1; t < sol.objective_trace.size(); ++t)
      CHECK(sol.objective_trace[t] <= sol.objective_trace[t - 1]);
    // The min-norm point is no longer than any vertex.
    for (const auto& v : g) CHECK(norm2(sol.direction.data) <= norm2(v.data) + 1e-12);
  }
}

TEST_CASE("the face-enumeration oracle agrees with a fine simplex grid") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_grads(3, 4, rng);
    const double grid = oracle::grid_min_norm(raw(g), 1000);
    const double exact = oracle::kkt_min_norm(raw(g));
    CHECK(exact <= grid + 1e-12);
    CHECK(grid - exact <= 1e-3);
  }
}

TEST_CASE("constrained direction: worked example against the simplex grid") {
  const RegionSpec r(sphere({1.0, 0.0}), ReferenceSet{{{0.0, 1.0}}});
  const std::vector<ParamVector> g{pv({1.0, 0.0}), pv({0.0, 1.0})};
  const auto d = constrained_direction(r, LossVector{{0.3, 0.4}}, g);
  REQUIRE(d.active.size() == 1);
  const std::vector<oracle::Vec> hull{{1.0, 0.0}, {0.0, 1.0}, {-1.0, 1.0}};
  CHECK(std::abs(d.norm - oracle::grid_min_norm(hull, 1000)) <= 1e-3);
  check_dual_feasible(d.dual);
  // alpha_i = lambda_i + beta (u_i - p_i)
  CHECK(d.weights.alpha[0] == doctest::Approx(d.dual.lambda[0] - d.dual.beta[0]).epsilon(1e-15));
  CHECK(d.weights.alpha[1] == doctest::Approx(d.dual.lambda[1] + d.dual.beta[0]).epsilon(1e-15));
}

TEST_CASE("constrained direction with nothing active reduces to MGDA") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_grads(3, 6, rng);
    const auto p = sphere({1.0, 1.0, 1.0});
    const auto u = sample_references(3, p, rng);
    // Loss parallel to p sits strictly inside the region: every G_j < 0.
    const LossVector l{{p[0], p[1], p[2]}};
    DescentOptions o;
    o.activation_slack = 0.0;
    const auto d = constrained_direction(RegionSpec(p, u), l, g, o);
    CHECK(d.active.size() == 0);
    const auto m = min_norm_dual(g);
    CHECK(d.d.data == m.direction.data);
    CHECK(d.weights.alpha == m.lambda);
  }
}

TEST_CASE("origin in the hull gives a critical direction") {
  const RegionSpec r(sphere({1.0, 0.0}), ReferenceSet{{{0.0, 1.0}}});
  const std::vector<ParamVector> g{pv({1.0, 0.0}), pv({-1.0, 0.0})};
  const auto d = constrained_direction(r, LossVector{{0.3, 0.4}}, g);
  CHECK(d.is_critical);
  CHECK(d.norm < 1e-8);
  CHECK_THROWS_AS(lemma1_check(d, g, std::vector<ParamVector>{}), Error);
}

TEST_CASE("active set uses the activation slack") {
  const auto a = ActiveSet::from_values(Vector{-0.5, -1e-4, 0.0, 0.2}, 1e-3);
  CHECK(a.indices == std::vector<std::size_t>{1, 2, 3});
  const auto b = ActiveSet::from_values(Vector{-1e-4}, 0.0);
  CHECK(b.size() == 0);
}

TEST_CASE("random constrained instances: recomposition, feasibility, descent inequalities") {
  Rng rng(11);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + trial % 3;
    const auto g = random_grads(m, 3 + trial % 6, rng);
    const auto p = sphere(unit_random(m, rng));
    const RegionSpec r(p, sample_references(3, p, rng));
    LossVector l{Vector(m)};
    for (double& x : l.values) x = uniform01(rng);
    const auto d = constrained_direction(r, l, g);
    check_dual_feasible(d.dual);
    const oracle::Vec rec = oracle::combine(raw(g), d.weights.alpha);
    for (std::size_t k = 0; k < rec.size(); ++k) CHECK(std::abs(rec[k] - d.d.data[k]) <= 1e-9);
    if (d.is_critical) continue;
    ++checked;
    const auto cg = constraint_gradients(r, d.active, g);
    CHECK(lemma1_check(d, g, cg));
  }
  CHECK(checked > 100);
}

TEST_CASE("constraint gradients are combinations of loss gradients") {
  const RegionSpec r(sphere({1.0, 0.0}), ReferenceSet{{{0.0, 1.0}, {0.6, 0.8}}});
  const std::vector<ParamVector> g{pv({1.0, 2.0}), pv({3.0, -1.0})};
  ActiveSet a;
  a.indices = {1};
  const auto cg = constraint_gradients(r, a, g);
  REQUIRE(cg.size() == 1);
  CHECK(cg[0].data[0] == doctest::Approx(-0.4 * 1.0 + 0.8 * 3.0));
  CHECK(cg[0].data[1] == doctest::Approx(-0.4 * 2.0 + 0.8 * -1.0));
}

TEST_CASE("descent inequalities: worked examples") {
  const std::vector<ParamVector> g{pv({1.0, 0.0}), pv({0.0, 1.0})};
  DescentDirection d;
  d.d = pv({0.5, 0.5});
  d.norm = norm2(d.d.data);
  CHECK(lemma1_check(d, g, std::vector<ParamVector>{}));

  DescentDirection single;
  single.d = pv({2.0, -1.0});
  single.norm = norm2(single.d.data);
  CHECK(lemma1_check(single, std::vector<ParamVector>{pv({2.0, -1.0})}, std::vector<ParamVector>{}));

  DescentDirection bad;
  bad.d = pv({-1.0, 0.0});
  bad.norm = 1.0;
  CHECK_FALSE(lemma1_check(bad, std::vector<ParamVector>{pv({1.0, 0.0}), pv({-1.0, 0.0})}, std::vector<ParamVector>{}));
}

TEST_CASE("cross constraints enumerate k-major") {
  const auto c = cross_constraints(3);
  REQUIRE(c.size() == 6);
  CHECK(c[0].k == 0);
  CHECK(c[0].j == 1);
  CHECK(c[2].k == 1);
  CHECK(c[2].j == 0);
  CHECK(cross_constraints(1).empty());
}

TEST_CASE("batched: K = 1 constrained equals the empty-reference direction bit for bit") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_grads(2, 5, rng);
    const auto p = sphere(unit_random(2, rng));
    const LossVector l{{uniform01(rng), uniform01(rng)}};
    const std::vector<PreferenceVector> ps{p};
    const std::vector<LossVector> ls{l};
    const std::vector<std::vector<ParamVector>> gs{g};
    const auto b = batched_direction(ps, ls, gs, BatchMode::Constrained);
    const auto c = constrained_direction(RegionSpec(p, {}), l, g);
    CHECK(b.d.data == c.d.data);
    CHECK(b.weights.alpha == c.weights.alpha);
    CHECK(b.is_critical == c.is_critical);
  }
}

TEST_CASE("batched: K = 2 linear sums every weighted gradient") {
  const std::vector<PreferenceVector> ps{PreferenceVector({0.3, 0.7}, NormMode::Simplex),
                                         PreferenceVector({0.9, 0.1}, NormMode::Simplex)};
  const std::vector<LossVector> ls{LossVector{{0.1, 0.2}}, LossVector{{0.3, 0.4}}};
  const std::vector<std::vector<ParamVector>> gs{{pv({1, 0, 0, 0}), pv({0, 1, 0, 0})},
                                                 {pv({0, 0, 1, 0}), pv({0, 0, 0, 1})}};
  const auto d = batched_direction(ps, ls, gs, BatchMode::Linear);
  CHECK(d.d.data == Vector{0.3, 0.7, 0.9, 0.1});
}

TEST_CASE("batched: K = 2 constrained with one active cross constraint matches the oracle") {
  // p1 = (1, 0), p2 = (0, 1). With L1 = (0.3, 0.4), (p2 - p1) . L1 = 0.1 is
  // active; (p1 - p2) . L2 = 0.1 - 0.5 < 0 is not.
  const std::vector<PreferenceVector> ps{sphere({1.0, 0.0}), sphere({0.0, 1.0})};
  const std::vector<LossVector> ls{LossVector{{0.3, 0.4}}, LossVector{{0.1, 0.5}}};
  const std::vector<std::vector<ParamVector>> gs{{pv({1.0, 0.2, 0.0}), pv({-0.3, 1.0, 0.5})},
                                                 {pv({0.4, -0.2, 1.0}), pv({0.1, 0.6, -0.7})}};
  const auto d = batched_direction(ps, ls, gs, BatchMode::Constrained);
  REQUIRE(d.active.size() == 1);
  CHECK(d.active.indices[0] == 0);
  std::vector<oracle::Vec> hull;
  for (const auto& row : gs)
    for (const auto& g : row) hull.push_back(g.data);
  oracle::Vec cg(3);
  for (int k = 0; k < 3; ++k) cg[k] = -gs[0][0].data[k] + gs[0][1].data[k];
  hull.push_back(cg);
  const double exact = oracle::kkt_min_norm(hull);
  CHECK(std::abs(d.norm - exact) <= 1e-3);
  CHECK(oracle::grid_min_norm(hull, 100) >= exact - 1e-12);
  check_dual_feasible(d.dual);
  REQUIRE(d.weights.alpha.size() == 4);
  const oracle::Vec rec = oracle::combine({gs[0][0].data, gs[0][1].data, gs[1][0].data, gs[1][1].data}, d.weights.alpha);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(rec[k] - d.d.data[k]) <= 1e-9);
}

TEST_CASE("batched: K = 0 and shape mismatches are errors") {
  CHECK_THROWS_AS(batched_direction({}, {}, {}, BatchMode::Linear), Error);
  const std::vector<PreferenceVector> ps{sphere({1.0, 0.0})};
  const std::vector<LossVector> ls{LossVector{{0.3, 0.4}}};
  const std::vector<std::vector<ParamVector>> gs{{pv({1.0}), pv({1.0, 2.0})}};
  CHECK_THROWS_AS(batched_direction(ps, ls, gs, BatchMode::Constrained), Error);
}

TEST_CASE("normalize_gradients keeps alpha in terms of raw gradients") {
  Rng rng(17);
  const auto g = random_grads(2, 4, rng);
  DescentOptions o;
  o.normalize_gradients = true;
  const auto p = sphere({1.0, 1.0});
  const auto d = constrained_direction(RegionSpec(p, {}), LossVector{{0.5, 0.5}}, g, o);
  const oracle::Vec rec = oracle::combine(raw(g), d.weights.alpha);
  for (std::size_t k = 0; k < rec.size(); ++k) CHECK(std::abs(rec[k] - d.d.data[k]) <= 1e-9);
}
