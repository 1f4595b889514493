#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lotlab/measures.hpp"
#include "lotlab/ot.hpp"
#include "lotlab/rng.hpp"
#include "oracles.hpp"

using namespace lotlab;

namespace {

// Independent 1-d oracle: with both supports sorted, the optimal plan is the
// monotone one obtained by merging cumulative masses.
double monotone_1d_cost(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  std::vector<int> ia(a.size()), ib(b.size());
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  std::sort(ia.begin(), ia.end(),
            [&](int l, int r) { return a.point(l)[0] < a.point(r)[0]; });
  std::sort(ib.begin(), ib.end(),
            [&](int l, int r) { return b.point(l)[0] < b.point(r)[0]; });
  double cost = 0.0;
  std::size_t i = 0, j = 0;
  double ra = a.weight(ia[0]), rb = b.weight(ib[0]);
  while (true) {
    double move = std::min(ra, rb);
    double d = a.point(ia[i])[0] - b.point(ib[j])[0];
    cost += move * d * d;
    ra -= move;
    rb -= move;
    if (ra <= 1e-15) {
      if (++i == a.size()) break;
      ra = a.weight(ia[i]);
    }
    if (rb <= 1e-15) {
      if (++j == b.size()) break;
      rb = b.weight(ib[j]);
    }
  }
  return cost;
}

}  // namespace

TEST_CASE("exact solver matches a hand-computed two-atom instance") {
  DiscreteMeasure mu(1, {0.0, 1.0}, {0.5, 0.5});
  DiscreteMeasure nu(1, {2.0}, {1.0});
  Coupling c = solve_exact(mu, nu);
  // Only one feasible plan: move everything to the single target atom.
  REQUIRE(c.plan(0, 0) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(c.plan(1, 0) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(transport_cost(c) == Catch::Approx(2.5).margin(1e-12));
  REQUIRE(wasserstein2(mu, nu) == Catch::Approx(std::sqrt(2.5)).margin(1e-12));
}

TEST_CASE("exact solver matches the permutation oracle on uniform measures") {
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(0, 4));  // 2..6 atoms
    int d = 1 + static_cast<int>(rng.uniform_int(0, 2));  // 1..3 dims
    DiscreteMeasure a = oracles::random_uniform_measure(n, d, rng);
    DiscreteMeasure b = oracles::random_uniform_measure(n, d, rng);
    Coupling c = solve_exact(a, b);
    auto ref = oracles::brute_force_uniform(a, b);
    REQUIRE(transport_cost(c) ==
            Catch::Approx(ref.cost).margin(1e-9 * (1.0 + ref.cost)));
    // Uniform-to-uniform with equal sizes admits a permutation optimum; the
    // simplex returns a vertex, so the plan must itself be a permutation.
    int positive = 0;
    for (int i = 0; i < c.plan.rows(); ++i)
      for (int j = 0; j < c.plan.cols(); ++j)
        if (c.plan(i, j) > 1e-12) ++positive;
    REQUIRE(positive == n);
  }
}

TEST_CASE("exact solver matches the basis-enumeration LP oracle") {
  Rng rng(202);
  for (int trial = 0; trial < 40; ++trial) {
    int m = 2 + static_cast<int>(rng.uniform_int(0, 2));  // 2..4 sources
    int k = 2 + static_cast<int>(rng.uniform_int(0, 2));  // 2..4 targets
    int d = 2;
    DiscreteMeasure a = oracles::random_weighted_measure(m, d, rng);
    DiscreteMeasure b = oracles::random_weighted_measure(k, d, rng);
    Coupling c = solve_exact(a, b);
    double ref = oracles::brute_force_lp(a, b);
    REQUIRE(transport_cost(c) == Catch::Approx(ref).margin(1e-9 * (1.0 + ref)));
  }
}

TEST_CASE("exact solver matches the sorted 1-d oracle with unequal weights") {
  Rng rng(303);
  for (int trial = 0; trial < 25; ++trial) {
    int m = 2 + static_cast<int>(rng.uniform_int(0, 6));
    int k = 2 + static_cast<int>(rng.uniform_int(0, 6));
    DiscreteMeasure a = oracles::random_weighted_measure(m, 1, rng);
    DiscreteMeasure b = oracles::random_weighted_measure(k, 1, rng);
    double got = transport_cost(solve_exact(a, b));
    double ref = monotone_1d_cost(a, b);
    REQUIRE(got == Catch::Approx(ref).margin(1e-9 * (1.0 + ref)));
  }
}

TEST_CASE("coupling satisfies the marginal constraints and vertex bound") {
  Rng rng(404);
  for (int trial = 0; trial < 10; ++trial) {
    int m = 3 + static_cast<int>(rng.uniform_int(0, 9));
    int k = 3 + static_cast<int>(rng.uniform_int(0, 9));
    DiscreteMeasure a = oracles::random_weighted_measure(m, 3, rng);
    DiscreteMeasure b = oracles::random_weighted_measure(k, 3, rng);
    Coupling c = solve_exact(a, b);
    REQUIRE(coupling_marginal_error(c) < 1e-12);
    int positive = 0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j)
        if (c.plan(i, j) > 0.0) ++positive;
    REQUIRE(positive <= m + k - 1);
  }
}

TEST_CASE("wasserstein2 behaves like a metric on random instances") {
  Rng rng(505);
  DiscreteMeasure a = oracles::random_weighted_measure(5, 2, rng);
  DiscreteMeasure b = oracles::random_weighted_measure(6, 2, rng);
  DiscreteMeasure c = oracles::random_weighted_measure(7, 2, rng);
  double ab = wasserstein2(a, b);
  double ba = wasserstein2(b, a);
  double ac = wasserstein2(a, c);
  double cb = wasserstein2(c, b);
  REQUIRE(ab == Catch::Approx(ba).margin(1e-10));
  REQUIRE(ab <= ac + cb + 1e-10);
  REQUIRE(wasserstein2(a, a) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("translation and scaling equivariance") {
  Rng rng(606);
  DiscreteMeasure a = oracles::random_weighted_measure(6, 2, rng);
  DiscreteMeasure b = oracles::random_weighted_measure(5, 2, rng);
  double base = wasserstein2(a, b);

  auto shift = [](std::span<const double> x, double* out) {
    out[0] = x[0] + 3.0;
    out[1] = x[1] - 2.0;
  };
  REQUIRE(wasserstein2(pushforward(a, shift), pushforward(b, shift)) ==
          Catch::Approx(base).margin(1e-10));

  auto scale = [](std::span<const double> x, double* out) {
    out[0] = 2.5 * x[0];
    out[1] = 2.5 * x[1];
  };
  REQUIRE(wasserstein2(pushforward(a, scale), pushforward(b, scale)) ==
          Catch::Approx(2.5 * base).margin(1e-9));
}

TEST_CASE("zero-weight atoms do not disturb the solution") {
  DiscreteMeasure a(1, {0.0, 5.0, 1.0}, {0.5, 0.0, 0.5});
  DiscreteMeasure b(1, {0.0, 1.0}, {0.5, 0.5});
  Coupling c = solve_exact(a, b);
  REQUIRE(transport_cost(c) == Catch::Approx(0.0).margin(1e-12));
  // The padded row stays empty.
  REQUIRE(c.plan.row(1).cwiseAbs().sum() == 0.0);
  REQUIRE(c.plan.rows() == 3);
}

TEST_CASE("solver argument validation") {
  DiscreteMeasure a(1, {0.0}, {1.0});
  DiscreteMeasure b(2, {0.0, 0.0}, {1.0});
  REQUIRE_THROWS_AS(solve_exact(a, b), DimensionMismatch);

  DiscreteMeasure c(1, {0.0, 1.0}, {0.5, 0.5});
  ExactOptions opts;
  opts.max_pivots = 1;  // far too few for a shuffled instance
  Rng rng(707);
  DiscreteMeasure x = oracles::random_weighted_measure(12, 2, rng);
  DiscreteMeasure y = oracles::random_weighted_measure(12, 2, rng);
  REQUIRE_THROWS_AS(solve_exact(x, y, opts), SolverFailure);
}

TEST_CASE("dense and lazy cost paths agree") {
  Rng rng(808);
  DiscreteMeasure a = oracles::random_weighted_measure(9, 2, rng);
  DiscreteMeasure b = oracles::random_weighted_measure(11, 2, rng);
  ExactOptions dense;  // default cache limit covers 9*11
  ExactOptions lazy;
  lazy.cost_cache_limit = 0;
  Coupling cd = solve_exact(a, b, dense);
  Coupling cl = solve_exact(a, b, lazy);
  REQUIRE(transport_cost(cd) ==
          Catch::Approx(transport_cost(cl)).margin(1e-11));
}

TEST_CASE("identical measures couple on the diagonal at zero cost") {
  Rng rng(909);
  DiscreteMeasure a = oracles::random_weighted_measure(8, 3, rng);
  Coupling c = solve_exact(a, a);
  REQUIRE(transport_cost(c) == Catch::Approx(0.0).margin(1e-12));
  for (int i = 0; i < 8; ++i)
    REQUIRE(c.plan(i, i) == Catch::Approx(a.weight(i)).margin(1e-12));
}

TEST_CASE("coupling json includes marginals and sparse plan entries") {
  DiscreteMeasure a(1, {0.0, 1.0}, {0.5, 0.5});
  DiscreteMeasure b(1, {0.25}, {1.0});
  Coupling c = solve_exact(a, b);
  nlohmann::json j = coupling_to_json(c);
  REQUIRE(j.contains("cost"));
  REQUIRE(j.contains("plan"));
  REQUIRE(j["plan"].size() == 2);
  double mass = 0.0;
  for (const auto& e : j["plan"]) mass += e["mass"].get<double>();
  REQUIRE(mass == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("monge extraction from a near-deterministic plan") {
  DiscreteMeasure a(1, {0.0, 1.0}, {0.5, 0.5});
  DiscreteMeasure b(1, {10.0, 11.0}, {0.5, 0.5});
  Coupling c = solve_exact(a, b);
  MongeMap argmax = extract_monge_argmax(c);
  MongeMap bary = extract_monge_barycentric(c);
  REQUIRE(argmax.assigned_index[0] == 0);
  REQUIRE(argmax.assigned_index[1] == 1);
  REQUIRE(argmax.target(0)[0] == 10.0);
  REQUIRE(bary.target(1)[0] == Catch::Approx(11.0).margin(1e-12));
  REQUIRE(bary.assigned_index.empty());
}

TEST_CASE("barycentric extraction averages split mass") {
  // Build a coupling by hand: one source atom split across two targets.
  auto src = std::make_shared<DiscreteMeasure>(
      1, std::vector<double>{0.0}, std::vector<double>{1.0});
  auto dst = std::make_shared<DiscreteMeasure>(
      1, std::vector<double>{-1.0, 3.0}, std::vector<double>{0.5, 0.5});
  Coupling c{src, dst, Eigen::MatrixXd(1, 2)};
  c.plan << 0.5, 0.5;
  MongeMap bary = extract_monge_barycentric(c);
  REQUIRE(bary.target(0)[0] == Catch::Approx(1.0).margin(1e-12));

  MongeMap am = extract_monge_argmax(c);
  REQUIRE(am.assigned_index[0] == 0);  // tie resolves to the lowest index

  Coupling zero{src, dst, Eigen::MatrixXd::Zero(1, 2)};
  REQUIRE_THROWS_AS(extract_monge_barycentric(zero), ZeroRow);
}
