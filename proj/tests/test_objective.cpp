#include <cmath>

#include "doctest.h"
#include "ddcpart/counts.hpp"
#include "ddcpart/error.hpp"
#include "ddcpart/objective.hpp"
#include "helpers.hpp"

using namespace ddcpart;
using testutil::obs;

namespace {

// Agents with two periods: origin x = 1 choosing 0, then the listed x.
Panel fan_out(const std::vector<int>& destinations) {
  std::vector<Observation> rows;
  for (std::size_t a = 0; a < destinations.size(); ++a) {
    rows.push_back(obs(a, 1, 1, 0, {0.0}));
    rows.push_back(obs(a, 2, destinations[a], 0, {0.0}));
  }
  return Panel(rows, {1, 2, 1, 3});
}

}  // namespace

TEST_CASE("f_dc is zero when every choice is the same") {
  std::vector<Observation> rows;
  for (int a = 0; a < 3; ++a) {
    for (int t = 1; t <= 4; ++t) rows.push_back(obs(a, t, 1 + t % 2, 0, {double(a)}));
  }
  const Panel p(rows, {1, 2, 1, 2});
  CHECK(f_dc(count_tables(p, Discretization(1))) == 0.0);
}

TEST_CASE("f_dc of one cell split two and two") {
  const Panel p({obs(1, 1, 1, 0, {0}), obs(1, 2, 1, 1, {0}), obs(2, 1, 1, 0, {0}),
                 obs(2, 2, 1, 1, {0})},
                {1, 2, 1, 1});
  CHECK(f_dc(count_tables(p, Discretization(1))) == doctest::Approx(4 * std::log(0.5)));
  CHECK(f_dc(count_tables(p, Discretization(1))) == doctest::Approx(-2.77259).epsilon(1e-5));
}

TEST_CASE("f_tr of one origin fanning out to two destinations") {
  const CountTables c = count_tables(fan_out({2, 2, 3, 3}), Discretization(1));
  CHECK(f_tr(c) == doctest::Approx(4 * std::log(0.25)));
  CHECK(f_tr(c) == doctest::Approx(-5.54518).epsilon(1e-5));
}

TEST_CASE("f_tr is zero for deterministic one-to-one transitions") {
  // Every destination is reached from exactly one origin cell and is not
  // visited otherwise.
  const Panel p({obs(1, 1, 1, 0, {0}), obs(1, 2, 2, 0, {0}), obs(2, 1, 1, 1, {0}),
                 obs(2, 2, 3, 0, {0})},
                {1, 2, 1, 3});
  CHECK(f_tr(count_tables(p, Discretization(1))) == 0.0);
}

TEST_CASE("objective values are permutation invariant") {
  const Panel p = testutil::random_panel(5, 10, 6, 2);
  std::vector<Observation> rows;
  for (std::size_t r = 0; r < p.size(); ++r) {
    Observation o = p.observation(r);
    o.agent_id = 1000 - o.agent_id;
    rows.push_back(o);
  }
  const Panel q(rows, p.meta());
  Discretization tree(2);
  tree.split(0, 0, 1.5);
  CHECK(f_tr(count_tables(p, tree)) == doctest::Approx(f_tr(count_tables(q, tree))).epsilon(1e-12));
  CHECK(f_dc(count_tables(p, tree)) == doctest::Approx(f_dc(count_tables(q, tree))).epsilon(1e-12));
}

TEST_CASE("lambda_adj") {
  SUBCASE("absolute ratio of the root parts") {
    const CountTables c = count_tables(testutil::random_panel(2, 12, 8, 2), Discretization(2));
    CHECK(lambda_adj(c) == doctest::Approx(std::abs(f_dc(c) / f_tr(c))));
    CHECK(lambda_adj(c) > 0.0);
  }
  SUBCASE("deterministic choices give zero") {
    const Panel p({obs(1, 1, 1, 0, {0}), obs(1, 2, 2, 0, {0}), obs(2, 1, 1, 0, {0}),
                   obs(2, 2, 3, 0, {0})},
                  {1, 2, 1, 3});
    const CountTables c = count_tables(p, Discretization(1));
    CHECK(f_dc(c) == 0.0);
    CHECK(lambda_adj(c) == 0.0);
  }
  SUBCASE("zero transition part is degenerate") {
    // No agent has a second period.
    const Panel p({obs(1, 1, 1, 0, {0}), obs(2, 1, 1, 1, {0})}, {1, 2, 1, 1});
    CHECK_THROWS_AS(lambda_adj(count_tables(p, Discretization(1))), DegenerateDataError);
  }
}

TEST_CASE("objective combines the parts") {
  const CountTables c = count_tables(testutil::random_panel(8, 10, 5, 2), Discretization(2));
  const ObjectiveValue v0 = objective(c, 0.0, 0.7);
  CHECK(v0.combined == v0.f_dc);
  const ObjectiveValue v = objective(c, 2.0, 0.25);
  CHECK(v.combined == doctest::Approx(v.f_dc + 0.5 * v.f_tr));
  CHECK(v.f_dc <= 0.0);
  CHECK(v.f_tr <= 0.0);
  // With f_dc = -10 and f_tr = -40 the same rule gives -30.
  CHECK(-10.0 + 0.25 * 2.0 * -40.0 == -30.0);
  const double adj = lambda_adj(c);
  CHECK(objective(c, 1.0, adj).combined == doctest::Approx(2.0 * f_dc(c)));
  CHECK_THROWS_AS(objective(c, -1.0, 1.0), ArgumentError);
  CHECK_THROWS_AS(objective(c, 1.0, -1.0), ArgumentError);
}

TEST_CASE("score of a panel against itself") {
  const Panel p = testutil::random_panel(21, 15, 8, 2);
  Discretization tree(2);
  tree.split(0, 0, 1.5);
  const CountTables c = count_tables(p, tree);
  CHECK(score(c, c, 0.0, 1.0, {0.0}) == doctest::Approx(f_dc(c)).epsilon(1e-12));
  const double adj = 0.8;
  const double lr = 3.0;
  CHECK(score(c, c, lr, adj, {0.0}) ==
        doctest::Approx((f_dc(c) + lr * adj * f_tr(c)) / (1.0 + lr)).epsilon(1e-12));
}

TEST_CASE("smoothing removes zero probabilities") {
  const CountTables train = count_tables(fan_out({2, 2, 2, 2}), Discretization(1));
  const CountTables val = count_tables(fan_out({2, 3}), Discretization(1));
  CHECK(std::isfinite(score(train, val, 1.0, 1.0, {1e-5})));
  CHECK(score(train, val, 1.0, 1.0, {0.0}) == kZeroProbabilityScore);
  CHECK(std::isinf(kZeroProbabilityScore));
  CHECK(kZeroProbabilityScore < 0);
}

TEST_CASE("score stays bounded as lambda_rel grows") {
  const Panel p = testutil::random_panel(30, 10, 6, 2);
  const Panel v = testutil::random_panel(31, 10, 6, 2);
  const CountTables a = count_tables(p, Discretization(2));
  const CountTables b = count_tables(v, Discretization(2));
  const double adj = 0.6;
  const double s_tr = score(a, b, 1e12, adj, {1e-5});
  // Limit is adj times the transition part alone.
  const double dc_only = score(a, b, 0.0, adj, {1e-5});
  const double mid = score(a, b, 1.0, adj, {1e-5});
  const double transition_part = 2.0 * mid - dc_only;  // (dc + adj T) / 2 = mid
  CHECK(s_tr == doctest::Approx(transition_part).epsilon(1e-9));
  CHECK(std::isfinite(s_tr));
}

TEST_CASE("score requires matching state spaces") {
  const Panel p = testutil::random_panel(3, 4, 4, 2);
  Discretization two(2);
  two.split(0, 0, 1.5);
  CHECK_THROWS_AS(score(count_tables(p, two), count_tables(p, Discretization(2)), 0.0, 1.0),
                  ValidationError);
}

TEST_CASE("splits never lower either part") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Panel p = testutil::random_panel(seed, 6, 6, 3, 3, 3);
    const CountTables base = count_tables(p, Discretization(3));
    for (int d = 0; d < 3; ++d) {
      for (double thr : {0.5, 1.5, 2.5}) {
        Discretization t(3);
        t.split(0, d, thr);
        const CountTables c = count_tables(p, t);
        CHECK(f_dc(c) >= f_dc(base) - 1e-9);
        CHECK(f_tr(c) >= f_tr(base) - 1e-9);
      }
    }
  }
}

TEST_CASE("a split with identical child frequencies leaves f_dc unchanged") {
  // Both halves choose 1 exactly half the time in every x.
  std::vector<Observation> rows;
  for (int a = 0; a < 8; ++a) {
    const double q = a < 4 ? 0.0 : 1.0;
    for (int t = 1; t <= 4; ++t) rows.push_back(obs(a, t, 1 + t % 2, (a + t / 2) % 2, {q}));
  }
  const Panel p(rows, {1, 2, 1, 2});
  Discretization t(1);
  t.split(0, 0, 0.5);
  const CountTables parent = count_tables(p, Discretization(1));
  const CountTables child = count_tables(p, t);
  CHECK(f_dc(child) == doctest::Approx(f_dc(parent)).epsilon(1e-14));

  // Making one half deterministic breaks the equality.
  std::vector<Observation> skew = rows;
  for (auto& o : skew) {
    if (o.q[0] == 0.0) o.decision = 0;
  }
  const Panel s(skew, {1, 2, 1, 2});
  CHECK(f_dc(count_tables(s, t)) > f_dc(count_tables(s, Discretization(1))) + 1e-6);
}
