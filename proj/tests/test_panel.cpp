#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "ddcpart/counts.hpp"
#include "ddcpart/error.hpp"
#include "ddcpart/panel.hpp"
#include "helpers.hpp"

using namespace ddcpart;
using testutil::obs;

namespace {

std::set<std::int64_t> agent_set(const Panel& p) {
  std::set<std::int64_t> s;
  for (const auto& a : p.agents()) s.insert(a.agent_id);
  return s;
}

Panel agents_panel(int n_agents, int periods = 2) {
  std::vector<Observation> rows;
  for (int a = 0; a < n_agents; ++a) {
    for (int t = 1; t <= periods; ++t) rows.push_back(obs(a, t, 1, 0, {0.0}));
  }
  return Panel(std::move(rows), {1, 2, 1, 1});
}

}  // namespace

TEST_CASE("load_panel reads a 2 x 3 csv with two covariates") {
  std::istringstream in(
      "agent,period,x,d,q1,q2\n"
      "1,1,1,0,0.5,2\n1,2,2,0,0.5,2\n1,3,3,1,1.5,2\n"
      "2,1,1,0,3,4\n2,2,2,1,3,4\n2,3,1,0,3,4\n");
  const Panel p = read_panel(in);
  CHECK(p.size() == 6);
  CHECK(p.dims() == 2);
  CHECK(p.n_agents() == 2);
  CHECK(p.meta().n_choices == 2);
  CHECK(p.meta().x_min == 1);
  CHECK(p.meta().x_max == 3);
  CHECK(p.q(2, 0) == 1.5);
  CHECK(p.decision(4) == 1);
}

TEST_CASE("rows are sorted by agent then period") {
  std::istringstream in("agent,period,x,d,q1\n2,2,1,0,0\n1,2,1,1,0\n2,1,1,0,0\n1,1,1,0,0\n");
  const Panel p = read_panel(in);
  CHECK(p.agent_id(0) == 1);
  CHECK(p.period(0) == 1);
  CHECK(p.decision(1) == 1);
  CHECK(p.agent_id(3) == 2);
  CHECK(p.period(3) == 2);
  CHECK(p.prev(0) == Panel::npos);
  CHECK(p.prev(1) == 0);
  CHECK(p.next(1) == Panel::npos);
  CHECK(p.next(2) == 3);
}

TEST_CASE("a missing period is reported with the agent id") {
  std::istringstream in("agent,period,x,d,q1\n7,1,1,0,0\n7,3,1,0,0\n");
  try {
    read_panel(in);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("agent 7") != std::string::npos);
  }
}

TEST_CASE("duplicate periods are rejected") {
  std::istringstream in("agent,period,x,d,q1\n3,1,1,0,0\n3,1,1,0,0\n");
  CHECK_THROWS_AS(read_panel(in), ValidationError);
}

TEST_CASE("schema and parse errors") {
  SUBCASE("missing decision column") {
    std::istringstream in("agent,period,x,q1\n1,1,1,0\n");
    CHECK_THROWS_AS(read_panel(in), SchemaError);
  }
  SUBCASE("gap in covariate numbering") {
    std::istringstream in("agent,period,x,d,q1,q3\n1,1,1,0,0,0\n");
    CHECK_THROWS_AS(read_panel(in), SchemaError);
  }
  SUBCASE("non-numeric cell names its row") {
    std::istringstream in("agent,period,x,d,q1\n1,1,1,0,0\n1,2,1,0,abc\n");
    try {
      read_panel(in);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.row() == 3);
      CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
  }
  SUBCASE("decision outside the declared choices") {
    std::istringstream in("agent,period,x,d,q1\n1,1,1,2,0\n");
    PanelSchema schema;
    schema.n_choices = 2;
    CHECK_THROWS_AS(read_panel(in, schema), ValidationError);
  }
}

TEST_CASE("write then read reproduces the panel exactly") {
  const Panel p = testutil::random_panel(3, 5, 4, 3);
  const Panel wobbly = p.map_q([&](std::size_t r) {
    std::vector<double> q(p.q(r).begin(), p.q(r).end());
    q[1] = q[1] / 3.0 + 1e-13;
    return q;
  });
  std::stringstream buf;
  write_panel(buf, wobbly);
  PanelSchema schema;
  schema.n_choices = wobbly.meta().n_choices;
  schema.x_range = std::pair{wobbly.meta().x_min, wobbly.meta().x_max};
  const Panel back = read_panel(buf, schema);
  REQUIRE(back.size() == wobbly.size());
  CHECK(back.meta() == wobbly.meta());
  for (std::size_t r = 0; r < back.size(); ++r) {
    CHECK(back.agent_id(r) == wobbly.agent_id(r));
    CHECK(back.x(r) == wobbly.x(r));
    CHECK(back.decision(r) == wobbly.decision(r));
    for (int d = 0; d < back.dims(); ++d) CHECK(back.q(r, d) == wobbly.q(r, d));
  }
}

TEST_CASE("split_train_validation") {
  SUBCASE("10 agents at 0.2 gives 8 and 2") {
    const auto [train, val] = split_train_validation(agents_panel(10), 0.2, 1);
    CHECK(train.n_agents() == 8);
    CHECK(val.n_agents() == 2);
  }
  SUBCASE("agents are kept whole and the union is the input") {
    const Panel p = agents_panel(17, 3);
    const auto [train, val] = split_train_validation(p, 0.3, 5);
    CHECK(train.size() + val.size() == p.size());
    auto all = agent_set(train);
    for (auto a : agent_set(val)) CHECK(all.insert(a).second);
    CHECK(all == agent_set(p));
    for (const auto& a : train.agents()) CHECK(a.end - a.begin == 3);
  }
  SUBCASE("deterministic for a seed") {
    const Panel p = agents_panel(30);
    CHECK(agent_set(split_train_validation(p, 0.25, 9).second) ==
          agent_set(split_train_validation(p, 0.25, 9).second));
  }
  SUBCASE("different seeds give different assignments") {
    const Panel p = agents_panel(100);
    CHECK(agent_set(split_train_validation(p, 0.25, 1).second) !=
          agent_set(split_train_validation(p, 0.25, 2).second));
  }
  SUBCASE("argument checks") {
    CHECK_THROWS_AS(split_train_validation(agents_panel(10), 0.0, 1), ArgumentError);
    CHECK_THROWS_AS(split_train_validation(agents_panel(10), 1.0, 1), ArgumentError);
    CHECK_THROWS_AS(split_train_validation(agents_panel(1), 0.5, 1), ArgumentError);
  }
}

TEST_CASE("count_tables on a single agent always choosing 0") {
  std::vector<Observation> rows;
  for (int t = 1; t <= 5; ++t) rows.push_back(obs(1, t, 1, 0, {0.0}));
  const Panel p(rows, {1, 2, 1, 1});
  const CountTables c = count_tables(p, Discretization(1));
  CHECK(c.n_state_choice(1, 0, 0) == 5);
  CHECK(c.n_state(1, 0) == 5);
  CHECK(c.n_transitions() == 4);
  CHECK(c.n_transition(1, 0, 0, 1, 0) == 4);
  CHECK(c.n_origin_choice(1, 0, 0) == 4);
}

TEST_CASE("root-only counts equal the x histogram") {
  const Panel p = testutil::random_panel(11, 8, 6, 2, 4);
  const CountTables c = count_tables(p, Discretization(2));
  std::vector<long> hist(5, 0);
  for (std::size_t r = 0; r < p.size(); ++r) ++hist[p.x(r)];
  for (int x = 1; x <= 4; ++x) CHECK(c.n_state(x, 0) == hist[x]);
}

TEST_CASE("count_tables matches brute-force enumeration on a hand-built panel") {
  const Panel p({obs(1, 1, 1, 0, {0.2}), obs(1, 2, 2, 1, {0.8}), obs(1, 3, 1, 0, {0.7}),
                 obs(2, 1, 2, 1, {0.1}), obs(2, 2, 1, 0, {0.9}), obs(2, 3, 2, 0, {0.3})},
                {1, 2, 1, 2});
  Discretization tree(1);
  tree.split(0, 0, 0.5);
  const CountTables c = count_tables(p, tree);
  // state (x, pi) of each row, pi = q >= 0.5
  const int xs[6] = {1, 2, 1, 2, 1, 2};
  const int ps[6] = {0, 1, 1, 0, 1, 0};
  const int ds[6] = {0, 1, 0, 1, 0, 0};
  for (int x = 1; x <= 2; ++x) {
    for (int pi = 0; pi < 2; ++pi) {
      long n = 0;
      long nj[2] = {0, 0};
      for (int r = 0; r < 6; ++r) {
        if (xs[r] == x && ps[r] == pi) {
          ++n;
          ++nj[ds[r]];
        }
      }
      CHECK(c.n_state(x, pi) == n);
      for (int j = 0; j < 2; ++j) CHECK(c.n_state_choice(x, pi, j) == nj[j]);
    }
  }
  for (int x0 = 1; x0 <= 2; ++x0) {
    for (int p0 = 0; p0 < 2; ++p0) {
      for (int j = 0; j < 2; ++j) {
        long origin = 0;
        for (int x1 = 1; x1 <= 2; ++x1) {
          for (int p1 = 0; p1 < 2; ++p1) {
            long n = 0;
            for (int r = 0; r < 6; ++r) {
              if (r % 3 == 0) continue;  // first period of each agent
              const int a = r - 1;
              if (xs[a] == x0 && ps[a] == p0 && ds[a] == j && xs[r] == x1 && ps[r] == p1) ++n;
            }
            CHECK(c.n_transition(x0, p0, j, x1, p1) == n);
            origin += n;
          }
        }
        CHECK(c.n_origin_choice(x0, p0, j) == origin);
      }
    }
  }
  CHECK(c.n_transitions() == 4);
}

TEST_CASE("count invariants on random panels") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Panel p = testutil::random_panel(seed, 6, 7, 2, 3, 3);
    Discretization tree(2);
    tree.split(0, 0, 1.5);
    tree.split(1, 1, 2.5);
    const CountTables c = count_tables(p, tree);
    std::int64_t total = 0, trans = 0;
    c.for_each_state([&](int s, std::int64_t n) {
      std::int64_t sum = 0;
      for (int j = 0; j < 3; ++j) sum += c.state_choice(s, j);
      CHECK(sum == n);
      total += n;
    });
    c.for_each_transition([&](int, int, int, std::int64_t n) { trans += n; });
    CHECK(total == static_cast<std::int64_t>(p.size()));
    CHECK(trans == static_cast<std::int64_t>(p.size() - p.n_agents()));

    // Refinement: merging the children of the last split gives the parent counts.
    const CountTables coarse = count_tables(p, tree.truncated(2));
    for (int x = 1; x <= 3; ++x) {
      CHECK(coarse.n_state(x, 1) == c.n_state(x, 1) + c.n_state(x, 2));
      for (int j = 0; j < 3; ++j) {
        CHECK(coarse.n_state_choice(x, 1, j) == c.n_state_choice(x, 1, j) + c.n_state_choice(x, 2, j));
      }
    }
  }
}

TEST_CASE("count_tables is invariant to agent order") {
  const Panel p = testutil::random_panel(4, 9, 5, 2);
  // Renumber agents in reverse so the stored order changes.
  std::vector<Observation> rows;
  for (std::size_t r = 0; r < p.size(); ++r) {
    Observation o = p.observation(r);
    o.agent_id = 100 - o.agent_id;
    rows.push_back(o);
  }
  const Panel q(rows, p.meta());
  Discretization tree(2);
  tree.split(0, 1, 1.5);
  const CountTables a = count_tables(p, tree);
  const CountTables b = count_tables(q, tree);
  a.for_each_transition([&](int from, int j, int to, std::int64_t n) {
    CHECK(b.n_transition(a.space().x_of(from), a.space().partition_of(from), j,
                         a.space().x_of(to), a.space().partition_of(to)) == n);
  });
  CHECK(a.n_transitions() == b.n_transitions());
}

TEST_CASE("dimension mismatch between panel and tree") {
  const Panel p = testutil::random_panel(1, 2, 2, 3);
  CHECK_THROWS_AS(count_tables(p, Discretization(2)), ValidationError);
}
