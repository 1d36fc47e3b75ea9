#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "structmarl/builtin.hpp"
#include "structmarl/coupling.hpp"
#include "structmarl/rng.hpp"
#include "test_util.hpp"

using namespace structmarl;
using testutil::set_of;

TEST_CASE("index sets of the six-agent fixture") {
  const IndexSets idx = derive_index_sets(six_agent_graphs());
  REQUIRE(idx.n_agents() == 6);

  CHECK(idx.i_s[0] == set_of({1, 2}));
  CHECK(idx.i_s[1] == set_of({2}));
  CHECK(idx.i_s[2] == set_of({2, 3, 5}));
  CHECK(idx.i_s[3] == set_of({3, 4}));
  CHECK(idx.i_s[4] == set_of({5}));
  CHECK(idx.i_s[5] == set_of({5, 6}));

  const std::vector<std::set<int>> expected_obs = {
      {1}, {1, 2}, {3, 4}, {4}, {5, 6}, {6}};
  CHECK(idx.i_o == expected_obs);
  CHECK(idx.i_r == expected_obs);
}

TEST_CASE("agents with no edges still include themselves") {
  CouplingGraphs g;
  g.n_agents = 4;
  const IndexSets idx = derive_index_sets(g);
  for (int i = 1; i <= 4; ++i) {
    CHECK(idx.i_s[i - 1] == std::set<int>{i});
    CHECK(idx.i_o[i - 1] == std::set<int>{i});
    CHECK(idx.i_r[i - 1] == std::set<int>{i});
  }
}

TEST_CASE("self-edges and duplicates are accepted and deduplicated") {
  CouplingGraphs g;
  g.n_agents = 3;
  g.state = {{1, 1}, {2, 3}, {2, 3}};
  const ValidationReport report = validate(g);
  CHECK(report.ok());
  CHECK(report.notes.size() == 2);
  const IndexSets idx = derive_index_sets(g);
  CHECK(idx.i_s[0] == set_of({1}));
  CHECK(idx.i_s[2] == set_of({2, 3}));
}

TEST_CASE("out-of-range endpoints are validation errors naming the edge") {
  CouplingGraphs g;
  g.n_agents = 3;
  g.obs = {{1, 4}};
  const ValidationReport report = validate(g);
  REQUIRE_FALSE(report.ok());
  CHECK(report.errors.front().find("(1,4)") != std::string::npos);
  CHECK_THROWS_AS(derive_index_sets(g), std::invalid_argument);
}

TEST_CASE("n_agents must be positive") {
  CouplingGraphs g;
  g.n_agents = 0;
  CHECK_FALSE(validate(g).ok());
}

TEST_CASE("transpose reverses, sorts and deduplicates") {
  const std::vector<Edge> edges = {{3, 1}, {1, 2}, {1, 2}, {2, 3}};
  const std::vector<Edge> expected = {{1, 3}, {2, 1}, {3, 2}};
  CHECK(transpose_edges(edges) == expected);
}

TEST_CASE("transpose is an involution on deduplicated lists") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 8));
    std::vector<Edge> edges = testutil::random_edges(n, 0.4, rng);
    const std::vector<Edge> once = transpose_edges(edges);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    CHECK(transpose_edges(once) == edges);
  }
}

TEST_CASE("JSON round trip is canonical and byte-stable") {
  const CouplingGraphs g = six_agent_graphs();
  const std::string text = coupling_to_json(g);
  const CouplingGraphs loaded = coupling_from_json(text);
  CHECK(loaded.n_agents == g.n_agents);
  CHECK(loaded.state == g.state);
  CHECK(loaded.obs == g.obs);
  CHECK(loaded.reward == g.reward);
  CHECK(coupling_to_json(loaded) == text);
}

TEST_CASE("JSON parse rejects malformed documents") {
  CHECK_THROWS(coupling_from_json("[]"));
  CHECK_THROWS(coupling_from_json("{\"n_agents\": 2, \"state\": [[1]]}"));
  CHECK_THROWS(coupling_from_json("{\"state\": []}"));
}

TEST_CASE("fixture graph files match the builtin constructors") {
  const std::filesystem::path dir = STRUCTMARL_FIXTURES_DIR;
  const struct {
    const char* file;
    CouplingGraphs expected;
  } cases[] = {
      {"six_agent.json", six_agent_graphs()},
      {"warehouse9.json", warehouse9_graphs()},
      {"warehouse40.json", warehouse40_graphs()},
      {"thermal40.json", thermal40_graphs()},
  };
  for (const auto& c : cases) {
    CAPTURE(c.file);
    const CouplingGraphs loaded = load_coupling(dir / c.file);
    CHECK(coupling_to_json(loaded) == coupling_to_json(c.expected));
  }
}

TEST_CASE("repeat_index_sets copies across the horizon") {
  const IndexSets idx = derive_index_sets(six_agent_graphs());
  const TimeVaryingIndexSets tv = repeat_index_sets(idx, 3);
  REQUIRE(tv.size() == 4);
  CHECK(tv[0].i_s == idx.i_s);
  CHECK(tv[3].i_r == idx.i_r);
  CHECK_THROWS_AS(repeat_index_sets(idx, -1), std::invalid_argument);
}
