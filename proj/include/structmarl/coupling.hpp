#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace structmarl {

// Directed edge (source, destination); agent ids are 1-based everywhere.
using Edge = std::pair<int, int>;

// The three coupling graphs of a game: who feeds whose dynamics, whose
// state enters whose observation, and whose state/action enters whose
// reward. Edge lists may arrive unsorted and with duplicates; validate()
// reports problems and derive_index_sets() rejects malformed input.
struct CouplingGraphs {
  int n_agents = 0;
  std::vector<Edge> state;
  std::vector<Edge> obs;
  std::vector<Edge> reward;
};

// Per-agent in-neighbourhoods including the agent itself, indexed [i-1].
// i_s[i-1] also names the agents whose actions enter i's dynamics, and
// i_r[i-1] the agents whose actions enter i's reward.
struct IndexSets {
  std::vector<std::set<int>> i_s;
  std::vector<std::set<int>> i_o;
  std::vector<std::set<int>> i_r;

  int n_agents() const { return static_cast<int>(i_s.size()); }
};

// One IndexSets per time step t = 0..T.
using TimeVaryingIndexSets = std::vector<IndexSets>;

// errors make the input unusable; notes record accepted oddities
// (self-edges, duplicates) that later stages deduplicate silently.
struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> notes;

  bool ok() const { return errors.empty(); }
};

ValidationReport validate(const CouplingGraphs& g);

// Throws std::invalid_argument when validate() reports errors.
IndexSets derive_index_sets(const CouplingGraphs& g);

// Reversed edges, sorted and deduplicated.
std::vector<Edge> transpose_edges(const std::vector<Edge>& edges);

// Repeats one IndexSets across t = 0..T.
TimeVaryingIndexSets repeat_index_sets(const IndexSets& idx, int horizon);

// JSON schema: {"n_agents": N, "state": [[j,i],...], "obs": [...],
// "reward": [...]} with 1-based, source-first pairs.
CouplingGraphs coupling_from_json(const std::string& text);
CouplingGraphs load_coupling(const std::filesystem::path& file);
std::string coupling_to_json(const CouplingGraphs& g);
void save_coupling(const CouplingGraphs& g, const std::filesystem::path& file);

}  // namespace structmarl
