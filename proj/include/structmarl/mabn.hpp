#pragma once

#include <compare>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "structmarl/coupling.hpp"

namespace structmarl {

enum class NodeKind : int { State = 0, Action = 1, Optimality = 2 };

struct MabnNode {
  NodeKind kind = NodeKind::State;
  int agent = 1;  // 1-based
  int time = 0;   // layer index
  auto operator<=>(const MabnNode&) const = default;
};

MabnNode state_node(int agent, int time);
MabnNode action_node(int agent, int time);
MabnNode optimality_node(int agent, int time);

// Layered DAG over per-agent state, action and optimality nodes.
// Optimality nodes are structural sinks standing for "reward of agent i
// at time t"; they carry no distribution, only incoming edges.
//
// Layer t holds, for every agent i:
//   s_j(t) -> a_i(t)                     for j in I_O^i(t)
//   s_j(t) -> Z_i(t), a_j(t) -> Z_i(t)   for j in I_R^i(t)
// and between layers:
//   s_j(t) -> s_i(t+1), a_j(t) -> s_i(t+1)  for j in I_S^i(t+1).
class Mabn {
 public:
  Mabn(int n_agents, int horizon);

  int n_agents() const { return n_agents_; }
  int horizon() const { return horizon_; }
  int node_count() const { return static_cast<int>(succ_.size()); }
  std::size_t edge_count() const { return edge_count_; }

  bool contains(MabnNode v) const;
  int id(MabnNode v) const;  // throws std::out_of_range if !contains(v)
  MabnNode node(int id) const;

  void add_edge(MabnNode from, MabnNode to);
  bool has_edge(MabnNode from, MabnNode to) const;
  const std::vector<int>& successors(int id) const { return succ_[id]; }
  const std::vector<int>& predecessors(int id) const { return pred_[id]; }

  // Sorted by (from, to) in node-id order.
  std::vector<std::pair<MabnNode, MabnNode>> edges() const;

  bool is_acyclic() const;
  std::string to_dot() const;

 private:
  int n_agents_;
  int horizon_;
  std::size_t edge_count_ = 0;
  std::vector<std::vector<int>> succ_;
  std::vector<std::vector<int>> pred_;
};

Mabn build_full(const TimeVaryingIndexSets& idx, int horizon);
Mabn build_full(const IndexSets& idx, int horizon);

// True iff a directed path from `from` to `to` exists (trivially true
// when from == to).
bool reaches(const Mabn& g, MabnNode from, MabnNode to);

// Two-layer compression of the time-invariant graph: layers 0 ("now")
// and 1 ("next") each carry the observation and reward edges, dynamics
// edges run 0 -> 1, and each agent's own state pair is joined by a
// bidirectional edge. Traversing that edge backwards (layer 1 -> 0)
// re-bases the frame one step later in the unrolled graph, so a path
// using k backward traversals corresponds to an unrolled path over
// horizon k+1.
class FoldedMabn {
 public:
  explicit FoldedMabn(const IndexSets& idx);

  int n_agents() const { return n_agents_; }
  int node_count() const { return static_cast<int>(succ_.size()); }
  std::size_t forward_edge_count() const { return forward_edges_; }
  int bidirectional_pair_count() const { return n_agents_; }

  bool contains(MabnNode v) const;
  int id(MabnNode v) const;
  MabnNode node(int id) const;

  const std::vector<int>& successors(int id) const { return succ_[id]; }
  // Backward direction of the per-agent bidirectional state edges.
  const std::vector<int>& rebase_successors(int id) const {
    return back_[id];
  }

  std::string to_dot() const;

 private:
  int n_agents_;
  std::size_t forward_edges_ = 0;
  std::vector<std::vector<int>> succ_;
  std::vector<std::vector<int>> back_;
};

FoldedMabn build_folded(const IndexSets& idx);

// First-layer state/action nodes from which the target agent's layer-1
// optimality node is reachable using at most kappa backward traversals
// of the bidirectional edges.
std::set<MabnNode> bounded_reach_sources(const FoldedMabn& g,
                                         int target_agent, int kappa);

}  // namespace structmarl
