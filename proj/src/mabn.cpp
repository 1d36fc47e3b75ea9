#include "structmarl/mabn.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace structmarl {
namespace {

const char* kind_tag(NodeKind k) {
  switch (k) {
    case NodeKind::State: return "s";
    case NodeKind::Action: return "a";
    default: return "Z";
  }
}

std::string node_label(MabnNode v) {
  std::ostringstream out;
  out << kind_tag(v.kind) << v.agent << "_t" << v.time;
  return out.str();
}

}  // namespace

MabnNode state_node(int agent, int time) {
  return {NodeKind::State, agent, time};
}
MabnNode action_node(int agent, int time) {
  return {NodeKind::Action, agent, time};
}
MabnNode optimality_node(int agent, int time) {
  return {NodeKind::Optimality, agent, time};
}

Mabn::Mabn(int n_agents, int horizon) : n_agents_(n_agents), horizon_(horizon) {
  if (n_agents < 1) throw std::invalid_argument("Mabn: n_agents must be >= 1");
  if (horizon < 0) throw std::invalid_argument("Mabn: horizon must be >= 0");
  const std::size_t nodes =
      static_cast<std::size_t>(n_agents) * (horizon + 1) * 3;
  succ_.resize(nodes);
  pred_.resize(nodes);
}

bool Mabn::contains(MabnNode v) const {
  return v.agent >= 1 && v.agent <= n_agents_ && v.time >= 0 &&
         v.time <= horizon_;
}

int Mabn::id(MabnNode v) const {
  if (!contains(v)) {
    throw std::out_of_range("Mabn: unknown node " + node_label(v));
  }
  return (v.time * n_agents_ + (v.agent - 1)) * 3 + static_cast<int>(v.kind);
}

MabnNode Mabn::node(int id) const {
  const int kind = id % 3;
  const int cell = id / 3;
  return {static_cast<NodeKind>(kind), cell % n_agents_ + 1,
          cell / n_agents_};
}

void Mabn::add_edge(MabnNode from, MabnNode to) {
  const int u = id(from);
  const int v = id(to);
  succ_[u].push_back(v);
  pred_[v].push_back(u);
  ++edge_count_;
}

bool Mabn::has_edge(MabnNode from, MabnNode to) const {
  const int u = id(from);
  const int v = id(to);
  return std::find(succ_[u].begin(), succ_[u].end(), v) != succ_[u].end();
}

std::vector<std::pair<MabnNode, MabnNode>> Mabn::edges() const {
  std::vector<std::pair<int, int>> raw;
  raw.reserve(edge_count_);
  for (int u = 0; u < node_count(); ++u) {
    for (int v : succ_[u]) raw.emplace_back(u, v);
  }
  std::sort(raw.begin(), raw.end());
  std::vector<std::pair<MabnNode, MabnNode>> out;
  out.reserve(raw.size());
  for (auto [u, v] : raw) out.emplace_back(node(u), node(v));
  return out;
}

bool Mabn::is_acyclic() const {
  // Kahn peel; acyclic iff every node gets removed.
  std::vector<int> indeg(node_count());
  for (int v = 0; v < node_count(); ++v) {
    indeg[v] = static_cast<int>(pred_[v].size());
  }
  std::deque<int> ready;
  for (int v = 0; v < node_count(); ++v) {
    if (indeg[v] == 0) ready.push_back(v);
  }
  int removed = 0;
  while (!ready.empty()) {
    const int u = ready.front();
    ready.pop_front();
    ++removed;
    for (int v : succ_[u]) {
      if (--indeg[v] == 0) ready.push_back(v);
    }
  }
  return removed == node_count();
}

std::string Mabn::to_dot() const {
  std::ostringstream out;
  out << "digraph mabn {\n  rankdir=LR;\n";
  for (int u = 0; u < node_count(); ++u) {
    out << "  " << node_label(node(u)) << ";\n";
  }
  for (const auto& [from, to] : edges()) {
    out << "  " << node_label(from) << " -> " << node_label(to) << ";\n";
  }
  out << "}\n";
  return out.str();
}

Mabn build_full(const TimeVaryingIndexSets& idx, int horizon) {
  if (static_cast<int>(idx.size()) < horizon + 1) {
    throw std::invalid_argument("build_full: need index sets for t = 0..T");
  }
  const int n = idx[0].n_agents();
  Mabn g(n, horizon);
  for (int t = 0; t <= horizon; ++t) {
    if (idx[t].n_agents() != n) {
      throw std::invalid_argument("build_full: inconsistent agent counts");
    }
    for (int i = 1; i <= n; ++i) {
      for (int j : idx[t].i_o[i - 1]) {
        g.add_edge(state_node(j, t), action_node(i, t));
      }
      for (int j : idx[t].i_r[i - 1]) {
        g.add_edge(state_node(j, t), optimality_node(i, t));
        g.add_edge(action_node(j, t), optimality_node(i, t));
      }
    }
  }
  for (int t = 0; t < horizon; ++t) {
    for (int i = 1; i <= n; ++i) {
      for (int j : idx[t + 1].i_s[i - 1]) {
        g.add_edge(state_node(j, t), state_node(i, t + 1));
        g.add_edge(action_node(j, t), state_node(i, t + 1));
      }
    }
  }
  return g;
}

Mabn build_full(const IndexSets& idx, int horizon) {
  return build_full(repeat_index_sets(idx, horizon), horizon);
}

bool reaches(const Mabn& g, MabnNode from, MabnNode to) {
  const int src = g.id(from);
  const int dst = g.id(to);
  if (src == dst) return true;
  std::vector<char> seen(g.node_count(), 0);
  std::deque<int> frontier{src};
  seen[src] = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop_front();
    for (int v : g.successors(u)) {
      if (v == dst) return true;
      if (!seen[v]) {
        seen[v] = 1;
        frontier.push_back(v);
      }
    }
  }
  return false;
}

FoldedMabn::FoldedMabn(const IndexSets& idx) : n_agents_(idx.n_agents()) {
  if (n_agents_ < 1) {
    throw std::invalid_argument("FoldedMabn: n_agents must be >= 1");
  }
  const std::size_t nodes = static_cast<std::size_t>(n_agents_) * 2 * 3;
  succ_.resize(nodes);
  back_.resize(nodes);
  auto add = [&](MabnNode from, MabnNode to) {
    succ_[id(from)].push_back(id(to));
    ++forward_edges_;
  };
  for (int t = 0; t < 2; ++t) {
    for (int i = 1; i <= n_agents_; ++i) {
      for (int j : idx.i_o[i - 1]) add(state_node(j, t), action_node(i, t));
      for (int j : idx.i_r[i - 1]) {
        add(state_node(j, t), optimality_node(i, t));
        add(action_node(j, t), optimality_node(i, t));
      }
    }
  }
  for (int i = 1; i <= n_agents_; ++i) {
    for (int j : idx.i_s[i - 1]) {
      add(state_node(j, 0), state_node(i, 1));
      add(action_node(j, 0), state_node(i, 1));
    }
    // Backward half of the bidirectional pair; the forward half is the
    // self dynamics edge added above (i is always in its own I_S).
    back_[id(state_node(i, 1))].push_back(id(state_node(i, 0)));
  }
}

bool FoldedMabn::contains(MabnNode v) const {
  return v.agent >= 1 && v.agent <= n_agents_ && (v.time == 0 || v.time == 1);
}

int FoldedMabn::id(MabnNode v) const {
  if (!contains(v)) {
    throw std::out_of_range("FoldedMabn: unknown node " + node_label(v));
  }
  return (v.time * n_agents_ + (v.agent - 1)) * 3 + static_cast<int>(v.kind);
}

MabnNode FoldedMabn::node(int id) const {
  const int kind = id % 3;
  const int cell = id / 3;
  return {static_cast<NodeKind>(kind), cell % n_agents_ + 1,
          cell / n_agents_};
}

std::string FoldedMabn::to_dot() const {
  std::ostringstream out;
  out << "digraph folded_mabn {\n  rankdir=LR;\n";
  for (int u = 0; u < node_count(); ++u) {
    out << "  " << node_label(node(u)) << ";\n";
  }
  for (int u = 0; u < node_count(); ++u) {
    std::vector<int> next = succ_[u];
    std::sort(next.begin(), next.end());
    for (int v : next) {
      const MabnNode a = node(u);
      const MabnNode b = node(v);
      if (a.kind == NodeKind::State && b.kind == NodeKind::State &&
          a.agent == b.agent) {
        out << "  " << node_label(a) << " -> " << node_label(b)
            << " [dir=both];\n";
      } else {
        out << "  " << node_label(a) << " -> " << node_label(b) << ";\n";
      }
    }
  }
  out << "}\n";
  return out.str();
}

FoldedMabn build_folded(const IndexSets& idx) { return FoldedMabn(idx); }

std::set<MabnNode> bounded_reach_sources(const FoldedMabn& g,
                                         int target_agent, int kappa) {
  if (kappa < 0) {
    throw std::invalid_argument("bounded_reach_sources: kappa must be >= 0");
  }
  const int target = g.id(optimality_node(target_agent, 1));
  const int nodes = g.node_count();
  // seen[v][k]: v reached with exactly k backward traversals spent.
  std::vector<std::vector<char>> seen(nodes,
                                      std::vector<char>(kappa + 1, 0));
  std::deque<std::pair<int, int>> frontier;

  // Forward search from every first-layer state/action node at once would
  // lose the per-source answer, so run the search backwards instead:
  // predecessors over forward edges keep the budget, predecessors over
  // backward (rebase) edges spend one unit.
  std::vector<std::vector<int>> fwd_pred(nodes), back_pred(nodes);
  for (int u = 0; u < nodes; ++u) {
    for (int v : g.successors(u)) fwd_pred[v].push_back(u);
    for (int v : g.rebase_successors(u)) back_pred[v].push_back(u);
  }
  frontier.emplace_back(target, 0);
  seen[target][0] = 1;
  while (!frontier.empty()) {
    const auto [v, k] = frontier.front();
    frontier.pop_front();
    for (int u : fwd_pred[v]) {
      if (!seen[u][k]) {
        seen[u][k] = 1;
        frontier.emplace_back(u, k);
      }
    }
    if (k < kappa) {
      for (int u : back_pred[v]) {
        if (!seen[u][k + 1]) {
          seen[u][k + 1] = 1;
          frontier.emplace_back(u, k + 1);
        }
      }
    }
  }
  std::set<MabnNode> sources;
  for (int u = 0; u < nodes; ++u) {
    const MabnNode v = g.node(u);
    if (v.time != 0 || v.kind == NodeKind::Optimality) continue;
    for (int k = 0; k <= kappa; ++k) {
      if (seen[u][k]) {
        sources.insert(v);
        break;
      }
    }
  }
  return sources;
}

}  // namespace structmarl
