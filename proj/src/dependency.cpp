#include "structmarl/dependency.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace structmarl {
namespace {

std::vector<Edge> edges_from_sets(const std::vector<std::set<int>>& sets) {
  std::vector<Edge> edges;
  for (int i = 1; i <= static_cast<int>(sets.size()); ++i) {
    for (int j : sets[i - 1]) edges.emplace_back(j, i);
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

std::set<int> recursion_base(const IndexSets& idx, int i) {
  std::set<int> out;
  for (int j : idx.i_r[i - 1]) {
    out.insert(idx.i_o[j - 1].begin(), idx.i_o[j - 1].end());
  }
  return out;
}

// One backward step: agents observable at the parents of next's members.
std::set<int> recursion_step(const IndexSets& here, const IndexSets& next,
                             int i, const std::set<int>& u_next) {
  std::set<int> out = recursion_base(here, i);
  for (int j : u_next) {
    for (int k : next.i_s[j - 1]) {
      out.insert(here.i_o[k - 1].begin(), here.i_o[k - 1].end());
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::set<int>>> u_sets(const TimeVaryingIndexSets& idx,
                                               int t, int horizon) {
  if (t < 0 || t > horizon) {
    throw std::invalid_argument("u_sets: need 0 <= t <= horizon");
  }
  if (static_cast<int>(idx.size()) < horizon + 1) {
    throw std::invalid_argument("u_sets: need index sets for t = 0..T");
  }
  const int n = idx[0].n_agents();
  std::vector<std::vector<std::set<int>>> u(
      n, std::vector<std::set<int>>(horizon - t + 1));
  for (int i = 1; i <= n; ++i) {
    u[i - 1][horizon - t] = recursion_base(idx[horizon], i);
    for (int tau = horizon - 1; tau >= t; --tau) {
      u[i - 1][tau - t] = recursion_step(idx[tau], idx[tau + 1], i,
                                         u[i - 1][tau - t + 1]);
    }
  }
  return u;
}

ValueDependency value_dependency(const TimeVaryingIndexSets& idx, int t,
                                 int horizon) {
  const auto u = u_sets(idx, t, horizon);
  ValueDependency vd;
  vd.i_q.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (const auto& u_tau : u[i]) {
      vd.i_q[i].insert(u_tau.begin(), u_tau.end());
    }
  }
  vd.e_vd = edges_from_sets(vd.i_q);
  return vd;
}

ValueDependency value_dependency_fixed_point(const IndexSets& idx) {
  const int n = idx.n_agents();
  ValueDependency vd;
  vd.i_q.resize(n);
  for (int i = 1; i <= n; ++i) {
    // Sets only grow along the backward recursion, so the fixed point is
    // both the limit of U_i^tau and the union over all tau.
    std::set<int> u = recursion_base(idx, i);
    for (;;) {
      std::set<int> grown = recursion_step(idx, idx, i, u);
      if (grown == u) break;
      u = std::move(grown);
    }
    vd.i_q[i - 1] = std::move(u);
  }
  vd.e_vd = edges_from_sets(vd.i_q);
  return vd;
}

ValueDependency value_dependency_by_pathfinding(const Mabn& g, int t,
                                                int horizon) {
  if (t < 0 || t > horizon || horizon > g.horizon()) {
    throw std::invalid_argument(
        "value_dependency_by_pathfinding: need 0 <= t <= horizon <= "
        "graph horizon");
  }
  const int n = g.n_agents();
  ValueDependency vd;
  vd.i_q.resize(n);
  for (int i = 1; i <= n; ++i) {
    // Multi-target reverse reachability from every Z_i(tau'), tau' in
    // [t, T]; any reached state or action node at time >= t marks its
    // agent as a dependency.
    std::vector<char> seen(g.node_count(), 0);
    std::deque<int> frontier;
    for (int tau = t; tau <= horizon; ++tau) {
      const int z = g.id(optimality_node(i, tau));
      if (!seen[z]) {
        seen[z] = 1;
        frontier.push_back(z);
      }
    }
    while (!frontier.empty()) {
      const int v = frontier.front();
      frontier.pop_front();
      for (int u : g.predecessors(v)) {
        if (!seen[u]) {
          seen[u] = 1;
          frontier.push_back(u);
        }
      }
    }
    for (int id = 0; id < g.node_count(); ++id) {
      if (!seen[id]) continue;
      const MabnNode v = g.node(id);
      if (v.kind == NodeKind::Optimality || v.time < t) continue;
      vd.i_q[i - 1].insert(v.agent);
    }
  }
  vd.e_vd = edges_from_sets(vd.i_q);
  return vd;
}

GradientDependency gradient_dependency(const ValueDependency& vd) {
  const int n = vd.n_agents();
  GradientDependency gd;
  gd.i_gd.resize(n);
  gd.e_gd = transpose_edges(vd.e_vd);
  for (const Edge& e : gd.e_gd) gd.i_gd[e.second - 1].insert(e.first);
  for (int i = 1; i <= n; ++i) gd.i_gd[i - 1].insert(i);
  return gd;
}

QhatIndex qhat_sets(const ValueDependency& vd, const GradientDependency& gd) {
  if (vd.n_agents() != static_cast<int>(gd.i_gd.size())) {
    throw std::invalid_argument("qhat_sets: mismatched agent counts");
  }
  QhatIndex qh;
  qh.i_qhat.resize(vd.n_agents());
  for (int i = 1; i <= vd.n_agents(); ++i) {
    for (int j : gd.i_gd[i - 1]) {
      qh.i_qhat[i - 1].insert(vd.i_q[j - 1].begin(), vd.i_q[j - 1].end());
    }
  }
  return qh;
}

KappaDependency kappa_dependency(const FoldedMabn& g, int kappa) {
  const int n = g.n_agents();
  KappaDependency kd;
  kd.kappa = kappa;
  kd.vd.i_q.resize(n);
  for (int i = 1; i <= n; ++i) {
    for (const MabnNode& v : bounded_reach_sources(g, i, kappa)) {
      if (v.kind == NodeKind::State) kd.vd.i_q[i - 1].insert(v.agent);
    }
  }
  kd.vd.e_vd = edges_from_sets(kd.vd.i_q);
  return kd;
}

KappaDependency kappa_saturated(const FoldedMabn& g) {
  KappaDependency kd = kappa_dependency(g, 0);
  for (;;) {
    KappaDependency next = kappa_dependency(g, kd.kappa + 1);
    if (next.vd.i_q == kd.vd.i_q) return kd;
    kd = std::move(next);
  }
}

int scc_count(int n_agents, const std::vector<Edge>& edges) {
  // Kosaraju: order by first-pass finish time, then peel on the transpose.
  std::vector<std::vector<int>> succ(n_agents), pred(n_agents);
  for (const Edge& e : edges) {
    if (e.first < 1 || e.first > n_agents || e.second < 1 ||
        e.second > n_agents) {
      throw std::invalid_argument("scc_count: edge endpoint out of range");
    }
    succ[e.first - 1].push_back(e.second - 1);
    pred[e.second - 1].push_back(e.first - 1);
  }
  std::vector<char> seen(n_agents, 0);
  std::vector<int> order;
  order.reserve(n_agents);
  for (int root = 0; root < n_agents; ++root) {
    if (seen[root]) continue;
    // Iterative DFS with an explicit edge cursor to record finish order.
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    seen[root] = 1;
    while (!stack.empty()) {
      auto& [v, cursor] = stack.back();
      if (cursor < succ[v].size()) {
        const int w = succ[v][cursor++];
        if (!seen[w]) {
          seen[w] = 1;
          stack.emplace_back(w, 0);
        }
      } else {
        order.push_back(v);
        stack.pop_back();
      }
    }
  }
  std::fill(seen.begin(), seen.end(), 0);
  int components = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (seen[*it]) continue;
    ++components;
    std::deque<int> frontier{*it};
    seen[*it] = 1;
    while (!frontier.empty()) {
      const int v = frontier.front();
      frontier.pop_front();
      for (int w : pred[v]) {
        if (!seen[w]) {
          seen[w] = 1;
          frontier.push_back(w);
        }
      }
    }
  }
  return components;
}

}  // namespace structmarl
