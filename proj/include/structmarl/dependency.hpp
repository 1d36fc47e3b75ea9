#pragma once

#include <set>
#include <vector>

#include "structmarl/coupling.hpp"
#include "structmarl/mabn.hpp"

namespace structmarl {

// Which agents' states and actions the named agent's action-value can
// depend on. e_vd lists (j,i) for every j in i_q[i-1], self-loops
// included, sorted.
struct ValueDependency {
  std::vector<std::set<int>> i_q;
  std::vector<Edge> e_vd;

  int n_agents() const { return static_cast<int>(i_q.size()); }
};

// Transpose view: whose action-values the named agent's policy
// parameters can influence.
struct GradientDependency {
  std::vector<std::set<int>> i_gd;
  std::vector<Edge> e_gd;
};

struct QhatIndex {
  std::vector<std::set<int>> i_qhat;
};

struct KappaDependency {
  int kappa = 0;
  ValueDependency vd;
};

// Backward recursion seeds/steps, result[i-1][tau - t] = U_i^tau:
//   U_i^T    = union over j in I_R^i(T) of I_O^j(T)
//   U_i^tau  = union over j in I_R^i(tau) of I_O^j(tau)
//            | union over j in U_i^{tau+1}, k in I_S^j(tau+1) of I_O^k(tau)
std::vector<std::vector<std::set<int>>> u_sets(const TimeVaryingIndexSets& idx,
                                               int t, int horizon);

// I_Q^i(t) = union of U_i^tau over tau = t..T.
ValueDependency value_dependency(const TimeVaryingIndexSets& idx, int t,
                                 int horizon);

// Time-invariant couplings: iterate the recursion step until the sets
// stop growing; the fixed point equals I_Q at any t with enough horizon
// margin.
ValueDependency value_dependency_fixed_point(const IndexSets& idx);

// Independent route: (j,i) is a dependency iff some s_j(tau) or a_j(tau),
// tau >= t, reaches an optimality node Z_i(tau'), tau' <= T.
ValueDependency value_dependency_by_pathfinding(const Mabn& g, int t,
                                                int horizon);

GradientDependency gradient_dependency(const ValueDependency& vd);

// I_Qhat^i = union of I_Q^j over j in I_GD^i.
QhatIndex qhat_sets(const ValueDependency& vd, const GradientDependency& gd);

// kappa-bounded approximation on the folded graph; membership is decided
// by state-node reachability (action reachability never exceeds it).
KappaDependency kappa_dependency(const FoldedMabn& g, int kappa);

// Smallest kappa whose sets match kappa+1 (they have saturated).
KappaDependency kappa_saturated(const FoldedMabn& g);

// Strongly connected components of a directed agent graph.
int scc_count(int n_agents, const std::vector<Edge>& edges);

}  // namespace structmarl
