#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "structmarl/coupling.hpp"
#include "structmarl/rng.hpp"

namespace structmarl {

// Mixed-radix index over digit vectors; the last digit varies fastest.
// Frozen convention shared by every joint-table layout below.
std::int64_t mixed_radix_encode(const std::vector<int>& digits,
                                const std::vector<int>& radices);
std::vector<int> mixed_radix_decode(std::int64_t index,
                                    const std::vector<int>& radices);
std::int64_t mixed_radix_size(const std::vector<int>& radices);

// Finite cooperative game whose transition and reward tables are factored
// along the coupling graphs: agent i's next state is drawn from a row of
// trans[i] selected by (s, a) restricted to I_S^i, and its reward reads
// (s, a) restricted to I_R^i. Small enough to enumerate, so oracle
// checks can be exhaustive.
struct TabularPoscg {
  CouplingGraphs graphs;
  IndexSets idx;
  std::vector<int> n_states;   // [i-1] local state alphabet size
  std::vector<int> n_actions;  // [i-1] local action alphabet size
  // trans[i-1]: rows = dyn condition (s_{I_S^i} then a_{I_S^i}, each
  // ascending by agent, last fastest), cols = next local state.
  std::vector<Eigen::MatrixXd> trans;
  // reward[i-1]: indexed by rew condition (s_{I_R^i} then a_{I_R^i}).
  std::vector<Eigen::VectorXd> reward;
  Eigen::VectorXd p0;  // joint initial state distribution
  int horizon = 3;

  int n_agents() const { return graphs.n_agents; }
  std::vector<int> state_radices() const { return n_states; }
  std::vector<int> action_radices() const { return n_actions; }
  std::int64_t n_joint_states() const { return mixed_radix_size(n_states); }
  std::int64_t n_joint_actions() const { return mixed_radix_size(n_actions); }

  // Condition indices from per-agent digit vectors (0-based digits).
  std::int64_t dyn_cond(int agent, const std::vector<int>& s,
                        const std::vector<int>& a) const;
  std::int64_t rew_cond(int agent, const std::vector<int>& s,
                        const std::vector<int>& a) const;
  // Observation index over s_{I_O^agent}.
  std::int64_t obs_index(int agent, const std::vector<int>& s) const;
  std::int64_t n_obs(int agent) const;

  double transition_prob(const std::vector<int>& s, const std::vector<int>& a,
                         const std::vector<int>& s_next) const;
  double reward_of(int agent, const std::vector<int>& s,
                   const std::vector<int>& a) const;

  // Shape and stochasticity checks; throws std::invalid_argument.
  void validate(double tol = 1e-12) const;
};

// Exhaustive walk over all (joint state, joint action) index pairs in a
// fixed order: state-major, action fastest. Construction fails when the
// product space exceeds the cap.
class TabularEnumerator {
 public:
  explicit TabularEnumerator(const TabularPoscg& game,
                             std::int64_t cap = 10'000'000);

  std::int64_t total() const { return total_; }
  // Returns false once exhausted.
  bool next(std::int64_t& state_index, std::int64_t& action_index);
  void reset() { cursor_ = 0; }

 private:
  std::int64_t n_actions_;
  std::int64_t total_;
  std::int64_t cursor_ = 0;
};

// Random instance on the given graphs: transition rows are normalized
// uniform draws, rewards uniform in [-1, 1], p0 a normalized uniform
// draw. Alphabet sizes are shared by all agents.
TabularPoscg random_poscg(CouplingGraphs graphs, int states_per_agent,
                          int actions_per_agent, int horizon, Rng& rng);

}  // namespace structmarl
