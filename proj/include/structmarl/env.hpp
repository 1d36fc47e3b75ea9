#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "structmarl/coupling.hpp"
#include "structmarl/mlp.hpp"
#include "structmarl/rng.hpp"

namespace structmarl {

// Concatenated per-agent state blocks plus the step counter driving any
// exogenous signals.
struct GlobalState {
  Eigen::VectorXd x;
  int t = 0;
};

using JointAction = std::vector<Eigen::VectorXd>;

// How an agent's policy network should be shaped for this environment.
struct ActorSpec {
  std::vector<int> hidden;
  Mlp::Head head = Mlp::Head::Linear;
  double u_max = 1.0;
};

// A simulatable game: local observations, factored rewards, and state
// blocks laid out back to back inside GlobalState::x. Implementations
// are immutable; all mutable simulation state lives in GlobalState and
// the caller's Rng, so one instance may serve many concurrent runs.
class EnvModel {
 public:
  virtual ~EnvModel() = default;

  virtual std::string name() const = 0;
  virtual int n_agents() const = 0;
  virtual const CouplingGraphs& coupling() const = 0;

  virtual int state_dim(int agent) const = 0;
  virtual int obs_dim(int agent) const = 0;
  virtual int action_dim(int agent) const = 0;
  virtual ActorSpec actor_spec(int agent) const = 0;

  virtual int episode_length() const = 0;

  virtual GlobalState reset(Rng& rng) const = 0;
  virtual std::vector<Eigen::VectorXd> observe(
      const GlobalState& state) const = 0;
  virtual std::pair<GlobalState, Eigen::VectorXd> step(
      const GlobalState& state, const JointAction& actions,
      Rng& rng) const = 0;

  int state_offset(int agent) const {
    int off = 0;
    for (int j = 1; j < agent; ++j) off += state_dim(j);
    return off;
  }
  int total_state_dim() const {
    return state_offset(n_agents()) + state_dim(n_agents());
  }
};

}  // namespace structmarl
