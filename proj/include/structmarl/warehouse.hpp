#pragma once

#include <memory>

#include "structmarl/env.hpp"

namespace structmarl {

// Resource-routing game. Agent i holds stock m_i, receives the exogenous
// inflow z_i(t) = amplitude_i * sin(omega * t + phase), and its action
// splits the stock between its dynamics out-neighbours plus one retained
// share. Stock only flows out while non-negative; shortfalls are
// penalized quadratically through the reward graph.
struct WarehouseParams {
  Eigen::VectorXd amplitude;  // one entry per agent
  double omega = 1.0;
  double phase = 0.0;
  double m0 = 1.0;
  int episode_length = 8;
};

class WarehouseEnv final : public EnvModel {
 public:
  WarehouseEnv(CouplingGraphs graphs, WarehouseParams params);

  std::string name() const override { return "warehouse"; }
  int n_agents() const override { return graphs_.n_agents; }
  const CouplingGraphs& coupling() const override { return graphs_; }

  // State block i = (m_i, z_i(t)).
  int state_dim(int) const override { return 2; }
  int obs_dim(int agent) const override;
  int action_dim(int agent) const override;
  ActorSpec actor_spec(int agent) const override;
  int episode_length() const override { return params_.episode_length; }

  GlobalState reset(Rng& rng) const override;
  std::vector<Eigen::VectorXd> observe(const GlobalState& state) const override;
  std::pair<GlobalState, Eigen::VectorXd> step(const GlobalState& state,
                                               const JointAction& actions,
                                               Rng& rng) const override;

  // Ascending dynamics out-neighbours of `agent`; action entry k routes
  // to out_neighbours(agent)[k], the trailing entry is retained.
  const std::vector<int>& out_neighbours(int agent) const {
    return out_[agent - 1];
  }

  const WarehouseParams& params() const { return params_; }

 private:
  CouplingGraphs graphs_;
  WarehouseParams params_;
  IndexSets idx_;
  std::vector<std::vector<int>> out_;  // [i-1], ascending
};

std::shared_ptr<const WarehouseEnv> make_warehouse(CouplingGraphs graphs,
                                                   WarehouseParams params);

}  // namespace structmarl
