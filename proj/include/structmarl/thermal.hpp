#pragma once

#include <memory>

#include "structmarl/env.hpp"

namespace structmarl {

// Linear RC building model. Zone i tracks temperature x_i; neighbours
// exchange heat through pairwise resistances, the envelope pulls towards
// the outdoor temperature, and the scalar action u_i is HVAC power in kW
// (negative = cooling). Rewards penalize squared tracking error and
// actuation effort.
struct ThermalParams {
  double delta = 60.0;        // step length, seconds
  double capacitance = 200.0;  // kJ/degC, per zone
  double env_resistance = 1.0;
  double pair_resistance = 1.0;
  double outdoor = 30.0;
  double internal_gain = 1.0;  // kW
  double target = 22.0;
  double action_penalty = 0.01;
  double u_max = 15.0;
  double init_mean = 30.0;
  double init_var = 2.5;
  double noise_std = 0.09682458365518543;  // sqrt(delta * 6.25) / capacitance
  int episode_length = 40;
};

class ThermalEnv final : public EnvModel {
 public:
  ThermalEnv(CouplingGraphs graphs, ThermalParams params);

  std::string name() const override { return "thermal"; }
  int n_agents() const override { return graphs_.n_agents; }
  const CouplingGraphs& coupling() const override { return graphs_; }

  int state_dim(int) const override { return 1; }
  int obs_dim(int agent) const override {
    return static_cast<int>(idx_.i_o[agent - 1].size());
  }
  int action_dim(int) const override { return 1; }
  ActorSpec actor_spec(int) const override {
    return {{}, Mlp::Head::Tanh, params_.u_max};
  }
  int episode_length() const override { return params_.episode_length; }

  GlobalState reset(Rng& rng) const override;
  std::vector<Eigen::VectorXd> observe(const GlobalState& state) const override;
  std::pair<GlobalState, Eigen::VectorXd> step(const GlobalState& state,
                                               const JointAction& actions,
                                               Rng& rng) const override;

  const ThermalParams& params() const { return params_; }

 private:
  CouplingGraphs graphs_;
  ThermalParams params_;
  IndexSets idx_;
  std::vector<std::vector<int>> neighbours_;  // state in-neighbours, no self
};

std::shared_ptr<const ThermalEnv> make_thermal(CouplingGraphs graphs,
                                               ThermalParams params);

}  // namespace structmarl
