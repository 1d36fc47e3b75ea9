#include "structmarl/thermal.hpp"

#include <cmath>
#include <stdexcept>

namespace structmarl {

ThermalEnv::ThermalEnv(CouplingGraphs graphs, ThermalParams params)
    : graphs_(std::move(graphs)),
      params_(std::move(params)),
      idx_(derive_index_sets(graphs_)) {
  if (params_.delta <= 0 || params_.capacitance <= 0 ||
      params_.env_resistance <= 0 || params_.pair_resistance <= 0) {
    throw std::invalid_argument("ThermalEnv: physics constants must be > 0");
  }
  neighbours_.resize(graphs_.n_agents);
  for (int i = 1; i <= graphs_.n_agents; ++i) {
    for (int j : idx_.i_s[i - 1]) {
      if (j != i) neighbours_[i - 1].push_back(j);
    }
  }
}

GlobalState ThermalEnv::reset(Rng& rng) const {
  GlobalState state;
  state.t = 0;
  state.x.resize(graphs_.n_agents);
  const double std_dev = std::sqrt(params_.init_var);
  for (int i = 0; i < graphs_.n_agents; ++i) {
    state.x(i) = rng.normal(params_.init_mean, std_dev);
  }
  return state;
}

std::vector<Eigen::VectorXd> ThermalEnv::observe(
    const GlobalState& state) const {
  std::vector<Eigen::VectorXd> obs(graphs_.n_agents);
  for (int i = 1; i <= graphs_.n_agents; ++i) {
    Eigen::VectorXd o(obs_dim(i));
    int k = 0;
    for (int j : idx_.i_o[i - 1]) o(k++) = state.x(j - 1);
    obs[i - 1] = std::move(o);
  }
  return obs;
}

std::pair<GlobalState, Eigen::VectorXd> ThermalEnv::step(
    const GlobalState& state, const JointAction& actions, Rng& rng) const {
  const int n = graphs_.n_agents;
  if (static_cast<int>(actions.size()) != n) {
    throw std::invalid_argument("thermal step: need one action per agent");
  }
  const double a = params_.delta / params_.capacitance;

  GlobalState next;
  next.t = state.t + 1;
  next.x.resize(n);
  Eigen::VectorXd rewards(n);
  for (int i = 0; i < n; ++i) {
    if (actions[i].size() != 1) {
      throw std::invalid_argument("thermal step: actions are scalar");
    }
    const double x = state.x(i);
    const double u = actions[i](0);
    double dx = a / params_.env_resistance * (params_.outdoor - x) +
                a * (u + params_.internal_gain);
    for (int j : neighbours_[i]) {
      dx += (state.x(j - 1) - x) * a / params_.pair_resistance;
    }
    next.x(i) = x + dx + params_.noise_std * rng.normal();

    const double err = x - params_.target;
    rewards(i) = -err * err - params_.action_penalty * u * u;
  }
  return {std::move(next), std::move(rewards)};
}

std::shared_ptr<const ThermalEnv> make_thermal(CouplingGraphs graphs,
                                               ThermalParams params) {
  return std::make_shared<const ThermalEnv>(std::move(graphs),
                                            std::move(params));
}

}  // namespace structmarl
