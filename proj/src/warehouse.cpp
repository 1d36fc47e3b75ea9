#include "structmarl/warehouse.hpp"

#include <cmath>
#include <stdexcept>

namespace structmarl {

WarehouseEnv::WarehouseEnv(CouplingGraphs graphs, WarehouseParams params)
    : graphs_(std::move(graphs)),
      params_(std::move(params)),
      idx_(derive_index_sets(graphs_)) {
  if (params_.amplitude.size() != graphs_.n_agents) {
    throw std::invalid_argument(
        "WarehouseEnv: need one amplitude per agent");
  }
  if (params_.episode_length < 1) {
    throw std::invalid_argument("WarehouseEnv: episode_length must be >= 1");
  }
  out_.resize(graphs_.n_agents);
  for (int i = 1; i <= graphs_.n_agents; ++i) {
    for (int j : idx_.i_s[i - 1]) {
      // i_s holds in-neighbours: j feeds i, so i is an out-neighbour of j.
      if (j != i) out_[j - 1].push_back(i);
    }
  }
  for (auto& list : out_) std::sort(list.begin(), list.end());
}

int WarehouseEnv::obs_dim(int agent) const {
  return static_cast<int>(idx_.i_o[agent - 1].size()) + 1;
}

int WarehouseEnv::action_dim(int agent) const {
  return static_cast<int>(out_[agent - 1].size()) + 1;
}

ActorSpec WarehouseEnv::actor_spec(int) const {
  return {{64, 64, 64}, Mlp::Head::Softmax, 1.0};
}

GlobalState WarehouseEnv::reset(Rng&) const {
  GlobalState state;
  state.t = 0;
  state.x.resize(2 * graphs_.n_agents);
  for (int i = 1; i <= graphs_.n_agents; ++i) {
    state.x(2 * (i - 1)) = params_.m0;
    state.x(2 * (i - 1) + 1) =
        params_.amplitude(i - 1) * std::sin(params_.phase);
  }
  return state;
}

std::vector<Eigen::VectorXd> WarehouseEnv::observe(
    const GlobalState& state) const {
  std::vector<Eigen::VectorXd> obs(graphs_.n_agents);
  for (int i = 1; i <= graphs_.n_agents; ++i) {
    Eigen::VectorXd o(obs_dim(i));
    int k = 0;
    for (int j : idx_.i_o[i - 1]) o(k++) = state.x(2 * (j - 1));
    o(k) = state.x(2 * (i - 1) + 1);  // own inflow signal
    obs[i - 1] = std::move(o);
  }
  return obs;
}

std::pair<GlobalState, Eigen::VectorXd> WarehouseEnv::step(
    const GlobalState& state, const JointAction& actions, Rng&) const {
  const int n = graphs_.n_agents;
  if (static_cast<int>(actions.size()) != n) {
    throw std::invalid_argument("warehouse step: need one action per agent");
  }
  Eigen::VectorXd m(n), z(n);
  for (int i = 0; i < n; ++i) {
    m(i) = state.x(2 * i);
    z(i) = state.x(2 * i + 1);
  }

  // Shortfall penalties come from the pre-transition stock.
  Eigen::VectorXd shortfall(n);
  for (int i = 0; i < n; ++i) {
    shortfall(i) = m(i) >= 0.0 ? 0.0 : -m(i) * m(i);
  }
  Eigen::VectorXd rewards = Eigen::VectorXd::Zero(n);
  for (int i = 1; i <= n; ++i) {
    for (int j : idx_.i_r[i - 1]) rewards(i - 1) += shortfall(j - 1);
  }

  // Stock moves only while the sender is non-negative; the final action
  // entry is the retained share and never leaves the node.
  Eigen::VectorXd next_m = m + z;
  for (int j = 1; j <= n; ++j) {
    const auto& targets = out_[j - 1];
    if (static_cast<int>(actions[j - 1].size()) !=
        static_cast<int>(targets.size()) + 1) {
      throw std::invalid_argument("warehouse step: action dim mismatch");
    }
    if (m(j - 1) < 0.0) continue;
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const double flow = actions[j - 1](static_cast<Eigen::Index>(k)) *
                          m(j - 1);
      next_m(j - 1) -= flow;
      next_m(targets[k] - 1) += flow;
    }
  }

  GlobalState next;
  next.t = state.t + 1;
  next.x.resize(2 * n);
  for (int i = 0; i < n; ++i) {
    next.x(2 * i) = next_m(i);
    next.x(2 * i + 1) =
        params_.amplitude(i) *
        std::sin(params_.omega * next.t + params_.phase);
  }
  return {std::move(next), std::move(rewards)};
}

std::shared_ptr<const WarehouseEnv> make_warehouse(CouplingGraphs graphs,
                                                   WarehouseParams params) {
  return std::make_shared<const WarehouseEnv>(std::move(graphs),
                                              std::move(params));
}

}  // namespace structmarl
