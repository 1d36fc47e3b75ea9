#include "structmarl/builtin.hpp"

#include <stdexcept>

#include "structmarl/thermal.hpp"
#include "structmarl/warehouse.hpp"

namespace structmarl {

CouplingGraphs six_agent_graphs() {
  CouplingGraphs g;
  g.n_agents = 6;
  g.state = {{2, 1}, {2, 3}, {3, 4}, {5, 3}, {5, 6}};
  g.obs = {{1, 2}, {4, 3}, {6, 5}};
  g.reward = {{1, 2}, {4, 3}, {6, 5}};
  return g;
}

CouplingGraphs warehouse9_graphs() {
  CouplingGraphs g;
  g.n_agents = 9;
  g.state = {{2, 1}, {2, 3}, {3, 4}, {5, 3}, {5, 6},
             {5, 7}, {7, 8}, {8, 9}, {9, 7}};
  g.obs = {{1, 2}, {4, 3}, {6, 5}};
  g.reward = {{1, 2}, {4, 3}, {6, 5}, {7, 9}, {8, 7}, {9, 8}};
  return g;
}

CouplingGraphs warehouse40_graphs() {
  CouplingGraphs g;
  g.n_agents = 40;
  for (int i = 1; i < 40; ++i) {
    g.state.emplace_back(i, i + 1);
    g.state.emplace_back(i + 1, i);
  }
  g.state.emplace_back(1, 40);
  g.state.emplace_back(40, 1);
  g.obs = g.state;
  return g;
}

CouplingGraphs thermal40_graphs() {
  CouplingGraphs g;
  g.n_agents = 40;
  for (int i = 1; i <= 40; ++i) {
    for (int j = 1; j <= 40; ++j) {
      if (j - i == 2 || i - j == 2) g.obs.emplace_back(i, j);
    }
  }
  g.state = g.obs;
  return g;
}

BuiltinSetup builtin_config(const std::string& name) {
  BuiltinSetup setup;
  setup.name = name;
  setup.config.seeds.clear();
  for (std::uint64_t s = 0; s < 15; ++s) setup.config.seeds.push_back(s);

  if (name == "warehouse9") {
    setup.graphs = warehouse9_graphs();
    WarehouseParams params;
    params.amplitude = -Eigen::VectorXd::Ones(9);
    for (const int i : {2, 3, 5, 7}) params.amplitude(i - 1) = 1.0;
    params.episode_length = 8;
    setup.env = make_warehouse(setup.graphs, params);
    setup.config.gamma = 0.95;
    setup.config.episode_length = 8;
    setup.config.epochs = 3500;
    setup.config.actor_lr = 1e-4;
    setup.config.critic_lr = 1e-3;
    setup.config.reward_bound = 1e3;
    return setup;
  }
  if (name == "warehouse40") {
    setup.graphs = warehouse40_graphs();
    WarehouseParams params;
    params.amplitude.resize(40);
    for (int i = 1; i <= 40; ++i) params.amplitude(i - 1) = i % 2 ? -1.0 : 1.0;
    params.episode_length = 8;
    setup.env = make_warehouse(setup.graphs, params);
    setup.config.gamma = 0.95;
    setup.config.episode_length = 8;
    setup.config.epochs = 6000;
    setup.config.actor_lr = 5e-4;
    setup.config.critic_lr = 5e-3;
    setup.config.reward_bound = 1e3;
    return setup;
  }
  if (name == "thermal40") {
    setup.graphs = thermal40_graphs();
    ThermalParams params;
    params.episode_length = 40;
    setup.env = make_thermal(setup.graphs, params);
    setup.config.gamma = 0.9;
    setup.config.episode_length = 40;
    setup.config.epochs = 5000;
    setup.config.actor_lr = 1e-4;
    setup.config.critic_lr = 1e-3;
    // Actions are kilowatts up to +-15, so the exploration scale follows
    // the actuator range instead of the simplex default.
    setup.config.noise = {3.0, 0.3, 0.5};
    setup.config.reward_bound = 1e5;
    return setup;
  }
  throw std::invalid_argument("unknown builtin experiment: " + name);
}

}  // namespace structmarl
