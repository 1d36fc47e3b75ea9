#pragma once

#include <memory>
#include <string>

#include "structmarl/coupling.hpp"
#include "structmarl/env.hpp"
#include "structmarl/mastac.hpp"

namespace structmarl {

// Six agents, three asymmetric graphs; the worked example used across
// the dependency tests.
CouplingGraphs six_agent_graphs();

// Nine warehouses with two supply clusters.
CouplingGraphs warehouse9_graphs();

// Ring of 40 warehouses, both directions plus wraparound, self-only
// rewards.
CouplingGraphs warehouse40_graphs();

// 40 thermal zones on two interleaved levels: agents two apart couple
// and observe each other, rewards are self-only.
CouplingGraphs thermal40_graphs();

// A named experiment ready to train: graphs, environment instance, and
// the published hyperparameters.
struct BuiltinSetup {
  std::string name;
  CouplingGraphs graphs;
  std::shared_ptr<const EnvModel> env;
  TrainConfig config;
};

// name must be one of warehouse9, warehouse40, thermal40.
BuiltinSetup builtin_config(const std::string& name);

}  // namespace structmarl
