#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "structmarl/analysis.hpp"

namespace structmarl {

// One machine-checkable verdict: instances run, the worst error seen,
// and whether everything stayed within tolerance.
struct SuiteResult {
  std::string name;
  long cases = 0;
  double max_error = 0.0;
  bool passed = false;
  std::vector<std::string> notes;
};

// The recursion, pathfinding, and folded-saturation routes must produce
// identical dependency sets on random time-invariant games.
SuiteResult dependency_oracle_suite(int n_instances = 200, int max_agents = 8,
                                    int max_horizon = 6,
                                    std::uint64_t seed = 2026);

// Exhaustive action-values must be blind to coordinates outside the
// member sets, and a deliberately shrunk set must be caught.
SuiteResult locality_suite(int n_games = 200, std::uint64_t seed = 2027,
                           double tol = 1e-10);

// Finite differences of the total discounted value against each actor's
// logits must match the member-critic sum.
SuiteResult decomposition_suite(int n_games = 40, std::uint64_t seed = 2028,
                                double tol = 1e-6);

// Paired-sample gradient variance gap on the canonical lab instance:
// positive sign at 99% confidence and inside the closed-form sandwich.
struct VarianceSuite {
  SuiteResult verdict;
  VarianceReport report;
};
VarianceSuite variance_suite(std::int64_t n_samples = 100000,
                             std::uint64_t seed = 2029);

// Backward pass against central differences over every parameter of
// random networks, all three output heads.
SuiteResult mlp_gradient_suite(int n_nets = 12, std::uint64_t seed = 2030,
                               double tol = 1e-4);

}  // namespace structmarl
