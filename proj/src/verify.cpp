#include "structmarl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "structmarl/dependency.hpp"
#include "structmarl/mabn.hpp"
#include "structmarl/mlp.hpp"
#include "structmarl/tabular.hpp"

namespace structmarl {

namespace {

std::vector<Edge> random_edges(int n, double density, Rng& rng) {
  std::vector<Edge> edges;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      if (i != j && rng.uniform01() < density) edges.emplace_back(i, j);
    }
  }
  return edges;
}

CouplingGraphs random_graphs(int n, double density, Rng& rng) {
  CouplingGraphs g;
  g.n_agents = n;
  g.state = random_edges(n, density, rng);
  g.obs = random_edges(n, density, rng);
  g.reward = random_edges(n, density, rng);
  return g;
}

// Exact sets for the game's own horizon; the fixed point is only an
// any-horizon superset.
ValueDependency horizon_matched_vd(const TabularPoscg& game) {
  return value_dependency(repeat_index_sets(game.idx, game.horizon), 0,
                          game.horizon);
}

}  // namespace

SuiteResult dependency_oracle_suite(int n_instances, int max_agents,
                                    int max_horizon, std::uint64_t seed) {
  SuiteResult result;
  result.name = "dependency-oracles";
  result.passed = true;
  Rng rng(seed);
  for (int k = 0; k < n_instances; ++k) {
    const int n = static_cast<int>(rng.uniform_int(2, max_agents));
    const int horizon = static_cast<int>(rng.uniform_int(1, max_horizon));
    const int t = static_cast<int>(rng.uniform_int(0, horizon));
    const CouplingGraphs graphs =
        random_graphs(n, rng.uniform(0.1, 0.5), rng);
    const IndexSets idx = derive_index_sets(graphs);
    const TimeVaryingIndexSets tv = repeat_index_sets(idx, horizon);

    const ValueDependency by_recursion = value_dependency(tv, t, horizon);
    const ValueDependency by_paths =
        value_dependency_by_pathfinding(build_full(tv, horizon), t, horizon);
    if (by_recursion.i_q != by_paths.i_q) {
      result.passed = false;
      result.notes.push_back("recursion and pathfinding disagree on instance " +
                             std::to_string(k));
    }

    const ValueDependency fixed = value_dependency_fixed_point(idx);
    const KappaDependency saturated = kappa_saturated(build_folded(idx));
    if (fixed.i_q != saturated.vd.i_q) {
      result.passed = false;
      result.notes.push_back(
          "fixed point and folded saturation disagree on instance " +
          std::to_string(k));
    }
    ++result.cases;
  }
  return result;
}

SuiteResult locality_suite(int n_games, std::uint64_t seed, double tol) {
  SuiteResult result;
  result.name = "value-locality";
  result.passed = true;
  Rng rng(seed);
  int mutations_caught = 0;
  for (int k = 0; k < n_games; ++k) {
    const CouplingGraphs graphs = random_graphs(3, 0.35, rng);
    const TabularPoscg game = random_poscg(graphs, 2, 2, 3, rng);
    const TabularPolicy policy = random_policy(game, 0.8, rng);
    const QOracle oracle = brute_force_q(game, policy, game.horizon, 1.0);

    const ValueDependency vd = horizon_matched_vd(game);
    const InvarianceReport report = check_q_locality(game, oracle, vd, tol);
    result.max_error = std::max(result.max_error, report.max_error);
    if (!report.passed) {
      result.passed = false;
      result.notes.push_back("locality violated on game " + std::to_string(k) +
                             " for agent " +
                             std::to_string(report.worst_agent));
      continue;
    }

    // Shrinking the largest member set must break the invariance.
    int target = 1;
    for (int i = 2; i <= game.n_agents(); ++i) {
      if (vd.i_q[i - 1].size() > vd.i_q[target - 1].size()) target = i;
    }
    const ValueDependency mutated = drop_dependency_member(vd, target);
    if (!check_q_locality(game, oracle, mutated, tol).passed) {
      ++mutations_caught;
    } else {
      result.passed = false;
      result.notes.push_back("mutation went undetected on game " +
                             std::to_string(k));
    }
    ++result.cases;
  }
  result.notes.push_back("mutations caught: " +
                         std::to_string(mutations_caught) + "/" +
                         std::to_string(n_games));
  return result;
}

SuiteResult decomposition_suite(int n_games, std::uint64_t seed, double tol) {
  SuiteResult result;
  result.name = "gradient-decomposition";
  result.passed = true;
  Rng rng(seed);
  for (int k = 0; k < n_games; ++k) {
    const CouplingGraphs graphs = random_graphs(3, 0.35, rng);
    const TabularPoscg game = random_poscg(graphs, 2, 2, 3, rng);
    const TabularPolicy policy = random_policy(game, 0.6, rng);
    const ValueDependency vd = value_dependency_fixed_point(game.idx);
    const GradientDependency gd = gradient_dependency(vd);

    const GradDecompReport report =
        check_gradient_decomposition(game, policy, vd, gd, 0.9, tol);
    result.cases += report.cases;
    result.max_error = std::max(result.max_error, report.max_error);
    if (!report.passed) {
      result.passed = false;
      result.notes.push_back("decomposition failed on game " +
                             std::to_string(k));
    }
  }
  return result;
}

VarianceSuite variance_suite(std::int64_t n_samples, std::uint64_t seed) {
  VarianceSuite suite;
  Rng build(seed);
  VarianceLab lab = default_variance_lab(build);
  lab.n_samples = n_samples;

  const QOracle oracle = infinite_horizon_q(lab.game, lab.policy, lab.gamma);
  const ValueDependency vd = value_dependency_fixed_point(lab.game.idx);
  const GradientDependency gd = gradient_dependency(vd);
  const QhatIndex qhat = qhat_sets(vd, gd);

  Rng sampler(seed + 1);
  suite.report = pg_estimators(lab.game, lab.policy, oracle, gd, qhat,
                               lab.agent, lab.noise, lab.n_samples, sampler);

  suite.verdict.name = "variance-gap";
  suite.verdict.cases = static_cast<long>(n_samples);
  suite.verdict.max_error =
      std::abs(suite.report.diff_empirical - suite.report.diff_exact);
  suite.verdict.passed = suite.report.sign_passed &&
                         suite.report.sandwich_passed &&
                         suite.report.exact_in_bounds;
  suite.verdict.notes.push_back(
      "empirical gap " + std::to_string(suite.report.diff_empirical) +
      " within [" + std::to_string(suite.report.lower_bound) + ", " +
      std::to_string(suite.report.upper_bound) + "]");
  return suite;
}

SuiteResult mlp_gradient_suite(int n_nets, std::uint64_t seed, double tol) {
  SuiteResult result;
  result.name = "mlp-grad-check";
  result.passed = true;
  Rng rng(seed);
  const Mlp::Head heads[] = {Mlp::Head::Linear, Mlp::Head::Softmax,
                             Mlp::Head::Tanh};
  for (int k = 0; k < n_nets; ++k) {
    const int in = static_cast<int>(rng.uniform_int(1, 4));
    const int hidden = static_cast<int>(rng.uniform_int(2, 6));
    const int out = static_cast<int>(rng.uniform_int(1, 4));
    Mlp net = init_glorot({in, hidden, out}, heads[k % 3], 1.5, rng);

    const int batch = 3;
    Eigen::MatrixXd input(in, batch);
    for (Eigen::Index r = 0; r < input.rows(); ++r) {
      for (int c = 0; c < batch; ++c) input(r, c) = rng.normal();
    }
    // Scalar probe L = sum_{m,c} weight(m,c) * out(m,c); its upstream is
    // the weight matrix itself.
    Eigen::MatrixXd probe(out, batch);
    for (Eigen::Index r = 0; r < probe.rows(); ++r) {
      for (int c = 0; c < batch; ++c) probe(r, c) = rng.normal();
    }

    ForwardCache cache;
    forward(net, input, cache);
    const GradBundle grad = backward(net, cache, probe, true);

    const double h = 1e-6;
    auto loss_at = [&]() {
      return (probe.array() * forward(net, input).array()).sum();
    };
    double worst = 0.0;
    for (std::size_t l = 0; l < net.w.size(); ++l) {
      for (Eigen::Index r = 0; r < net.w[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < net.w[l].cols(); ++c) {
          const double keep = net.w[l](r, c);
          net.w[l](r, c) = keep + h;
          const double up = loss_at();
          net.w[l](r, c) = keep - h;
          const double down = loss_at();
          net.w[l](r, c) = keep;
          const double fd = (up - down) / (2.0 * h);
          worst = std::max(worst,
                           std::abs(fd - grad.dw[l](r, c)) /
                               std::max({1.0, std::abs(fd),
                                         std::abs(grad.dw[l](r, c))}));
        }
      }
      for (Eigen::Index r = 0; r < net.b[l].size(); ++r) {
        const double keep = net.b[l](r);
        net.b[l](r) = keep + h;
        const double up = loss_at();
        net.b[l](r) = keep - h;
        const double down = loss_at();
        net.b[l](r) = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - grad.db[l](r)) /
                                    std::max({1.0, std::abs(fd),
                                              std::abs(grad.db[l](r))}));
      }
    }
    // Input gradients ride the same tolerance.
    for (Eigen::Index r = 0; r < input.rows(); ++r) {
      for (int c = 0; c < batch; ++c) {
        const double keep = input(r, c);
        input(r, c) = keep + h;
        const double up = loss_at();
        input(r, c) = keep - h;
        const double down = loss_at();
        input(r, c) = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - grad.dinput(r, c)) /
                                    std::max({1.0, std::abs(fd),
                                              std::abs(grad.dinput(r, c))}));
      }
    }
    result.max_error = std::max(result.max_error, worst);
    if (worst > tol) {
      result.passed = false;
      result.notes.push_back("net " + std::to_string(k) + " off by " +
                             std::to_string(worst));
    }
    ++result.cases;
  }
  return result;
}

}  // namespace structmarl
