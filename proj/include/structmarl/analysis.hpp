#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "structmarl/dependency.hpp"
#include "structmarl/tabular.hpp"

namespace structmarl {

// Per-agent softmax policy over tabular observations. logits[i-1] has
// n_obs(i) rows and n_actions[i-1] columns; probabilities are the row
// softmax, so every row normalizes to 1.
struct TabularPolicy {
  std::vector<Eigen::MatrixXd> logits;
};

TabularPolicy uniform_policy(const TabularPoscg& game);
TabularPolicy random_policy(const TabularPoscg& game, double scale, Rng& rng);

// Row-softmax of agent's logit table.
Eigen::MatrixXd policy_probs(const TabularPolicy& policy, int agent);

// Exact per-agent action-value tables. q[i-1](s,a) is indexed by joint
// state row and joint action column in the shared mixed-radix order.
// horizon < 0 marks the discounted fixed point.
struct QOracle {
  int horizon = 0;
  double gamma = 1.0;
  std::vector<Eigen::MatrixXd> q;

  Eigen::MatrixXd total() const;
};

// Backward recursion Q_i^(0) = r_i,
// Q_i^(h)(s,a) = r_i(s,a) + gamma * E_{s'}[ E_{a'~pi}[ Q_i^(h-1)(s',a') ] ],
// every expectation summed exactly. Throws when the (s,a,s') enumeration
// exceeds the cap.
QOracle brute_force_q(const TabularPoscg& game, const TabularPolicy& policy,
                      int horizon, double gamma,
                      std::int64_t cap = 10'000'000);

// Unique solution of Q_i = r_i + gamma * B Q_i with B the state-action
// chain under the policy; requires gamma < 1.
QOracle infinite_horizon_q(const TabularPoscg& game,
                           const TabularPolicy& policy, double gamma,
                           std::int64_t cap = 10'000'000);

// Joint chain ingredients, dense and cap-guarded.
Eigen::MatrixXd joint_transition(const TabularPoscg& game,
                                 std::int64_t cap = 10'000'000);
Eigen::MatrixXd joint_action_probs(const TabularPoscg& game,
                                   const TabularPolicy& policy);

// Normalized discounted state-visitation measure
// d = (1-gamma) * (I - gamma M^T)^{-1} p0 with M the state chain under
// the policy; sums to 1.
Eigen::VectorXd discounted_occupancy(const TabularPoscg& game,
                                     const TabularPolicy& policy,
                                     double gamma);

// Gradient of ln pi_i(a_digit | o_i(s)) in agent i's logits, flattened
// row-major over (observation, action).
Eigen::VectorXd score_function(const TabularPoscg& game,
                               const TabularPolicy& policy, int agent,
                               std::int64_t state_index, int a_digit);

// Largest per-group spread of Q_i over (s,a) pairs that share the
// projection onto agent i's dependency members.
struct InvarianceReport {
  long cases = 0;
  double max_error = 0.0;
  bool passed = false;
  int worst_agent = 0;
  std::int64_t worst_state_a = -1, worst_action_a = -1;
  std::int64_t worst_state_b = -1, worst_action_b = -1;
};

InvarianceReport check_q_locality(const TabularPoscg& game,
                                  const QOracle& oracle,
                                  const ValueDependency& vd,
                                  double tol = 1e-10);

// Mutation helper for vacuous-pass guards: removes one member from
// agent's dependency set (the largest non-self member, or the agent
// itself when the set is a singleton).
ValueDependency drop_dependency_member(const ValueDependency& vd, int agent);

// Central-difference comparison of the full-return gradient against the
// gradient of the peer subtotal: for every logit coordinate of every
// agent i, d/dtheta_i sum_j Q_j must match d/dtheta_i of the sum over
// i's dependents, and the complement sum must have zero gradient.
struct GradDecompReport {
  long cases = 0;
  double max_error = 0.0;
  double complement_grad_max = 0.0;
  bool passed = false;
};

GradDecompReport check_gradient_decomposition(const TabularPoscg& game,
                                              const TabularPolicy& policy,
                                              const ValueDependency& vd,
                                              const GradientDependency& gd,
                                              double gamma, double tol = 1e-6,
                                              double fd_step = 1e-5);

// Qhat_i = sum over i's dependents of Q_j. max_error is the largest gap
// between Qhat_i and its expectation over actions of agents outside the
// union of the dependents' member sets (those coordinates must be
// redundant); complement_spread is the largest variation of
// (total - Qhat_i) across agent i's own action.
struct MarginalReport {
  Eigen::MatrixXd qhat;
  double max_error = 0.0;
  double complement_spread = 0.0;
  bool passed = false;
};

MarginalReport check_qhat_marginal(const TabularPoscg& game,
                                   const TabularPolicy& policy,
                                   const QOracle& oracle,
                                   const GradientDependency& gd,
                                   const QhatIndex& qhat, int agent,
                                   double tol = 1e-10);

// Zero-centered Gaussian corruption of the critic values fed to each
// estimator.
struct NoiseSpec {
  double mu_q = 0.0;
  double sigma_q = 0.0;
  double mu_qhat = 0.0;
  double sigma_qhat = 0.0;
};

// Monte-Carlo comparison of the two score-weighted estimators
//   g_C = (Q_total - delta_Q) * score,  g_Q = (Qhat_i - delta_Qhat) * score
// under the exact discounted visitation measure, plus exactly enumerated
// constants and bounds for the variance-gap sandwich.
struct VarianceReport {
  int agent = 1;
  long n_samples = 0;
  double tvar_gc = 0.0;
  double tvar_gq = 0.0;
  double diff_empirical = 0.0;
  double diff_half_width = 0.0;
  double diff_exact = 0.0;
  double mu_q = 0.0, sigma2_q = 0.0;
  double mu_qhat = 0.0, sigma2_qhat = 0.0;
  double sup_score_norm = 0.0;
  double inf_score_norm = 0.0;
  std::vector<double> eps_outside;
  double mean_score_sq = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  bool sign_passed = false;
  bool sandwich_passed = false;
  bool exact_in_bounds = false;
};

VarianceReport pg_estimators(const TabularPoscg& game,
                             const TabularPolicy& policy,
                             const QOracle& oracle,
                             const GradientDependency& gd,
                             const QhatIndex& qhat, int agent,
                             const NoiseSpec& noise, long n_samples,
                             Rng& rng);

// Sampled policy-gradient estimate E[Qhat_i * score] cross-checked
// against its exact enumeration and against (1-gamma) times the
// central-difference gradient of J = E_{p0}[V].
struct PgCheck {
  Eigen::VectorXd estimate;
  Eigen::VectorXd exact;
  Eigen::VectorXd fd_grad;
  double mc_max_std_err = 0.0;
  double exact_vs_fd_max_err = 0.0;
  bool passed = false;
};

PgCheck stochastic_pg(const TabularPoscg& game, const TabularPolicy& policy,
                      int agent, double gamma, long n_samples, Rng& rng,
                      double fd_step = 1e-5);

// Canonical variance-lab instance: agents 1 and 2 coupled through their
// dynamics, agent 3 decoupled with action-antisymmetric rewards and a
// uniform policy, so its action-value never leaves the complement term.
struct VarianceLab {
  TabularPoscg game;
  TabularPolicy policy;
  int agent = 1;
  NoiseSpec noise{0.0, 0.6, 0.0, 0.2};
  double gamma = 0.9;
  long n_samples = 100000;
};

VarianceLab default_variance_lab(Rng& rng);

}  // namespace structmarl
