#include "structmarl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace structmarl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// One-sided and two-sided 99% normal quantiles.
constexpr double kZ99OneSided = 2.3263478740408408;
constexpr double kZ99TwoSided = 2.5758293035489004;

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

std::vector<std::vector<int>> all_digits(std::int64_t count,
                                         const std::vector<int>& radices) {
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t idx = 0; idx < count; ++idx) {
    out.push_back(mixed_radix_decode(idx, radices));
  }
  return out;
}

// Projection of (s, a) onto a member set: member states ascending, then
// member actions, last digit fastest. Layout shared with the condition
// indices of the tabular tables.
std::int64_t set_index(const std::set<int>& members, const std::vector<int>& s,
                       const std::vector<int>& a,
                       const std::vector<int>& s_rad,
                       const std::vector<int>& a_rad) {
  std::vector<int> digits;
  std::vector<int> radices;
  digits.reserve(2 * members.size());
  radices.reserve(2 * members.size());
  for (int j : members) {
    digits.push_back(s[j - 1]);
    radices.push_back(s_rad[j - 1]);
  }
  for (int j : members) {
    digits.push_back(a[j - 1]);
    radices.push_back(a_rad[j - 1]);
  }
  return mixed_radix_encode(digits, radices);
}

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& logits) {
  Eigen::RowVectorXd shifted =
      (logits.array() - logits.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

std::vector<Eigen::MatrixXd> all_probs(const TabularPoscg& game,
                                       const TabularPolicy& policy) {
  std::vector<Eigen::MatrixXd> probs;
  probs.reserve(policy.logits.size());
  for (int i = 1; i <= game.n_agents(); ++i) {
    probs.push_back(policy_probs(policy, i));
  }
  return probs;
}

std::vector<Eigen::MatrixXd> reward_tables(const TabularPoscg& game) {
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  const auto s_digits = all_digits(n_s, game.state_radices());
  const auto a_digits = all_digits(n_a, game.action_radices());
  std::vector<Eigen::MatrixXd> r(game.n_agents());
  for (int i = 1; i <= game.n_agents(); ++i) {
    Eigen::MatrixXd& table = r[i - 1];
    table.resize(n_s, n_a);
    for (std::int64_t s = 0; s < n_s; ++s) {
      for (std::int64_t a = 0; a < n_a; ++a) {
        table(s, a) = game.reward_of(i, s_digits[s], a_digits[a]);
      }
    }
  }
  return r;
}

// Observation index per joint state, [i-1][s].
std::vector<std::vector<std::int64_t>> obs_table(const TabularPoscg& game) {
  const std::int64_t n_s = game.n_joint_states();
  const auto s_digits = all_digits(n_s, game.state_radices());
  std::vector<std::vector<std::int64_t>> obs(game.n_agents());
  for (int i = 1; i <= game.n_agents(); ++i) {
    obs[i - 1].resize(static_cast<std::size_t>(n_s));
    for (std::int64_t s = 0; s < n_s; ++s) {
      obs[i - 1][static_cast<std::size_t>(s)] = game.obs_index(i, s_digits[s]);
    }
  }
  return obs;
}

Eigen::MatrixXd action_probs_from(const TabularPoscg& game,
                                  const std::vector<Eigen::MatrixXd>& probs) {
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  const auto a_digits = all_digits(n_a, game.action_radices());
  const auto obs = obs_table(game);
  Eigen::MatrixXd pi(n_s, n_a);
  for (std::int64_t s = 0; s < n_s; ++s) {
    for (std::int64_t a = 0; a < n_a; ++a) {
      double p = 1.0;
      for (int i = 1; i <= game.n_agents(); ++i) {
        const std::int64_t o = obs[i - 1][static_cast<std::size_t>(s)];
        p *= probs[i - 1](o, a_digits[a][i - 1]);
      }
      pi(s, a) = p;
    }
  }
  return pi;
}

QOracle q_tables(const TabularPoscg& game,
                 const std::vector<Eigen::MatrixXd>& probs,
                 const Eigen::MatrixXd& trans,
                 const std::vector<Eigen::MatrixXd>& rewards, int horizon,
                 double gamma) {
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  const Eigen::MatrixXd pi = action_probs_from(game, probs);
  QOracle out;
  out.horizon = horizon;
  out.gamma = gamma;
  out.q.resize(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    Eigen::MatrixXd q = rewards[i];
    for (int h = 1; h <= horizon; ++h) {
      const Eigen::VectorXd v = pi.cwiseProduct(q).rowwise().sum();
      const Eigen::VectorXd pv = trans * v;
      q = rewards[i] + gamma * RowMajorMap(pv.data(), n_s, n_a);
    }
    out.q[i] = std::move(q);
  }
  return out;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// First index whose cumulative probability exceeds u; zero-probability
// entries have empty intervals and can never be drawn.
int draw_categorical(const Eigen::RowVectorXd& p, double u) {
  double cum = 0.0;
  int last_positive = 0;
  for (int c = 0; c < p.size(); ++c) {
    if (p(c) > 0.0) last_positive = c;
    cum += p(c);
    if (u < cum) return c;
  }
  return last_positive;
}

}  // namespace

TabularPolicy uniform_policy(const TabularPoscg& game) {
  TabularPolicy policy;
  policy.logits.reserve(static_cast<std::size_t>(game.n_agents()));
  for (int i = 1; i <= game.n_agents(); ++i) {
    policy.logits.push_back(
        Eigen::MatrixXd::Zero(game.n_obs(i), game.n_actions[i - 1]));
  }
  return policy;
}

TabularPolicy random_policy(const TabularPoscg& game, double scale, Rng& rng) {
  TabularPolicy policy = uniform_policy(game);
  for (auto& table : policy.logits) {
    for (Eigen::Index c = 0; c < table.cols(); ++c) {
      for (Eigen::Index r = 0; r < table.rows(); ++r) {
        table(r, c) = rng.uniform(-scale, scale);
      }
    }
  }
  return policy;
}

Eigen::MatrixXd policy_probs(const TabularPolicy& policy, int agent) {
  const Eigen::MatrixXd& logits = policy.logits.at(agent - 1);
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    probs.row(r) = softmax_row(logits.row(r));
  }
  return probs;
}

Eigen::MatrixXd QOracle::total() const {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(q.front().rows(), q.front().cols());
  for (const auto& table : q) sum += table;
  return sum;
}

Eigen::MatrixXd joint_transition(const TabularPoscg& game, std::int64_t cap) {
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  if (n_s * n_a > cap / n_s) {
    throw std::invalid_argument(
        "joint transition enumeration of " +
        std::to_string(n_s * n_a * n_s) + " entries exceeds the cap of " +
        std::to_string(cap));
  }
  const auto s_digits = all_digits(n_s, game.state_radices());
  const auto a_digits = all_digits(n_a, game.action_radices());
  const int n = game.n_agents();
  Eigen::MatrixXd trans(n_s * n_a, n_s);
  std::vector<std::int64_t> rows(static_cast<std::size_t>(n));
  for (std::int64_t s = 0; s < n_s; ++s) {
    for (std::int64_t a = 0; a < n_a; ++a) {
      for (int i = 1; i <= n; ++i) {
        rows[static_cast<std::size_t>(i - 1)] =
            game.dyn_cond(i, s_digits[s], a_digits[a]);
      }
      for (std::int64_t next = 0; next < n_s; ++next) {
        double p = 1.0;
        for (int i = 1; i <= n; ++i) {
          p *= game.trans[i - 1](rows[static_cast<std::size_t>(i - 1)],
                                 s_digits[next][i - 1]);
        }
        trans(s * n_a + a, next) = p;
      }
    }
  }
  return trans;
}

Eigen::MatrixXd joint_action_probs(const TabularPoscg& game,
                                   const TabularPolicy& policy) {
  return action_probs_from(game, all_probs(game, policy));
}

QOracle brute_force_q(const TabularPoscg& game, const TabularPolicy& policy,
                      int horizon, double gamma, std::int64_t cap) {
  if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
  const Eigen::MatrixXd trans = joint_transition(game, cap);
  return q_tables(game, all_probs(game, policy), trans, reward_tables(game),
                  horizon, gamma);
}

QOracle infinite_horizon_q(const TabularPoscg& game,
                           const TabularPolicy& policy, double gamma,
                           std::int64_t cap) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("discounted fixed point needs 0 <= gamma < 1");
  }
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  const std::int64_t n_sa = n_s * n_a;
  if (n_sa > cap / n_sa) {
    throw std::invalid_argument("state-action chain of " +
                                std::to_string(n_sa * n_sa) +
                                " entries exceeds the cap of " +
                                std::to_string(cap));
  }
  const Eigen::MatrixXd trans = joint_transition(game, cap);
  const Eigen::MatrixXd pi = joint_action_probs(game, policy);
  Eigen::MatrixXd chain(n_sa, n_sa);
  for (std::int64_t next = 0; next < n_s; ++next) {
    for (std::int64_t a = 0; a < n_a; ++a) {
      chain.col(next * n_a + a) = trans.col(next) * pi(next, a);
    }
  }
  Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(n_sa, n_sa) - gamma * chain;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  const auto rewards = reward_tables(game);
  QOracle out;
  out.horizon = -1;
  out.gamma = gamma;
  out.q.resize(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    Eigen::VectorXd flat(n_sa);
    for (std::int64_t s = 0; s < n_s; ++s) {
      flat.segment(s * n_a, n_a) = rewards[i].row(s).transpose();
    }
    const Eigen::VectorXd solved = lu.solve(flat);
    out.q[i] = RowMajorMap(solved.data(), n_s, n_a);
  }
  return out;
}

Eigen::VectorXd discounted_occupancy(const TabularPoscg& game,
                                     const TabularPolicy& policy,
                                     double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument(
        "discounted occupancy needs 0 <= gamma < 1");
  }
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  const Eigen::MatrixXd trans = joint_transition(game);
  const Eigen::MatrixXd pi = joint_action_probs(game, policy);
  Eigen::MatrixXd chain = Eigen::MatrixXd::Zero(n_s, n_s);
  for (std::int64_t s = 0; s < n_s; ++s) {
    for (std::int64_t a = 0; a < n_a; ++a) {
      chain.row(s) += pi(s, a) * trans.row(s * n_a + a);
    }
  }
  Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(n_s, n_s) - gamma * chain.transpose();
  Eigen::VectorXd raw = system.partialPivLu().solve(game.p0);
  return raw / raw.sum();
}

Eigen::VectorXd score_function(const TabularPoscg& game,
                               const TabularPolicy& policy, int agent,
                               std::int64_t state_index, int a_digit) {
  const auto s_digits =
      mixed_radix_decode(state_index, game.state_radices());
  const std::int64_t o = game.obs_index(agent, s_digits);
  const Eigen::MatrixXd probs = policy_probs(policy, agent);
  const int n_act = game.n_actions[agent - 1];
  Eigen::VectorXd score =
      Eigen::VectorXd::Zero(probs.rows() * n_act);
  for (int c = 0; c < n_act; ++c) {
    score(o * n_act + c) = (c == a_digit ? 1.0 : 0.0) - probs(o, c);
  }
  return score;
}

InvarianceReport check_q_locality(const TabularPoscg& game,
                                  const QOracle& oracle,
                                  const ValueDependency& vd, double tol) {
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  const auto s_digits = all_digits(n_s, game.state_radices());
  const auto a_digits = all_digits(n_a, game.action_radices());
  InvarianceReport report;
  for (int i = 1; i <= game.n_agents(); ++i) {
    const std::set<int>& members = vd.i_q.at(i - 1);
    std::vector<int> radices;
    for (int j : members) radices.push_back(game.n_states[j - 1]);
    for (int j : members) radices.push_back(game.n_actions[j - 1]);
    const std::int64_t n_groups = mixed_radix_size(radices);
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n_groups, kInf);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n_groups, -kInf);
    std::vector<std::int64_t> arg_lo(static_cast<std::size_t>(n_groups), -1);
    std::vector<std::int64_t> arg_hi(static_cast<std::size_t>(n_groups), -1);
    for (std::int64_t s = 0; s < n_s; ++s) {
      for (std::int64_t a = 0; a < n_a; ++a) {
        const std::int64_t key =
            set_index(members, s_digits[s], a_digits[a], game.n_states,
                      game.n_actions);
        const double v = oracle.q[i - 1](s, a);
        if (v < lo(key)) {
          lo(key) = v;
          arg_lo[static_cast<std::size_t>(key)] = s * n_a + a;
        }
        if (v > hi(key)) {
          hi(key) = v;
          arg_hi[static_cast<std::size_t>(key)] = s * n_a + a;
        }
      }
    }
    for (std::int64_t key = 0; key < n_groups; ++key) {
      if (arg_lo[static_cast<std::size_t>(key)] < 0) continue;
      ++report.cases;
      const double spread = hi(key) - lo(key);
      if (spread > report.max_error) {
        report.max_error = spread;
        report.worst_agent = i;
        const std::int64_t pair_a = arg_hi[static_cast<std::size_t>(key)];
        const std::int64_t pair_b = arg_lo[static_cast<std::size_t>(key)];
        report.worst_state_a = pair_a / n_a;
        report.worst_action_a = pair_a % n_a;
        report.worst_state_b = pair_b / n_a;
        report.worst_action_b = pair_b % n_a;
      }
    }
  }
  report.passed = report.max_error <= tol;
  return report;
}

ValueDependency drop_dependency_member(const ValueDependency& vd, int agent) {
  ValueDependency out = vd;
  std::set<int>& members = out.i_q.at(agent - 1);
  if (members.size() <= 1) {
    members.clear();
  } else {
    for (auto it = members.rbegin(); it != members.rend(); ++it) {
      if (*it != agent) {
        members.erase(std::next(it).base());
        break;
      }
    }
  }
  out.e_vd.clear();
  for (int i = 1; i <= out.n_agents(); ++i) {
    for (int j : out.i_q[i - 1]) out.e_vd.emplace_back(j, i);
  }
  std::sort(out.e_vd.begin(), out.e_vd.end());
  return out;
}

GradDecompReport check_gradient_decomposition(const TabularPoscg& game,
                                              const TabularPolicy& policy,
                                              const ValueDependency& vd,
                                              const GradientDependency& gd,
                                              double gamma, double tol,
                                              double fd_step) {
  const GradientDependency derived = gradient_dependency(vd);
  if (derived.i_gd != gd.i_gd) {
    throw std::invalid_argument(
        "gradient dependency sets do not match the value dependency");
  }
  const Eigen::MatrixXd trans = joint_transition(game);
  const auto rewards = reward_tables(game);
  GradDecompReport report;
  TabularPolicy work = policy;
  for (int i = 1; i <= game.n_agents(); ++i) {
    const std::set<int>& peers = gd.i_gd.at(i - 1);
    Eigen::MatrixXd& logits_i = work.logits.at(i - 1);
    for (Eigen::Index o = 0; o < logits_i.rows(); ++o) {
      for (Eigen::Index c = 0; c < logits_i.cols(); ++c) {
        const double saved = logits_i(o, c);
        logits_i(o, c) = saved + fd_step;
        const QOracle plus = q_tables(game, all_probs(game, work), trans,
                                      rewards, game.horizon, gamma);
        logits_i(o, c) = saved - fd_step;
        const QOracle minus = q_tables(game, all_probs(game, work), trans,
                                       rewards, game.horizon, gamma);
        logits_i(o, c) = saved;
        Eigen::MatrixXd hat_plus =
            Eigen::MatrixXd::Zero(plus.q[0].rows(), plus.q[0].cols());
        Eigen::MatrixXd hat_minus = hat_plus;
        for (int j : peers) {
          hat_plus += plus.q[j - 1];
          hat_minus += minus.q[j - 1];
        }
        const Eigen::MatrixXd grad_total =
            (plus.total() - minus.total()) / (2.0 * fd_step);
        const Eigen::MatrixXd grad_hat =
            (hat_plus - hat_minus) / (2.0 * fd_step);
        ++report.cases;
        for (Eigen::Index s = 0; s < grad_total.rows(); ++s) {
          for (Eigen::Index a = 0; a < grad_total.cols(); ++a) {
            report.max_error = std::max(
                report.max_error, rel_err(grad_total(s, a), grad_hat(s, a)));
            report.complement_grad_max =
                std::max(report.complement_grad_max,
                         std::abs(grad_total(s, a) - grad_hat(s, a)));
          }
        }
      }
    }
  }
  report.passed = report.max_error <= tol;
  return report;
}

MarginalReport check_qhat_marginal(const TabularPoscg& game,
                                   const TabularPolicy& policy,
                                   const QOracle& oracle,
                                   const GradientDependency& gd,
                                   const QhatIndex& qhat, int agent,
                                   double tol) {
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  const auto a_digits = all_digits(n_a, game.action_radices());
  const auto probs = all_probs(game, policy);
  const auto obs = obs_table(game);

  MarginalReport report;
  report.qhat = Eigen::MatrixXd::Zero(n_s, n_a);
  for (int j : gd.i_gd.at(agent - 1)) report.qhat += oracle.q[j - 1];

  std::vector<int> outside;
  for (int j = 1; j <= game.n_agents(); ++j) {
    if (qhat.i_qhat.at(agent - 1).count(j) == 0) outside.push_back(j);
  }
  std::vector<int> out_radices;
  for (int j : outside) out_radices.push_back(game.n_actions[j - 1]);
  const std::int64_t n_out = mixed_radix_size(out_radices);

  for (std::int64_t s = 0; s < n_s; ++s) {
    for (std::int64_t a = 0; a < n_a; ++a) {
      double marginal = 0.0;
      for (std::int64_t combo = 0; combo < n_out; ++combo) {
        const auto out_digits = mixed_radix_decode(combo, out_radices);
        std::vector<int> digits = a_digits[a];
        double weight = 1.0;
        for (std::size_t k = 0; k < outside.size(); ++k) {
          const int j = outside[k];
          digits[j - 1] = out_digits[k];
          weight *= probs[j - 1](obs[j - 1][static_cast<std::size_t>(s)],
                                 out_digits[k]);
        }
        marginal +=
            weight *
            report.qhat(s, mixed_radix_encode(digits, game.action_radices()));
      }
      report.max_error =
          std::max(report.max_error, std::abs(report.qhat(s, a) - marginal));
    }
  }

  // The remainder of the total must ignore the agent's own action.
  const Eigen::MatrixXd rest = oracle.total() - report.qhat;
  std::vector<int> base_radices = game.action_radices();
  base_radices[agent - 1] = 1;
  const std::int64_t n_base = mixed_radix_size(base_radices);
  for (std::int64_t s = 0; s < n_s; ++s) {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n_base, kInf);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n_base, -kInf);
    for (std::int64_t a = 0; a < n_a; ++a) {
      std::vector<int> digits = a_digits[a];
      digits[agent - 1] = 0;
      const std::int64_t key = mixed_radix_encode(digits, base_radices);
      lo(key) = std::min(lo(key), rest(s, a));
      hi(key) = std::max(hi(key), rest(s, a));
    }
    for (std::int64_t key = 0; key < n_base; ++key) {
      report.complement_spread =
          std::max(report.complement_spread, hi(key) - lo(key));
    }
  }
  report.passed =
      report.max_error <= tol && report.complement_spread <= tol;
  return report;
}

VarianceReport pg_estimators(const TabularPoscg& game,
                             const TabularPolicy& policy,
                             const QOracle& oracle,
                             const GradientDependency& gd,
                             const QhatIndex& qhat, int agent,
                             const NoiseSpec& noise, long n_samples,
                             Rng& rng) {
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  const auto a_digits = all_digits(n_a, game.action_radices());
  const auto probs = all_probs(game, policy);
  const auto obs = obs_table(game);
  const Eigen::MatrixXd pi = joint_action_probs(game, policy);
  const Eigen::VectorXd occupancy =
      discounted_occupancy(game, policy, oracle.gamma);
  const int n_act = game.n_actions[agent - 1];

  const Eigen::MatrixXd q_total = oracle.total();
  Eigen::MatrixXd q_hat = Eigen::MatrixXd::Zero(n_s, n_a);
  for (int j : gd.i_gd.at(agent - 1)) q_hat += oracle.q[j - 1];
  std::vector<int> outside;
  for (int j = 1; j <= game.n_agents(); ++j) {
    if (qhat.i_qhat.at(agent - 1).count(j) == 0) outside.push_back(j);
  }
  Eigen::MatrixXd q_out = Eigen::MatrixXd::Zero(n_s, n_a);
  for (int j : outside) q_out += oracle.q[j - 1];

  // Squared score norm depends on (observation, own action) only.
  Eigen::MatrixXd norm2(n_s, n_act);
  for (std::int64_t s = 0; s < n_s; ++s) {
    const Eigen::RowVectorXd p =
        probs[agent - 1].row(obs[agent - 1][static_cast<std::size_t>(s)]);
    const double sum_sq = p.squaredNorm();
    for (int c = 0; c < n_act; ++c) {
      norm2(s, c) = 1.0 - 2.0 * p(c) + sum_sq;
    }
  }

  VarianceReport report;
  report.agent = agent;
  report.n_samples = n_samples;
  report.mu_q = noise.mu_q;
  report.sigma2_q = noise.sigma_q * noise.sigma_q;
  report.mu_qhat = noise.mu_qhat;
  report.sigma2_qhat = noise.sigma_qhat * noise.sigma_qhat;
  report.sup_score_norm = std::sqrt(norm2.maxCoeff());
  report.inf_score_norm = std::sqrt(norm2.minCoeff());

  // Exact moments of both estimators under the visitation measure.
  const std::int64_t n_obs_i = probs[agent - 1].rows();
  Eigen::MatrixXd mean_c = Eigen::MatrixXd::Zero(n_obs_i, n_act);
  Eigen::MatrixXd mean_q = Eigen::MatrixXd::Zero(n_obs_i, n_act);
  double second_c = 0.0, second_q = 0.0, mean_norm2 = 0.0;
  for (std::int64_t s = 0; s < n_s; ++s) {
    const std::int64_t o = obs[agent - 1][static_cast<std::size_t>(s)];
    const Eigen::RowVectorXd p = probs[agent - 1].row(o);
    for (std::int64_t a = 0; a < n_a; ++a) {
      const double w = occupancy(s) * pi(s, a);
      if (w == 0.0) continue;
      const int ai = a_digits[a][agent - 1];
      const double coef_c = q_total(s, a) - noise.mu_q;
      const double coef_q = q_hat(s, a) - noise.mu_qhat;
      const double nm2 = norm2(s, ai);
      second_c += w * (coef_c * coef_c + report.sigma2_q) * nm2;
      second_q += w * (coef_q * coef_q + report.sigma2_qhat) * nm2;
      mean_norm2 += w * nm2;
      for (int c = 0; c < n_act; ++c) {
        const double entry = (c == ai ? 1.0 : 0.0) - p(c);
        mean_c(o, c) += w * coef_c * entry;
        mean_q(o, c) += w * coef_q * entry;
      }
    }
  }
  report.mean_score_sq = mean_norm2;
  report.diff_exact = (second_c - mean_c.squaredNorm()) -
                      (second_q - mean_q.squaredNorm());

  // sup |advantage| of each excluded agent, by exhaustive marginalization.
  for (int j : outside) {
    double eps = 0.0;
    for (std::int64_t s = 0; s < n_s; ++s) {
      const Eigen::RowVectorXd pj =
          probs[j - 1].row(obs[j - 1][static_cast<std::size_t>(s)]);
      for (std::int64_t a = 0; a < n_a; ++a) {
        double marginal = 0.0;
        std::vector<int> digits = a_digits[a];
        for (int c = 0; c < game.n_actions[j - 1]; ++c) {
          digits[j - 1] = c;
          marginal +=
              pj(c) *
              q_total(s, mixed_radix_encode(digits, game.action_radices()));
        }
        eps = std::max(eps, std::abs(q_total(s, a) - marginal));
      }
    }
    report.eps_outside.push_back(eps);
  }

  // Excluded-sum second moment under the other agents' action law; the
  // excluded sum ignores the agent's own action, evaluated at digit 0.
  double excluded_second = 0.0;
  for (std::int64_t s = 0; s < n_s; ++s) {
    for (std::int64_t a = 0; a < n_a; ++a) {
      if (a_digits[a][agent - 1] != 0) continue;
      double weight = 1.0;
      for (int k = 1; k <= game.n_agents(); ++k) {
        if (k == agent) continue;
        weight *= probs[k - 1](obs[k - 1][static_cast<std::size_t>(s)],
                               a_digits[a][k - 1]);
      }
      excluded_second += occupancy(s) * weight * q_out(s, a) * q_out(s, a);
    }
  }
  const double sigma_gap = report.sigma2_q - report.sigma2_qhat;
  report.lower_bound = report.inf_score_norm * report.inf_score_norm *
                           excluded_second +
                       sigma_gap * mean_norm2;
  double eps_sq = 0.0;
  for (double e : report.eps_outside) eps_sq += e * e;
  report.upper_bound = report.sup_score_norm * report.sup_score_norm * eps_sq +
                       sigma_gap * mean_norm2;

  // Paired Monte-Carlo draws from the exact visitation measure.
  Eigen::VectorXd cum(n_s);
  double acc = 0.0;
  for (std::int64_t s = 0; s < n_s; ++s) {
    acc += occupancy(s);
    cum(s) = acc;
  }
  Eigen::MatrixXd acc_c = Eigen::MatrixXd::Zero(n_obs_i, n_act);
  Eigen::MatrixXd acc_q = Eigen::MatrixXd::Zero(n_obs_i, n_act);
  double sum_sq_c = 0.0, sum_sq_q = 0.0, sum_d = 0.0, sum_d2 = 0.0;
  std::vector<int> digits(static_cast<std::size_t>(game.n_agents()));
  for (long m = 0; m < n_samples; ++m) {
    const double u = rng.uniform01();
    std::int64_t s = 0;
    while (s < n_s - 1 && cum(s) <= u) ++s;
    for (int k = 1; k <= game.n_agents(); ++k) {
      const Eigen::RowVectorXd pk =
          probs[k - 1].row(obs[k - 1][static_cast<std::size_t>(s)]);
      digits[static_cast<std::size_t>(k - 1)] =
          draw_categorical(pk, rng.uniform01());
    }
    const std::int64_t a = mixed_radix_encode(digits, game.action_radices());
    const int ai = digits[static_cast<std::size_t>(agent - 1)];
    const double delta_q = noise.mu_q + noise.sigma_q * rng.normal();
    const double delta_qhat = noise.mu_qhat + noise.sigma_qhat * rng.normal();
    const double coef_c = q_total(s, a) - delta_q;
    const double coef_q = q_hat(s, a) - delta_qhat;
    const double nm2 = norm2(s, ai);
    const std::int64_t o = obs[agent - 1][static_cast<std::size_t>(s)];
    const Eigen::RowVectorXd p = probs[agent - 1].row(o);
    for (int c = 0; c < n_act; ++c) {
      const double entry = (c == ai ? 1.0 : 0.0) - p(c);
      acc_c(o, c) += coef_c * entry;
      acc_q(o, c) += coef_q * entry;
    }
    const double gc2 = coef_c * coef_c * nm2;
    const double gq2 = coef_q * coef_q * nm2;
    sum_sq_c += gc2;
    sum_sq_q += gq2;
    sum_d += gc2 - gq2;
    sum_d2 += (gc2 - gq2) * (gc2 - gq2);
  }
  const double n = static_cast<double>(n_samples);
  report.tvar_gc = (sum_sq_c - (acc_c / n).squaredNorm() * n) / (n - 1.0);
  report.tvar_gq = (sum_sq_q - (acc_q / n).squaredNorm() * n) / (n - 1.0);
  report.diff_empirical = report.tvar_gc - report.tvar_gq;
  const double mean_d = sum_d / n;
  const double var_d = std::max(0.0, sum_d2 - n * mean_d * mean_d) / (n - 1.0);
  const double se_d = std::sqrt(var_d / n);
  report.diff_half_width = kZ99TwoSided * se_d;
  report.sign_passed = mean_d - kZ99OneSided * se_d > 0.0;
  report.sandwich_passed =
      report.diff_empirical >= report.lower_bound - report.diff_half_width &&
      report.diff_empirical <= report.upper_bound + report.diff_half_width;
  const double slack =
      1e-9 * std::max({1.0, std::abs(report.lower_bound),
                       std::abs(report.upper_bound)});
  report.exact_in_bounds = report.diff_exact >= report.lower_bound - slack &&
                           report.diff_exact <= report.upper_bound + slack;
  return report;
}

PgCheck stochastic_pg(const TabularPoscg& game, const TabularPolicy& policy,
                      int agent, double gamma, long n_samples, Rng& rng,
                      double fd_step) {
  const ValueDependency vd = value_dependency_fixed_point(game.idx);
  const GradientDependency gd = gradient_dependency(vd);
  const QOracle oracle = infinite_horizon_q(game, policy, gamma);
  const Eigen::VectorXd occupancy = discounted_occupancy(game, policy, gamma);
  const auto probs = all_probs(game, policy);
  const auto obs = obs_table(game);
  const Eigen::MatrixXd pi = joint_action_probs(game, policy);
  const std::int64_t n_s = game.n_joint_states();
  const std::int64_t n_a = game.n_joint_actions();
  const auto a_digits = all_digits(n_a, game.action_radices());
  const int n_act = game.n_actions[agent - 1];
  const std::int64_t n_obs_i = probs[agent - 1].rows();

  Eigen::MatrixXd q_hat = Eigen::MatrixXd::Zero(n_s, n_a);
  for (int j : gd.i_gd.at(agent - 1)) q_hat += oracle.q[j - 1];

  PgCheck check;
  check.exact = Eigen::VectorXd::Zero(n_obs_i * n_act);
  for (std::int64_t s = 0; s < n_s; ++s) {
    const std::int64_t o = obs[agent - 1][static_cast<std::size_t>(s)];
    const Eigen::RowVectorXd p = probs[agent - 1].row(o);
    for (std::int64_t a = 0; a < n_a; ++a) {
      const double w = occupancy(s) * pi(s, a);
      const int ai = a_digits[a][agent - 1];
      for (int c = 0; c < n_act; ++c) {
        check.exact(o * n_act + c) +=
            w * q_hat(s, a) * ((c == ai ? 1.0 : 0.0) - p(c));
      }
    }
  }

  Eigen::VectorXd cum(n_s);
  double acc = 0.0;
  for (std::int64_t s = 0; s < n_s; ++s) {
    acc += occupancy(s);
    cum(s) = acc;
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_obs_i * n_act);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(n_obs_i * n_act);
  std::vector<int> digits(static_cast<std::size_t>(game.n_agents()));
  for (long m = 0; m < n_samples; ++m) {
    const double u = rng.uniform01();
    std::int64_t s = 0;
    while (s < n_s - 1 && cum(s) <= u) ++s;
    for (int k = 1; k <= game.n_agents(); ++k) {
      const Eigen::RowVectorXd pk =
          probs[k - 1].row(obs[k - 1][static_cast<std::size_t>(s)]);
      digits[static_cast<std::size_t>(k - 1)] =
          draw_categorical(pk, rng.uniform01());
    }
    const std::int64_t a = mixed_radix_encode(digits, game.action_radices());
    const int ai = digits[static_cast<std::size_t>(agent - 1)];
    const std::int64_t o = obs[agent - 1][static_cast<std::size_t>(s)];
    const Eigen::RowVectorXd p = probs[agent - 1].row(o);
    for (int c = 0; c < n_act; ++c) {
      const double v = q_hat(s, a) * ((c == ai ? 1.0 : 0.0) - p(c));
      sum(o * n_act + c) += v;
      sum_sq(o * n_act + c) += v * v;
    }
  }
  const double n = static_cast<double>(n_samples);
  check.estimate = sum / n;

  // Central differences of J = E_{p0}[V] through the discounted fixed
  // point, scaled by (1 - gamma) to match the normalized measure.
  TabularPolicy perturbed = policy;
  Eigen::MatrixXd& logits_i = perturbed.logits.at(agent - 1);
  check.fd_grad = Eigen::VectorXd::Zero(n_obs_i * n_act);
  for (Eigen::Index o = 0; o < logits_i.rows(); ++o) {
    for (Eigen::Index c = 0; c < logits_i.cols(); ++c) {
      const double saved = logits_i(o, c);
      double j_side[2];
      for (int side = 0; side < 2; ++side) {
        logits_i(o, c) = saved + (side == 0 ? fd_step : -fd_step);
        const QOracle shifted = infinite_horizon_q(game, perturbed, gamma);
        const Eigen::MatrixXd pi_shift =
            joint_action_probs(game, perturbed);
        const Eigen::VectorXd value =
            pi_shift.cwiseProduct(shifted.total()).rowwise().sum();
        j_side[side] = game.p0.dot(value);
      }
      logits_i(o, c) = saved;
      check.fd_grad(o * n_act + c) =
          (1.0 - gamma) * (j_side[0] - j_side[1]) / (2.0 * fd_step);
    }
  }

  check.passed = true;
  for (Eigen::Index k = 0; k < check.exact.size(); ++k) {
    const double var_k =
        std::max(0.0, sum_sq(k) - n * check.estimate(k) * check.estimate(k)) /
        (n - 1.0);
    const double se = std::sqrt(var_k / n);
    check.mc_max_std_err = std::max(check.mc_max_std_err, se);
    check.exact_vs_fd_max_err = std::max(
        check.exact_vs_fd_max_err, rel_err(check.exact(k), check.fd_grad(k)));
    if (std::abs(check.estimate(k) - check.exact(k)) >
        std::max(3.0 * se, 1e-12)) {
      check.passed = false;
    }
  }
  if (check.exact_vs_fd_max_err > 1e-6) check.passed = false;
  return check;
}

VarianceLab default_variance_lab(Rng& rng) {
  CouplingGraphs graphs;
  graphs.n_agents = 3;
  graphs.state = {{1, 2}, {2, 1}};
  VarianceLab lab;
  lab.game = random_poscg(graphs, 2, 2, 3, rng);
  // Action-antisymmetric reward keeps agent 3's action-value equal to its
  // immediate reward at every horizon once its policy is uniform, so the
  // excluded term is centered and bounded by construction.
  for (int s = 0; s < 2; ++s) {
    const double rho = rng.uniform(0.5, 1.5);
    lab.game.reward[2](2 * s) = rho;
    lab.game.reward[2](2 * s + 1) = -rho;
  }
  lab.policy = random_policy(lab.game, 0.7, rng);
  lab.policy.logits[2].setZero();
  return lab;
}

}  // namespace structmarl
