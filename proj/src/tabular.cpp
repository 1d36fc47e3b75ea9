#include "structmarl/tabular.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace structmarl {

std::int64_t mixed_radix_encode(const std::vector<int>& digits,
                                const std::vector<int>& radices) {
  if (digits.size() != radices.size()) {
    throw std::invalid_argument("mixed_radix_encode: digit count mismatch");
  }
  std::int64_t index = 0;
  for (std::size_t k = 0; k < digits.size(); ++k) {
    if (digits[k] < 0 || digits[k] >= radices[k]) {
      throw std::invalid_argument("mixed_radix_encode: digit out of range");
    }
    index = index * radices[k] + digits[k];
  }
  return index;
}

std::vector<int> mixed_radix_decode(std::int64_t index,
                                    const std::vector<int>& radices) {
  std::vector<int> digits(radices.size());
  for (std::size_t k = radices.size(); k-- > 0;) {
    digits[k] = static_cast<int>(index % radices[k]);
    index /= radices[k];
  }
  if (index != 0) {
    throw std::invalid_argument("mixed_radix_decode: index out of range");
  }
  return digits;
}

std::int64_t mixed_radix_size(const std::vector<int>& radices) {
  std::int64_t size = 1;
  for (int r : radices) {
    if (r < 1) throw std::invalid_argument("mixed_radix_size: radix < 1");
    size *= r;
  }
  return size;
}

namespace {

// Condition digits: states of `agents` ascending, then their actions.
std::int64_t cond_index(const std::set<int>& agents,
                        const std::vector<int>& n_states,
                        const std::vector<int>& n_actions,
                        const std::vector<int>& s, const std::vector<int>& a) {
  std::vector<int> digits, radices;
  digits.reserve(2 * agents.size());
  radices.reserve(2 * agents.size());
  for (int j : agents) {
    digits.push_back(s[j - 1]);
    radices.push_back(n_states[j - 1]);
  }
  for (int j : agents) {
    digits.push_back(a[j - 1]);
    radices.push_back(n_actions[j - 1]);
  }
  return mixed_radix_encode(digits, radices);
}

}  // namespace

std::int64_t TabularPoscg::dyn_cond(int agent, const std::vector<int>& s,
                                    const std::vector<int>& a) const {
  return cond_index(idx.i_s[agent - 1], n_states, n_actions, s, a);
}

std::int64_t TabularPoscg::rew_cond(int agent, const std::vector<int>& s,
                                    const std::vector<int>& a) const {
  return cond_index(idx.i_r[agent - 1], n_states, n_actions, s, a);
}

std::int64_t TabularPoscg::obs_index(int agent,
                                     const std::vector<int>& s) const {
  std::vector<int> digits, radices;
  for (int j : idx.i_o[agent - 1]) {
    digits.push_back(s[j - 1]);
    radices.push_back(n_states[j - 1]);
  }
  return mixed_radix_encode(digits, radices);
}

std::int64_t TabularPoscg::n_obs(int agent) const {
  std::vector<int> radices;
  for (int j : idx.i_o[agent - 1]) radices.push_back(n_states[j - 1]);
  return mixed_radix_size(radices);
}

double TabularPoscg::transition_prob(const std::vector<int>& s,
                                     const std::vector<int>& a,
                                     const std::vector<int>& s_next) const {
  double p = 1.0;
  for (int i = 1; i <= n_agents(); ++i) {
    p *= trans[i - 1](dyn_cond(i, s, a), s_next[i - 1]);
  }
  return p;
}

double TabularPoscg::reward_of(int agent, const std::vector<int>& s,
                               const std::vector<int>& a) const {
  return reward[agent - 1](rew_cond(agent, s, a));
}

void TabularPoscg::validate(double tol) const {
  const int n = n_agents();
  if (static_cast<int>(n_states.size()) != n ||
      static_cast<int>(n_actions.size()) != n ||
      static_cast<int>(trans.size()) != n ||
      static_cast<int>(reward.size()) != n) {
    throw std::invalid_argument("TabularPoscg: per-agent table count");
  }
  if (static_cast<int>(idx.i_s.size()) != n) {
    throw std::invalid_argument("TabularPoscg: index sets not derived");
  }
  for (int i = 1; i <= n; ++i) {
    if (n_states[i - 1] < 1 || n_actions[i - 1] < 1) {
      throw std::invalid_argument("TabularPoscg: empty alphabet");
    }
    std::vector<int> dyn_radices, rew_radices;
    for (int j : idx.i_s[i - 1]) dyn_radices.push_back(n_states[j - 1]);
    for (int j : idx.i_s[i - 1]) dyn_radices.push_back(n_actions[j - 1]);
    for (int j : idx.i_r[i - 1]) rew_radices.push_back(n_states[j - 1]);
    for (int j : idx.i_r[i - 1]) rew_radices.push_back(n_actions[j - 1]);
    const std::int64_t dyn_rows = mixed_radix_size(dyn_radices);
    const std::int64_t rew_rows = mixed_radix_size(rew_radices);
    if (trans[i - 1].rows() != dyn_rows ||
        trans[i - 1].cols() != n_states[i - 1]) {
      throw std::invalid_argument("TabularPoscg: transition table shape, agent " +
                                  std::to_string(i));
    }
    if (reward[i - 1].size() != rew_rows) {
      throw std::invalid_argument("TabularPoscg: reward table shape, agent " +
                                  std::to_string(i));
    }
    for (Eigen::Index r = 0; r < trans[i - 1].rows(); ++r) {
      if (trans[i - 1].row(r).minCoeff() < 0.0) {
        throw std::invalid_argument("TabularPoscg: negative probability");
      }
      if (std::abs(trans[i - 1].row(r).sum() - 1.0) > tol) {
        throw std::invalid_argument(
            "TabularPoscg: transition row does not sum to 1, agent " +
            std::to_string(i));
      }
    }
  }
  if (p0.size() != n_joint_states()) {
    throw std::invalid_argument("TabularPoscg: p0 size");
  }
  if (p0.minCoeff() < 0.0 || std::abs(p0.sum() - 1.0) > tol) {
    throw std::invalid_argument("TabularPoscg: p0 not a distribution");
  }
  if (horizon < 0) {
    throw std::invalid_argument("TabularPoscg: negative horizon");
  }
}

TabularEnumerator::TabularEnumerator(const TabularPoscg& game,
                                     std::int64_t cap) {
  n_actions_ = game.n_joint_actions();
  total_ = game.n_joint_states() * n_actions_;
  if (total_ > cap) {
    throw std::invalid_argument(
        "tabular enumeration of " + std::to_string(total_) +
        " pairs exceeds the cap of " + std::to_string(cap));
  }
}

bool TabularEnumerator::next(std::int64_t& state_index,
                             std::int64_t& action_index) {
  if (cursor_ >= total_) return false;
  state_index = cursor_ / n_actions_;
  action_index = cursor_ % n_actions_;
  ++cursor_;
  return true;
}

TabularPoscg random_poscg(CouplingGraphs graphs, int states_per_agent,
                          int actions_per_agent, int horizon, Rng& rng) {
  TabularPoscg game;
  game.graphs = std::move(graphs);
  game.idx = derive_index_sets(game.graphs);
  const int n = game.n_agents();
  game.n_states.assign(n, states_per_agent);
  game.n_actions.assign(n, actions_per_agent);
  game.horizon = horizon;

  for (int i = 1; i <= n; ++i) {
    const int n_dyn = static_cast<int>(game.idx.i_s[i - 1].size());
    const int n_rew = static_cast<int>(game.idx.i_r[i - 1].size());
    std::vector<int> dyn_radices(n_dyn, states_per_agent);
    dyn_radices.insert(dyn_radices.end(), n_dyn, actions_per_agent);
    std::vector<int> rew_radices(n_rew, states_per_agent);
    rew_radices.insert(rew_radices.end(), n_rew, actions_per_agent);
    Eigen::MatrixXd t(mixed_radix_size(dyn_radices), states_per_agent);
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      double sum = 0.0;
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        t(r, c) = rng.uniform(0.05, 1.0);  // bounded away from 0
        sum += t(r, c);
      }
      t.row(r) /= sum;
    }
    game.trans.push_back(std::move(t));
    Eigen::VectorXd rw(mixed_radix_size(rew_radices));
    for (Eigen::Index r = 0; r < rw.size(); ++r) {
      rw(r) = rng.uniform(-1.0, 1.0);
    }
    game.reward.push_back(std::move(rw));
  }

  game.p0.resize(game.n_joint_states());
  double sum = 0.0;
  for (Eigen::Index k = 0; k < game.p0.size(); ++k) {
    game.p0(k) = rng.uniform(0.05, 1.0);
    sum += game.p0(k);
  }
  game.p0 /= sum;
  game.validate();
  return game;
}

}  // namespace structmarl
