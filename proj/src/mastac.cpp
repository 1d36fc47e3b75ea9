#include "structmarl/mastac.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "structmarl/mabn.hpp"

namespace structmarl {

namespace {

std::set<int> all_agents(int n) {
  std::set<int> out;
  for (int i = 1; i <= n; ++i) out.insert(i);
  return out;
}

std::vector<std::set<int>> self_groups(int n) {
  std::vector<std::set<int>> out(n);
  for (int i = 1; i <= n; ++i) out[i - 1] = {i};
  return out;
}

Eigen::MatrixXd vstack(const Eigen::MatrixXd& top,
                       const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

// Row offset of agent i's action block inside the ascending member
// concatenation, with block sizes read off one stored transition.
int action_offset(const std::set<int>& members, int agent,
                  const Transition& t) {
  int off = 0;
  for (int k : members) {
    if (k == agent) return off;
    off += static_cast<int>(t.a[k - 1].size());
  }
  throw std::logic_error("agent " + std::to_string(agent) +
                         " is not a member of the requested action block");
}

void require_subset(const std::set<int>& reads, const std::set<int>& allowed,
                    const std::string& what, int agent, int epoch) {
  for (int src : reads) {
    if (!allowed.count(src)) {
      throw std::logic_error(what + " for agent " + std::to_string(agent) +
                             " read agent " + std::to_string(src) +
                             "'s data outside its member set at epoch " +
                             std::to_string(epoch));
    }
  }
}

}  // namespace

std::string variant_label(Variant variant, int kappa) {
  switch (variant) {
    case Variant::kExact:
      return "exact";
    case Variant::kKappa:
      return "kappa:" + std::to_string(kappa);
    case Variant::kUndecomposedQ:
      return "undecq";
    case Variant::kUndecomposedQhat:
      return "undecqhat";
  }
  throw std::invalid_argument("unknown variant");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0))
    throw std::invalid_argument("tau must lie in (0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0))
    throw std::invalid_argument("learning rates must be positive");
  if (episode_length < 1)
    throw std::invalid_argument("episode_length must be >= 1");
  if (update_interval < 1)
    throw std::invalid_argument("update_interval must be >= 1");
  if (warmup < batch)
    throw std::invalid_argument("warmup must cover at least one batch");
  if (replay_capacity < warmup)
    throw std::invalid_argument("replay_capacity must cover the warmup");
  if (variant == Variant::kKappa && kappa < 0)
    throw std::invalid_argument("kappa must be >= 0");
  if (noise.sigma_start < 0.0 || noise.sigma_end < 0.0)
    throw std::invalid_argument("noise sigmas must be >= 0");
  if (noise.decay_fraction < 0.0 || noise.decay_fraction > 1.0)
    throw std::invalid_argument("decay_fraction must lie in [0, 1]");
  if (reward_bound < 0.0)
    throw std::invalid_argument("reward_bound must be >= 0");
}

VariantPlan variant_dependency(const TrainConfig& config,
                               const CouplingGraphs& graphs) {
  const IndexSets idx = derive_index_sets(graphs);
  const ValueDependency exact = value_dependency_fixed_point(idx);
  const GradientDependency exact_gd = gradient_dependency(exact);
  const int n = graphs.n_agents;

  VariantPlan plan;
  switch (config.variant) {
    case Variant::kExact:
      plan.i_q = exact.i_q;
      plan.i_gd = exact_gd.i_gd;
      plan.reward_groups = self_groups(n);
      return plan;
    case Variant::kKappa: {
      const KappaDependency kd =
          kappa_dependency(build_folded(idx), config.kappa);
      plan.i_q = kd.vd.i_q;
      plan.i_gd = gradient_dependency(kd.vd).i_gd;
      plan.reward_groups = self_groups(n);
      return plan;
    }
    case Variant::kUndecomposedQ:
      plan.i_q.assign(n, all_agents(n));
      plan.i_gd = exact_gd.i_gd;
      plan.reward_groups = self_groups(n);
      return plan;
    case Variant::kUndecomposedQhat:
      plan.i_q.assign(n, all_agents(n));
      plan.i_gd = self_groups(n);
      plan.reward_groups = exact_gd.i_gd;
      return plan;
  }
  throw std::invalid_argument("unknown variant");
}

SharedReplay::SharedReplay(std::int64_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("replay capacity must be >= 1");
}

void SharedReplay::store(Transition t) {
  if (size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<std::int64_t> SharedReplay::sample_indices(int m, Rng& rng) const {
  const std::int64_t n = size();
  if (m < 1 || n < m) {
    throw std::runtime_error("cannot sample " + std::to_string(m) +
                             " distinct transitions from a replay of size " +
                             std::to_string(n));
  }
  // Partial Fisher-Yates: the first m slots end up uniform without
  // replacement.
  std::vector<std::int64_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::int64_t{0});
  for (int k = 0; k < m; ++k) {
    const std::int64_t j =
        rng.uniform_int(static_cast<std::int64_t>(k), n - 1);
    std::swap(pool[k], pool[j]);
  }
  pool.resize(m);
  return pool;
}

Eigen::VectorXd act_explore(const Mlp& actor, const Eigen::VectorXd& obs,
                            double sigma, Rng& rng) {
  Eigen::VectorXd a = forward(actor, obs);
  if (sigma == 0.0) return a;
  for (Eigen::Index c = 0; c < a.size(); ++c) a(c) += sigma * rng.normal();
  switch (actor.head) {
    case Mlp::Head::Softmax: {
      a = a.cwiseMax(0.0);
      const double total = a.sum();
      if (total <= 1e-12) {
        a.setConstant(1.0 / static_cast<double>(a.size()));
      } else {
        a /= total;
      }
      break;
    }
    case Mlp::Head::Tanh:
      a = a.cwiseMax(-actor.u_max).cwiseMin(actor.u_max);
      break;
    case Mlp::Head::Linear:
      break;
  }
  return a;
}

Minibatch sample_projection(const SharedReplay& replay,
                            const AgentLearner& learner, int m, Rng& rng,
                            std::set<int>* read_log) {
  Minibatch batch;
  batch.indices = replay.sample_indices(m, rng);

  const Transition& probe = replay.at(batch.indices.front());
  int s_rows = 0;
  int a_rows = 0;
  for (int k : learner.i_q) {
    s_rows += static_cast<int>(probe.s[k - 1].size());
    a_rows += static_cast<int>(probe.a[k - 1].size());
  }
  batch.obs.resize(probe.o[learner.agent - 1].size(), m);
  batch.s_members.resize(s_rows, m);
  batch.a_members.resize(a_rows, m);
  batch.s_next_members.resize(s_rows, m);
  batch.obs_next.reserve(learner.i_q.size());
  for (int k : learner.i_q) {
    batch.obs_next.emplace_back(probe.o_next[k - 1].size(), m);
  }
  batch.r.resize(m);

  for (int c = 0; c < m; ++c) {
    const Transition& t = replay.at(batch.indices[c]);
    batch.obs.col(c) = t.o[learner.agent - 1];
    int s_off = 0;
    int a_off = 0;
    int slot = 0;
    for (int k : learner.i_q) {
      const int sd = static_cast<int>(t.s[k - 1].size());
      const int ad = static_cast<int>(t.a[k - 1].size());
      batch.s_members.block(s_off, c, sd, 1) = t.s[k - 1];
      batch.s_next_members.block(s_off, c, sd, 1) = t.s_next[k - 1];
      batch.a_members.block(a_off, c, ad, 1) = t.a[k - 1];
      batch.obs_next[slot].col(c) = t.o_next[k - 1];
      s_off += sd;
      a_off += ad;
      ++slot;
    }
    double reward = 0.0;
    for (int j : learner.reward_group) reward += t.r(j - 1);
    batch.r(c) = reward;
  }

  if (read_log) {
    read_log->insert(learner.agent);
    read_log->insert(learner.i_q.begin(), learner.i_q.end());
    read_log->insert(learner.reward_group.begin(), learner.reward_group.end());
  }
  return batch;
}

Eigen::VectorXd td_target(const std::vector<AgentLearner>& learners, int agent,
                          const Minibatch& batch, double gamma,
                          bool literal_td) {
  const AgentLearner& learner = learners[agent - 1];
  const int m = static_cast<int>(batch.r.size());
  const int a_rows = static_cast<int>(batch.a_members.rows());

  Eigen::MatrixXd a_next(a_rows, m);
  int off = 0;
  int slot = 0;
  for (int k : learner.i_q) {
    const Eigen::MatrixXd ak =
        forward(learners[k - 1].target_actor, batch.obs_next[slot]);
    a_next.middleRows(off, ak.rows()) = ak;
    off += static_cast<int>(ak.rows());
    ++slot;
  }

  const Eigen::MatrixXd q_next =
      forward(learner.target_critic, vstack(batch.s_next_members, a_next));
  const double scale = literal_td ? 1.0 : gamma;
  return batch.r + scale * q_next.row(0).transpose();
}

GradBundle critic_gradient(const AgentLearner& learner, const Minibatch& batch,
                           const Eigen::VectorXd& y, double gamma,
                           bool literal_td, double* loss_out) {
  const int m = static_cast<int>(batch.r.size());
  ForwardCache cache;
  const Eigen::MatrixXd q =
      forward(learner.critic, vstack(batch.s_members, batch.a_members), cache);

  const double scale = literal_td ? gamma : 1.0;
  const Eigen::VectorXd err = scale * q.row(0).transpose() - y;
  if (loss_out) *loss_out = err.squaredNorm() / m;
  const Eigen::MatrixXd upstream =
      (2.0 * scale / m) * err.transpose();
  return backward(learner.critic, cache, upstream, true);
}

double critic_update(AgentLearner& learner, const Minibatch& batch,
                     const Eigen::VectorXd& y, double gamma, bool literal_td) {
  double loss = 0.0;
  const GradBundle grad =
      critic_gradient(learner, batch, y, gamma, literal_td, &loss);
  optim_step(learner.critic, learner.critic_opt, grad);
  return loss;
}

GradBundle actor_gradient(const std::vector<AgentLearner>& learners, int agent,
                          const SharedReplay& replay, const Minibatch& batch,
                          std::set<int>* read_log, double* objective_out) {
  const AgentLearner& learner = learners[agent - 1];
  const int m = static_cast<int>(batch.indices.size());

  ForwardCache actor_cache;
  const Eigen::MatrixXd a_pi = forward(learner.actor, batch.obs, actor_cache);
  const int a_dim = static_cast<int>(a_pi.rows());

  Eigen::MatrixXd d_action = Eigen::MatrixXd::Zero(a_dim, m);
  double objective = 0.0;
  const Eigen::MatrixXd upstream = Eigen::MatrixXd::Constant(1, m, 1.0 / m);

  for (int j : learner.i_gd) {
    const AgentLearner& peer = learners[j - 1];
    if (!peer.i_q.count(agent)) {
      throw std::logic_error("critic " + std::to_string(j) +
                             " does not cover agent " + std::to_string(agent) +
                             "'s action");
    }
    const Transition& probe = replay.at(batch.indices.front());
    int s_rows = 0;
    int a_rows = 0;
    for (int k : peer.i_q) {
      s_rows += static_cast<int>(probe.s[k - 1].size());
      a_rows += static_cast<int>(probe.a[k - 1].size());
    }
    const int own_off = action_offset(peer.i_q, agent, probe);

    Eigen::MatrixXd input(s_rows + a_rows, m);
    for (int c = 0; c < m; ++c) {
      const Transition& t = replay.at(batch.indices[c]);
      int s_off = 0;
      int a_off = s_rows;
      for (int k : peer.i_q) {
        const int sd = static_cast<int>(t.s[k - 1].size());
        const int ad = static_cast<int>(t.a[k - 1].size());
        input.block(s_off, c, sd, 1) = t.s[k - 1];
        if (k == agent) {
          input.block(a_off, c, ad, 1) = a_pi.col(c);
        } else {
          input.block(a_off, c, ad, 1) = t.a[k - 1];
        }
        s_off += sd;
        a_off += ad;
      }
    }

    ForwardCache critic_cache;
    const Eigen::MatrixXd qj = forward(peer.critic, input, critic_cache);
    objective += qj.row(0).mean();
    const GradBundle through = backward(peer.critic, critic_cache, upstream,
                                        /*with_params=*/false);
    d_action += through.dinput.middleRows(s_rows + own_off, a_dim);

    if (read_log) read_log->insert(peer.i_q.begin(), peer.i_q.end());
  }
  if (read_log) read_log->insert(agent);
  if (objective_out) *objective_out = objective;

  // Ascent on the mean summed peer value is descent on its negation.
  return backward(learner.actor, actor_cache, -d_action, true);
}

double actor_update(std::vector<AgentLearner>& learners, int agent,
                    const SharedReplay& replay, const Minibatch& batch) {
  double objective = 0.0;
  const GradBundle grad =
      actor_gradient(learners, agent, replay, batch, nullptr, &objective);
  AgentLearner& learner = learners[agent - 1];
  optim_step(learner.actor, learner.actor_opt, grad);
  return objective;
}

MastacTrainer::MastacTrainer(std::shared_ptr<const EnvModel> env,
                             TrainConfig config, std::uint64_t seed)
    : env_(std::move(env)),
      config_(std::move(config)),
      seed_(seed),
      rng_env_(0),
      rng_explore_(0),
      rng_sample_(0),
      replay_(config_.replay_capacity) {
  config_.validate();
  const VariantPlan plan = variant_dependency(config_, env_->coupling());

  Rng master(seed_);
  Rng rng_init = master.spawn();
  rng_env_ = master.spawn();
  rng_explore_ = master.spawn();
  rng_sample_ = master.spawn();

  const int n = env_->n_agents();
  learners_.reserve(n);
  for (int i = 1; i <= n; ++i) {
    AgentLearner learner;
    learner.agent = i;
    learner.i_q = plan.i_q[i - 1];
    learner.i_gd = plan.i_gd[i - 1];
    learner.reward_group = plan.reward_groups[i - 1];

    const ActorSpec spec = env_->actor_spec(i);
    std::vector<int> actor_sizes{env_->obs_dim(i)};
    actor_sizes.insert(actor_sizes.end(), spec.hidden.begin(),
                       spec.hidden.end());
    actor_sizes.push_back(env_->action_dim(i));
    learner.actor = init_glorot(actor_sizes, spec.head, spec.u_max, rng_init);

    int critic_in = 0;
    for (int k : learner.i_q) {
      critic_in += env_->state_dim(k) + env_->action_dim(k);
    }
    std::vector<int> critic_sizes{critic_in};
    critic_sizes.insert(critic_sizes.end(), config_.critic_hidden.begin(),
                        config_.critic_hidden.end());
    critic_sizes.push_back(1);
    learner.critic =
        init_glorot(critic_sizes, Mlp::Head::Linear, 1.0, rng_init);

    learner.target_actor = learner.actor;
    learner.target_critic = learner.critic;
    learner.actor_opt = make_adam(learner.actor, config_.actor_lr);
    learner.critic_opt = make_adam(learner.critic, config_.critic_lr);
    learners_.push_back(std::move(learner));
  }
  critic_reads_.resize(n);
  actor_reads_.resize(n);
}

double MastacTrainer::noise_sigma(int epoch) const {
  const NoiseSchedule& ns = config_.noise;
  const double span = ns.decay_fraction * config_.epochs;
  if (span <= 0.0) return ns.sigma_end;
  const double frac = std::min(1.0, epoch / span);
  return ns.sigma_start + (ns.sigma_end - ns.sigma_start) * frac;
}

std::vector<Eigen::VectorXd> MastacTrainer::state_blocks(
    const GlobalState& state) const {
  const int n = env_->n_agents();
  std::vector<Eigen::VectorXd> blocks(n);
  for (int i = 1; i <= n; ++i) {
    blocks[i - 1] = state.x.segment(env_->state_offset(i), env_->state_dim(i));
  }
  return blocks;
}

RunRecord MastacTrainer::run() {
  const auto start = std::chrono::steady_clock::now();
  RunRecord record;
  record.seed = seed_;
  record.variant = config_.variant;
  record.kappa = config_.kappa;
  record.episode_return.reserve(config_.epochs);
  record.smoothed_return.reserve(config_.epochs);

  const int n = env_->n_agents();
  GlobalState state;
  double episode_sum = 0.0;
  int episode_steps = 0;
  // Prefix sums give the trailing-window mean in constant time.
  std::vector<double> prefix{0.0};
  prefix.reserve(config_.epochs + 1);

  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    if (epoch % config_.episode_length == 0) {
      state = env_->reset(rng_env_);
      episode_sum = 0.0;
      episode_steps = 0;
    }
    const std::vector<Eigen::VectorXd> obs = env_->observe(state);
    const double sigma = noise_sigma(epoch);
    JointAction actions(n);
    for (int i = 1; i <= n; ++i) {
      actions[i - 1] =
          act_explore(learners_[i - 1].actor, obs[i - 1], sigma, rng_explore_);
    }
    auto [next_state, rewards] = env_->step(state, actions, rng_env_);
    if (!rewards.allFinite()) {
      throw std::runtime_error("non-finite reward at epoch " +
                               std::to_string(epoch));
    }
    if (config_.reward_bound > 0.0 &&
        rewards.cwiseAbs().maxCoeff() > config_.reward_bound) {
      throw std::runtime_error("reward magnitude " +
                               std::to_string(rewards.cwiseAbs().maxCoeff()) +
                               " exceeds the bound at epoch " +
                               std::to_string(epoch));
    }

    Transition t;
    t.o = obs;
    t.a = actions;
    t.o_next = env_->observe(next_state);
    t.s = state_blocks(state);
    t.s_next = state_blocks(next_state);
    t.r = rewards;
    replay_.store(std::move(t));

    episode_sum += rewards.sum();
    ++episode_steps;
    const double running = episode_sum / episode_steps;
    record.episode_return.push_back(running);
    prefix.push_back(prefix.back() + running);
    const int window = std::min(100, epoch + 1);
    record.smoothed_return.push_back(
        (prefix[epoch + 1] - prefix[epoch + 1 - window]) / window);

    if (replay_.size() >= config_.warmup &&
        epoch % config_.update_interval == 0) {
      update_all(epoch);
    }
    state = next_state;
  }

  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return record;
}

void MastacTrainer::update_all(int epoch) {
  const int n = env_->n_agents();
  for (int i = 0; i < n; ++i) {
    critic_reads_[i].clear();
    actor_reads_[i].clear();
  }

  // All gradients are taken against the frozen pre-update parameters;
  // optimizer steps and target mixing only run once every gradient is in
  // hand, so the agent order cannot leak into the result.
  std::vector<Minibatch> batches;
  batches.reserve(n);
  for (int i = 1; i <= n; ++i) {
    batches.push_back(sample_projection(replay_, learners_[i - 1],
                                        config_.batch, rng_sample_,
                                        &critic_reads_[i - 1]));
  }
  std::vector<Eigen::VectorXd> targets;
  targets.reserve(n);
  for (int i = 1; i <= n; ++i) {
    targets.push_back(td_target(learners_, i, batches[i - 1], config_.gamma,
                                config_.literal_td));
  }
  std::vector<GradBundle> critic_grads;
  critic_grads.reserve(n);
  for (int i = 1; i <= n; ++i) {
    critic_grads.push_back(critic_gradient(learners_[i - 1], batches[i - 1],
                                           targets[i - 1], config_.gamma,
                                           config_.literal_td));
  }
  std::vector<GradBundle> actor_grads;
  actor_grads.reserve(n);
  for (int i = 1; i <= n; ++i) {
    actor_grads.push_back(actor_gradient(learners_, i, replay_, batches[i - 1],
                                         &actor_reads_[i - 1]));
  }

  for (int i = 1; i <= n; ++i) {
    AgentLearner& learner = learners_[i - 1];
    optim_step(learner.critic, learner.critic_opt, critic_grads[i - 1]);
    optim_step(learner.actor, learner.actor_opt, actor_grads[i - 1]);
  }
  for (AgentLearner& learner : learners_) {
    soft_update(learner.critic, learner.target_critic, config_.tau);
    soft_update(learner.actor, learner.target_actor, config_.tau);
  }

  for (int i = 1; i <= n; ++i) {
    const AgentLearner& learner = learners_[i - 1];
    std::set<int> critic_allowed = learner.i_q;
    critic_allowed.insert(i);
    critic_allowed.insert(learner.reward_group.begin(),
                          learner.reward_group.end());
    require_subset(critic_reads_[i - 1], critic_allowed, "the critic update",
                   i, epoch);

    std::set<int> actor_allowed{i};
    for (int j : learner.i_gd) {
      actor_allowed.insert(learners_[j - 1].i_q.begin(),
                           learners_[j - 1].i_q.end());
    }
    require_subset(actor_reads_[i - 1], actor_allowed, "the actor update", i,
                   epoch);
  }
  check_finite(epoch);
}

void MastacTrainer::check_finite(int epoch) const {
  for (const AgentLearner& learner : learners_) {
    const bool ok = learner.actor.all_finite() && learner.critic.all_finite() &&
                    learner.target_actor.all_finite() &&
                    learner.target_critic.all_finite();
    if (!ok) {
      throw std::runtime_error("agent " + std::to_string(learner.agent) +
                               "'s networks turned non-finite at epoch " +
                               std::to_string(epoch));
    }
  }
}

const std::set<int>& MastacTrainer::critic_read_log(int agent) const {
  return critic_reads_.at(agent - 1);
}

const std::set<int>& MastacTrainer::actor_read_log(int agent) const {
  return actor_reads_.at(agent - 1);
}

}  // namespace structmarl
