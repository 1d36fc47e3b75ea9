#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "structmarl/dependency.hpp"
#include "structmarl/env.hpp"
#include "structmarl/mlp.hpp"
#include "structmarl/rng.hpp"

namespace structmarl {

// Which dependency structure the learners are wired with.
enum class Variant { kExact, kKappa, kUndecomposedQ, kUndecomposedQhat };

// Stable label used in run ids, CSV rows, and the CLI ("exact",
// "kappa:2", "undecq", "undecqhat").
std::string variant_label(Variant variant, int kappa);

// Exploration sigma anneals linearly from sigma_start to sigma_end over
// the first decay_fraction of training, constant afterwards.
struct NoiseSchedule {
  double sigma_start = 0.3;
  double sigma_end = 0.05;
  double decay_fraction = 0.5;
};

struct TrainConfig {
  int epochs = 1000;
  int batch = 256;
  double tau = 0.001;
  double gamma = 0.95;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  int episode_length = 8;
  // Updates run every update_interval epochs once the replay holds at
  // least warmup transitions; warmup defaults to one full batch.
  int update_interval = 1;
  int warmup = 256;
  NoiseSchedule noise;
  Variant variant = Variant::kExact;
  int kappa = 0;
  // Alternate bootstrap y = r + Q' with loss (y - gamma*Q)^2 instead of
  // the default y = r + gamma*Q' with loss (y - Q)^2.
  bool literal_td = false;
  std::vector<int> critic_hidden{64, 64};
  std::int64_t replay_capacity = 1'000'000;
  std::vector<std::uint64_t> seeds{0};
  // 0 disables the per-step reward magnitude assertion.
  double reward_bound = 0.0;

  void validate() const;
};

// Dependency wiring per variant: i_q shapes each critic's inputs, i_gd
// lists the critics each actor ascends, reward_groups names whose
// rewards sum into each agent's bootstrap target (self except for the
// aggregated-critic ablation).
struct VariantPlan {
  std::vector<std::set<int>> i_q;
  std::vector<std::set<int>> i_gd;
  std::vector<std::set<int>> reward_groups;
};

VariantPlan variant_dependency(const TrainConfig& config,
                               const CouplingGraphs& graphs);

// One stored step, state split into per-agent blocks so later
// projections never touch coordinates they do not own.
struct Transition {
  std::vector<Eigen::VectorXd> o, a, o_next;
  std::vector<Eigen::VectorXd> s, s_next;
  Eigen::VectorXd r;
};

// Ring buffer shared by all agents; overwrites the oldest slot once
// capacity is reached.
class SharedReplay {
 public:
  explicit SharedReplay(std::int64_t capacity);

  void store(Transition t);
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t capacity() const { return capacity_; }
  const Transition& at(std::int64_t k) const { return data_.at(k); }

  // m distinct slots, uniform without replacement; throws when fewer
  // than m transitions are stored.
  std::vector<std::int64_t> sample_indices(int m, Rng& rng) const;

 private:
  std::int64_t capacity_;
  std::int64_t cursor_ = 0;
  std::vector<Transition> data_;
};

// Networks and wiring of one agent. The critic consumes the member
// state blocks ascending, then the member action blocks ascending.
struct AgentLearner {
  int agent = 1;
  std::set<int> i_q;
  std::set<int> i_gd;
  std::set<int> reward_group;
  Mlp actor, critic, target_actor, target_critic;
  OptimState actor_opt, critic_opt;
};

// Column-per-sample views of a sampled batch, already projected onto
// one agent's member set.
struct Minibatch {
  std::vector<std::int64_t> indices;
  Eigen::MatrixXd obs;             // the agent's own observations
  Eigen::MatrixXd s_members, a_members;
  Eigen::MatrixXd s_next_members;
  std::vector<Eigen::MatrixXd> obs_next;  // per member, ascending
  Eigen::VectorXd r;               // summed over the reward group
};

// Policy output plus scheduled Gaussian noise, projected back onto the
// action set: simplex heads clip at zero and renormalize, bounded heads
// clip at +-u_max. sigma = 0 returns the raw policy output.
Eigen::VectorXd act_explore(const Mlp& actor, const Eigen::VectorXd& obs,
                            double sigma, Rng& rng);

// Draws m transitions and extracts exactly the learner's member slices.
// read_log, when given, collects the source agents whose data was read.
Minibatch sample_projection(const SharedReplay& replay,
                            const AgentLearner& learner, int m, Rng& rng,
                            std::set<int>* read_log = nullptr);

// y^m = r^m + gamma * Q'(s'_members, member target actions), or the
// literal bootstrap y = r + Q' when configured.
Eigen::VectorXd td_target(const std::vector<AgentLearner>& learners,
                          int agent, const Minibatch& batch, double gamma,
                          bool literal_td);

// Gradient of the mean squared bootstrap error in the critic weights.
GradBundle critic_gradient(const AgentLearner& learner,
                           const Minibatch& batch, const Eigen::VectorXd& y,
                           double gamma, bool literal_td,
                           double* loss_out = nullptr);

// One optimizer step on the critic; returns the pre-step loss.
double critic_update(AgentLearner& learner, const Minibatch& batch,
                     const Eigen::VectorXd& y, double gamma, bool literal_td);

// Gradient of the actor loss -(1/M) sum_m sum_{j in i_gd} Q_j with the
// agent's action replaced by its policy output; peer critics contribute
// through their input gradients restricted to that action block.
GradBundle actor_gradient(const std::vector<AgentLearner>& learners,
                          int agent, const SharedReplay& replay,
                          const Minibatch& batch,
                          std::set<int>* read_log = nullptr,
                          double* objective_out = nullptr);

// One optimizer step on the actor; returns the pre-step objective
// (mean summed peer value at the policy action).
double actor_update(std::vector<AgentLearner>& learners, int agent,
                    const SharedReplay& replay, const Minibatch& batch);

struct RunRecord {
  std::uint64_t seed = 0;
  Variant variant = Variant::kExact;
  int kappa = 0;
  // Per-epoch running mean of the summed step reward within the current
  // episode, and its trailing-100-epoch smoothing.
  std::vector<double> episode_return;
  std::vector<double> smoothed_return;
  bool failed = false;
  std::string fail_reason;
  // Wall-clock is diagnostic only and never serialized.
  double wall_clock_seconds = 0.0;
};

// One seeded training run: every epoch is one environment step with
// exploration noise; once the replay holds warmup transitions, each
// update epoch samples per-agent batches, computes every critic and
// actor gradient against the frozen pre-update parameters, then applies
// all optimizer steps and soft target updates. Throws std::runtime_error
// with a diagnostic when any network or reward turns non-finite.
class MastacTrainer {
 public:
  MastacTrainer(std::shared_ptr<const EnvModel> env, TrainConfig config,
                std::uint64_t seed);

  RunRecord run();

  double noise_sigma(int epoch) const;
  const std::vector<AgentLearner>& learners() const { return learners_; }
  std::vector<AgentLearner>& learners() { return learners_; }
  const SharedReplay& replay() const { return replay_; }
  const TrainConfig& config() const { return config_; }
  // Source agents touched by the latest update, per consumer.
  const std::set<int>& critic_read_log(int agent) const;
  const std::set<int>& actor_read_log(int agent) const;

 private:
  void update_all(int epoch);
  void check_finite(int epoch) const;
  std::vector<Eigen::VectorXd> state_blocks(const GlobalState& state) const;

  std::shared_ptr<const EnvModel> env_;
  TrainConfig config_;
  std::uint64_t seed_;
  Rng rng_env_, rng_explore_, rng_sample_;
  std::vector<AgentLearner> learners_;
  SharedReplay replay_;
  std::vector<std::set<int>> critic_reads_, actor_reads_;
};

}  // namespace structmarl
