#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "structmarl/builtin.hpp"
#include "structmarl/dependency.hpp"
#include "structmarl/mabn.hpp"
#include "structmarl/mastac.hpp"
#include "structmarl/thermal.hpp"
#include "structmarl/warehouse.hpp"
#include "test_util.hpp"

using namespace structmarl;
using testutil::set_of;

namespace {

double net_diff(const Mlp& a, const Mlp& b) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.w.size(); ++l) {
    worst = std::max(worst, (a.w[l] - b.w[l]).cwiseAbs().maxCoeff());
    worst = std::max(worst, (a.b[l] - b.b[l]).cwiseAbs().maxCoeff());
  }
  return worst;
}

Mlp constant_net(const std::vector<int>& sizes, Mlp::Head head, double bias) {
  Rng rng(1);
  Mlp net = init_glorot(sizes, head, 1.0, rng);
  for (auto& w : net.w) w.setZero();
  for (auto& b : net.b) b.setZero();
  net.b.back().setConstant(bias);
  return net;
}

// Per-agent dims s=1, a=1, o=1; every entry encodes (agent, field, step)
// so projection tests can tell the slices apart.
Transition tagged_transition(int n, int step) {
  Transition t;
  t.o.resize(n);
  t.a.resize(n);
  t.o_next.resize(n);
  t.s.resize(n);
  t.s_next.resize(n);
  t.r.resize(n);
  for (int i = 1; i <= n; ++i) {
    const double base = 100.0 * i + step;
    t.o[i - 1] = Eigen::VectorXd::Constant(1, base + 0.1);
    t.a[i - 1] = Eigen::VectorXd::Constant(1, base + 0.2);
    t.o_next[i - 1] = Eigen::VectorXd::Constant(1, base + 0.3);
    t.s[i - 1] = Eigen::VectorXd::Constant(1, base + 0.4);
    t.s_next[i - 1] = Eigen::VectorXd::Constant(1, base + 0.5);
    t.r(i - 1) = base + 0.6;
  }
  return t;
}

// Same layout with ragged action blocks (agent i acts in R^i) to expose
// any row-offset mistakes in the stacking.
Transition ragged_transition(int n, int step) {
  Transition t = tagged_transition(n, step);
  for (int i = 1; i <= n; ++i) {
    t.a[i - 1] = Eigen::VectorXd::LinSpaced(i, 1000.0 * i + step,
                                            1000.0 * i + step + 0.9);
  }
  return t;
}

CouplingGraphs two_zone_graphs(bool coupled) {
  CouplingGraphs g;
  g.n_agents = 2;
  if (coupled) {
    g.state = {{1, 2}, {2, 1}};
    g.obs = {{1, 2}, {2, 1}};
  }
  return g;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 12;
  c.batch = 4;
  c.warmup = 4;
  c.tau = 0.25;
  c.gamma = 0.9;
  c.actor_lr = 1e-3;
  c.critic_lr = 1e-3;
  c.episode_length = 4;
  c.critic_hidden = {8};
  c.replay_capacity = 64;
  return c;
}

// Two manual learners over scalar blocks, both critics seeing everything;
// the nets stay constant so values and gradients have closed forms.
std::vector<AgentLearner> constant_learners(double bias1, double bias2) {
  std::vector<AgentLearner> learners(2);
  for (int i = 1; i <= 2; ++i) {
    AgentLearner& l = learners[i - 1];
    l.agent = i;
    l.i_q = set_of({1, 2});
    l.i_gd = set_of({1, 2});
    l.reward_group = {i};
    l.actor = constant_net({1, 1}, Mlp::Head::Linear, 0.1 * i);
    l.critic = constant_net({4, 1}, Mlp::Head::Linear, i == 1 ? bias1 : bias2);
    l.target_actor = constant_net({1, 1}, Mlp::Head::Linear, 0.3 + 0.4 * (i - 1));
    l.target_critic = l.critic;
  }
  return learners;
}

}  // namespace

TEST_CASE("variant labels are stable") {
  CHECK(variant_label(Variant::kExact, 0) == "exact");
  CHECK(variant_label(Variant::kKappa, 2) == "kappa:2");
  CHECK(variant_label(Variant::kUndecomposedQ, 0) == "undecq");
  CHECK(variant_label(Variant::kUndecomposedQhat, 0) == "undecqhat");
}

TEST_CASE("config validation rejects out-of-range settings") {
  TrainConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.warmup = c.batch - 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.update_interval = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.variant = Variant::kKappa;
  c.kappa = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.replay_capacity = c.warmup - 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("variant wiring matches the dependency analysis") {
  TrainConfig c;

  SUBCASE("decoupled agents collapse to themselves") {
    c.variant = Variant::kExact;
    const VariantPlan plan = variant_dependency(c, two_zone_graphs(false));
    for (int i = 1; i <= 2; ++i) {
      CHECK(plan.i_q[i - 1] == std::set<int>{i});
      CHECK(plan.i_gd[i - 1] == std::set<int>{i});
      CHECK(plan.reward_groups[i - 1] == std::set<int>{i});
    }
  }

  SUBCASE("undecomposed critics see every agent") {
    c.variant = Variant::kUndecomposedQ;
    const CouplingGraphs g = warehouse9_graphs();
    const VariantPlan plan = variant_dependency(c, g);
    const GradientDependency gd =
        gradient_dependency(value_dependency_fixed_point(derive_index_sets(g)));
    for (int i = 1; i <= 9; ++i) {
      CHECK(plan.i_q[i - 1].size() == 9);
      CHECK(plan.i_gd[i - 1] == gd.i_gd[i - 1]);
      CHECK(plan.reward_groups[i - 1] == std::set<int>{i});
    }
    CHECK(plan.i_gd[0] == set_of({1, 2, 3, 4}));
    CHECK(plan.i_gd[2] == set_of({3, 4}));
  }

  SUBCASE("kappa wiring matches the saturation sets") {
    c.variant = Variant::kKappa;
    c.kappa = 2;
    const CouplingGraphs g = warehouse40_graphs();
    const VariantPlan plan = variant_dependency(c, g);
    const IndexSets idx = derive_index_sets(g);
    const KappaDependency kd = kappa_dependency(build_folded(idx), 2);
    CHECK(plan.i_q == kd.vd.i_q);
    CHECK(plan.i_gd == gradient_dependency(kd.vd).i_gd);
    CHECK(plan.i_q[19].size() == 15);
    CHECK(plan.i_q[19].count(13) == 1);
    CHECK(plan.i_q[19].count(27) == 1);
  }

  SUBCASE("aggregated-critic ablation keeps only the own critic") {
    c.variant = Variant::kUndecomposedQhat;
    const CouplingGraphs g = warehouse9_graphs();
    const VariantPlan plan = variant_dependency(c, g);
    const GradientDependency gd =
        gradient_dependency(value_dependency_fixed_point(derive_index_sets(g)));
    for (int i = 1; i <= 9; ++i) {
      CHECK(plan.i_q[i - 1].size() == 9);
      CHECK(plan.i_gd[i - 1] == std::set<int>{i});
      CHECK(plan.reward_groups[i - 1] == gd.i_gd[i - 1]);
    }
  }
}

TEST_CASE("replay ring buffer overwrites the oldest slots") {
  SharedReplay replay(4);
  CHECK(replay.capacity() == 4);
  for (int k = 0; k < 6; ++k) replay.store(tagged_transition(2, k));
  CHECK(replay.size() == 4);
  CHECK(replay.at(0).r(0) == doctest::Approx(104.6).epsilon(1e-14));
  CHECK(replay.at(1).r(0) == doctest::Approx(105.6).epsilon(1e-14));
  CHECK(replay.at(2).r(0) == doctest::Approx(102.6).epsilon(1e-14));
  CHECK(replay.at(3).r(0) == doctest::Approx(103.6).epsilon(1e-14));
  CHECK_THROWS_AS(SharedReplay(0), std::invalid_argument);
}

TEST_CASE("sampling is uniform without replacement") {
  SharedReplay replay(16);
  for (int k = 0; k < 10; ++k) replay.store(tagged_transition(2, k));
  Rng rng(5);
  std::vector<std::int64_t> all = replay.sample_indices(10, rng);
  std::sort(all.begin(), all.end());
  for (int k = 0; k < 10; ++k) CHECK(all[k] == k);

  const std::vector<std::int64_t> some = replay.sample_indices(4, rng);
  CHECK(std::set<std::int64_t>(some.begin(), some.end()).size() == 4);
  CHECK_THROWS_AS(replay.sample_indices(11, rng), std::runtime_error);

  Rng twin_a(9), twin_b(9);
  CHECK(replay.sample_indices(6, twin_a) == replay.sample_indices(6, twin_b));
}

TEST_CASE("exploration noise respects each head's action set") {
  Rng init(3);
  SUBCASE("zero sigma is a bitwise passthrough") {
    const Mlp actor = init_glorot({3, 5, 4}, Mlp::Head::Softmax, 1.0, init);
    const Eigen::VectorXd obs = Eigen::VectorXd::LinSpaced(3, -1.0, 1.0);
    Rng rng(11);
    const Eigen::VectorXd raw = forward(actor, obs);
    const Eigen::VectorXd acted = act_explore(actor, obs, 0.0, rng);
    CHECK((raw - acted).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("simplex heads stay on the simplex") {
    const Mlp actor = init_glorot({2, 6, 3}, Mlp::Head::Softmax, 1.0, init);
    Rng rng(12);
    for (int k = 0; k < 200; ++k) {
      Eigen::VectorXd obs(2);
      obs << rng.normal(), rng.normal();
      const Eigen::VectorXd a = act_explore(actor, obs, 0.5, rng);
      CHECK(a.minCoeff() >= 0.0);
      CHECK(std::abs(a.sum() - 1.0) <= 1e-12);
    }
  }
  SUBCASE("bounded heads stay inside the box") {
    Mlp actor = init_glorot({2, 4, 2}, Mlp::Head::Tanh, 1.0, init);
    actor.u_max = 2.0;
    Rng rng(13);
    for (int k = 0; k < 200; ++k) {
      Eigen::VectorXd obs(2);
      obs << rng.normal(), rng.normal();
      const Eigen::VectorXd a = act_explore(actor, obs, 50.0, rng);
      CHECK(a.cwiseAbs().maxCoeff() <= 2.0);
    }
  }
  SUBCASE("twin generators act identically") {
    const Mlp actor = init_glorot({2, 4, 3}, Mlp::Head::Softmax, 1.0, init);
    const Eigen::VectorXd obs = Eigen::VectorXd::Constant(2, 0.4);
    Rng a(21), b(21);
    const Eigen::VectorXd x = act_explore(actor, obs, 0.3, a);
    const Eigen::VectorXd y = act_explore(actor, obs, 0.3, b);
    CHECK((x - y).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("projection extracts exactly the member slices") {
  const int n = 3;
  SharedReplay replay(8);
  for (int k = 0; k < 6; ++k) replay.store(ragged_transition(n, k));

  AgentLearner learner;
  learner.agent = 1;
  learner.i_q = set_of({1, 3});
  learner.reward_group = {1};

  Rng rng(17);
  std::set<int> reads;
  const Minibatch batch = sample_projection(replay, learner, 4, rng, &reads);
  CHECK(reads == set_of({1, 3}));
  CHECK(batch.obs.rows() == 1);
  CHECK(batch.s_members.rows() == 2);
  CHECK(batch.a_members.rows() == 4);  // a_1 in R, a_3 in R^3
  CHECK(batch.s_next_members.rows() == 2);
  REQUIRE(batch.obs_next.size() == 2);
  CHECK(batch.obs_next[0].rows() == 1);
  CHECK(batch.obs_next[1].rows() == 1);

  for (int c = 0; c < 4; ++c) {
    const Transition& t = replay.at(batch.indices[c]);
    CHECK(batch.obs(0, c) == t.o[0](0));
    CHECK(batch.s_members(0, c) == t.s[0](0));
    CHECK(batch.s_members(1, c) == t.s[2](0));
    CHECK(batch.a_members(0, c) == t.a[0](0));
    CHECK(batch.a_members.block(1, c, 3, 1) == t.a[2]);
    CHECK(batch.s_next_members(0, c) == t.s_next[0](0));
    CHECK(batch.s_next_members(1, c) == t.s_next[2](0));
    CHECK(batch.obs_next[0](0, c) == t.o_next[0](0));
    CHECK(batch.obs_next[1](0, c) == t.o_next[2](0));
    CHECK(batch.r(c) == t.r(0));
  }
}

TEST_CASE("projection over the full member set stacks every block") {
  const int n = 3;
  SharedReplay replay(8);
  for (int k = 0; k < 5; ++k) replay.store(ragged_transition(n, k));

  AgentLearner learner;
  learner.agent = 2;
  learner.i_q = set_of({1, 2, 3});
  learner.reward_group = set_of({1, 2, 3});

  Rng rng(19);
  std::set<int> reads;
  const Minibatch batch = sample_projection(replay, learner, 3, rng, &reads);
  CHECK(reads == set_of({1, 2, 3}));
  CHECK(batch.s_members.rows() == 3);
  CHECK(batch.a_members.rows() == 1 + 2 + 3);
  for (int c = 0; c < 3; ++c) {
    const Transition& t = replay.at(batch.indices[c]);
    CHECK(batch.a_members.block(1, c, 2, 1) == t.a[1]);
    CHECK(batch.r(c) == t.r.sum());
  }
}

TEST_CASE("bootstrap targets follow the configured rule") {
  std::vector<AgentLearner> learners = constant_learners(2.0, -1.0);
  SharedReplay replay(8);
  for (int k = 0; k < 5; ++k) {
    Transition t = tagged_transition(2, k);
    t.r(0) = -0.5;
    replay.store(std::move(t));
  }
  Rng rng(23);
  const Minibatch batch = sample_projection(replay, learners[0], 3, rng);

  SUBCASE("constant target critic feeds straight through") {
    const Eigen::VectorXd y = td_target(learners, 1, batch, 0.95, false);
    for (int c = 0; c < 3; ++c) CHECK(y(c) == doctest::Approx(1.4).epsilon(1e-14));
  }
  SUBCASE("zero target critic reduces to the reward") {
    learners[0].target_critic = constant_net({4, 1}, Mlp::Head::Linear, 0.0);
    const Eigen::VectorXd y = td_target(learners, 1, batch, 0.95, false);
    for (int c = 0; c < 3; ++c) CHECK(y(c) == -0.5);
  }
  SUBCASE("zero gamma reduces to the reward") {
    const Eigen::VectorXd y = td_target(learners, 1, batch, 0.0, false);
    for (int c = 0; c < 3; ++c) CHECK(y(c) == -0.5);
  }
  SUBCASE("the literal bootstrap skips the discount on the target") {
    const Eigen::VectorXd y = td_target(learners, 1, batch, 0.95, true);
    for (int c = 0; c < 3; ++c) CHECK(y(c) == doctest::Approx(1.5).epsilon(1e-14));
  }
}

TEST_CASE("critic gradients have the right closed form") {
  SharedReplay replay(8);
  for (int k = 0; k < 4; ++k) replay.store(tagged_transition(2, k));

  SUBCASE("a single linear sample gives dw = 2 (q - y) x^T") {
    AgentLearner learner;
    learner.agent = 1;
    learner.i_q = set_of({1, 2});
    learner.reward_group = {1};
    Rng init(29);
    learner.critic = init_glorot({4, 1}, Mlp::Head::Linear, 1.0, init);

    Rng rng(31);
    const Minibatch batch = sample_projection(replay, learner, 1, rng);
    Eigen::VectorXd x(4);
    x << batch.s_members.col(0), batch.a_members.col(0);
    const double q = forward(learner.critic, x)(0);
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.25);

    double loss = 0.0;
    const GradBundle g =
        critic_gradient(learner, batch, y, 0.9, false, &loss);
    CHECK(loss == doctest::Approx((q - 0.25) * (q - 0.25)).epsilon(1e-12));
    const Eigen::MatrixXd want = 2.0 * (q - 0.25) * x.transpose();
    CHECK((g.dw[0] - want).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(g.db[0](0) - 2.0 * (q - 0.25)) <= 1e-12);
  }

  SUBCASE("matching targets are a fixed point of the update") {
    std::vector<AgentLearner> learners = constant_learners(0.8, 0.8);
    AgentLearner& learner = learners[0];
    learner.critic_opt = make_adam(learner.critic, 1e-2);
    Rng rng(37);
    const Minibatch batch = sample_projection(replay, learner, 3, rng);
    const Eigen::MatrixXd q = forward(
        learner.critic,
        [&] {
          Eigen::MatrixXd in(4, 3);
          in.topRows(2) = batch.s_members;
          in.bottomRows(2) = batch.a_members;
          return in;
        }());
    const Mlp before = learner.critic;
    const double loss =
        critic_update(learner, batch, q.row(0).transpose(), 0.9, false);
    CHECK(loss == 0.0);
    CHECK(net_diff(before, learner.critic) == 0.0);
  }

  SUBCASE("one update reduces the bootstrap error") {
    AgentLearner learner;
    learner.agent = 2;
    learner.i_q = set_of({1, 2});
    learner.reward_group = {2};
    Rng init(41);
    learner.critic = init_glorot({4, 8, 1}, Mlp::Head::Linear, 1.0, init);
    learner.critic_opt = make_adam(learner.critic, 1e-2);

    Rng rng(43);
    const Minibatch batch = sample_projection(replay, learner, 4, rng);
    const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
    const double before = critic_update(learner, batch, y, 0.9, false);
    double after = 0.0;
    critic_gradient(learner, batch, y, 0.9, false, &after);
    CHECK(after < before);
  }

  SUBCASE("the literal loss weights the online value by gamma") {
    std::vector<AgentLearner> learners = constant_learners(2.0, 0.0);
    Rng rng(47);
    const Minibatch batch = sample_projection(replay, learners[0], 2, rng);
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(2, 0.5);
    double loss = 0.0;
    critic_gradient(learners[0], batch, y, 0.5, true, &loss);
    // q = 2 everywhere, so each residual is y - gamma q = -0.5.
    CHECK(loss == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("constant peer critics zero the actor gradient") {
  std::vector<AgentLearner> learners = constant_learners(1.25, -0.75);
  SharedReplay replay(8);
  for (int k = 0; k < 4; ++k) replay.store(tagged_transition(2, k));
  Rng rng(53);
  const Minibatch batch = sample_projection(replay, learners[0], 3, rng);

  std::set<int> reads;
  double objective = 0.0;
  const GradBundle g =
      actor_gradient(learners, 1, replay, batch, &reads, &objective);
  CHECK(objective == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(reads == set_of({1, 2}));
  for (const auto& dw : g.dw) CHECK(dw.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& db : g.db) CHECK(db.cwiseAbs().maxCoeff() == 0.0);

  learners[0].i_gd = {2};
  learners[1].i_q = {2};
  CHECK_THROWS_AS(actor_gradient(learners, 1, replay, batch), std::logic_error);
}

TEST_CASE("actor gradients match finite differences of the objective") {
  // Coupled zones: both critics cover both agents, so the chain rule has
  // to thread each peer's input gradient back into the shared action.
  auto env = make_thermal(two_zone_graphs(true), ThermalParams{});
  TrainConfig config = tiny_config();
  config.epochs = 6;
  config.warmup = 8;  // larger than epochs: replay fills, no updates fire
  MastacTrainer trainer(env, config, 71);
  trainer.run();

  std::vector<AgentLearner>& learners = trainer.learners();
  Rng rng(73);
  const Minibatch batch =
      sample_projection(trainer.replay(), learners[0], 4, rng);

  auto objective_at = [&]() {
    double obj = 0.0;
    actor_gradient(learners, 1, trainer.replay(), batch, nullptr, &obj);
    return obj;
  };

  double obj0 = 0.0;
  const GradBundle g =
      actor_gradient(learners, 1, trainer.replay(), batch, nullptr, &obj0);

  Mlp& actor = learners[0].actor;
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < actor.w.size(); ++l) {
    for (Eigen::Index r = 0; r < actor.w[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < actor.w[l].cols(); ++c) {
        const double keep = actor.w[l](r, c);
        actor.w[l](r, c) = keep + h;
        const double up = objective_at();
        actor.w[l](r, c) = keep - h;
        const double down = objective_at();
        actor.w[l](r, c) = keep;
        const double fd = (up - down) / (2.0 * h);
        const double got = -g.dw[l](r, c);  // the bundle descends -objective
        worst = std::max(worst, std::abs(fd - got) /
                                    std::max({1.0, std::abs(fd), std::abs(got)}));
      }
    }
    for (Eigen::Index r = 0; r < actor.b[l].size(); ++r) {
      const double keep = actor.b[l](r);
      actor.b[l](r) = keep + h;
      const double up = objective_at();
      actor.b[l](r) = keep - h;
      const double down = objective_at();
      actor.b[l](r) = keep;
      const double fd = (up - down) / (2.0 * h);
      const double got = -g.db[l](r);
      worst = std::max(worst, std::abs(fd - got) /
                                  std::max({1.0, std::abs(fd), std::abs(got)}));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("softmax actors pass the same finite-difference check") {
  CouplingGraphs g;
  g.n_agents = 3;
  g.state = {{1, 2}, {2, 3}};
  g.obs = {{1, 2}, {2, 3}};
  WarehouseParams params;
  params.amplitude = Eigen::VectorXd::Ones(3);
  auto env = make_warehouse(g, params);

  TrainConfig config = tiny_config();
  config.epochs = 6;
  config.warmup = 8;
  MastacTrainer trainer(env, config, 79);
  trainer.run();

  std::vector<AgentLearner>& learners = trainer.learners();
  // Swap in a small head-compatible actor so the sweep stays cheap.
  Rng init(83);
  Mlp& actor = learners[1].actor;
  actor = init_glorot({env->obs_dim(2), 4, env->action_dim(2)},
                      Mlp::Head::Softmax, 1.0, init);

  Rng rng(89);
  const Minibatch batch =
      sample_projection(trainer.replay(), learners[1], 4, rng);
  auto objective_at = [&]() {
    double obj = 0.0;
    actor_gradient(learners, 2, trainer.replay(), batch, nullptr, &obj);
    return obj;
  };
  double obj0 = 0.0;
  const GradBundle grad =
      actor_gradient(learners, 2, trainer.replay(), batch, nullptr, &obj0);

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < actor.w.size(); ++l) {
    for (Eigen::Index r = 0; r < actor.w[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < actor.w[l].cols(); ++c) {
        const double keep = actor.w[l](r, c);
        actor.w[l](r, c) = keep + h;
        const double up = objective_at();
        actor.w[l](r, c) = keep - h;
        const double down = objective_at();
        actor.w[l](r, c) = keep;
        const double fd = (up - down) / (2.0 * h);
        const double got = -grad.dw[l](r, c);
        worst = std::max(worst, std::abs(fd - got) /
                                    std::max({1.0, std::abs(fd), std::abs(got)}));
      }
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("decoupled actors never read the peer's critic") {
  auto env = make_thermal(two_zone_graphs(false), ThermalParams{});
  MastacTrainer trainer(env, tiny_config(), 97);
  trainer.run();

  CHECK(trainer.critic_read_log(1) == std::set<int>{1});
  CHECK(trainer.critic_read_log(2) == std::set<int>{2});
  CHECK(trainer.actor_read_log(1) == std::set<int>{1});
  CHECK(trainer.actor_read_log(2) == std::set<int>{2});

  std::vector<AgentLearner>& learners = trainer.learners();
  Rng rng(101);
  const Minibatch batch =
      sample_projection(trainer.replay(), learners[0], 4, rng);
  const GradBundle before = actor_gradient(learners, 1, trainer.replay(), batch);
  learners[1].critic.w[0].setConstant(99.0);
  const GradBundle after = actor_gradient(learners, 1, trainer.replay(), batch);
  for (std::size_t l = 0; l < before.dw.size(); ++l) {
    CHECK((before.dw[l] - after.dw[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((before.db[l] - after.db[l]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("coupled updates log exactly the member sets") {
  auto env = make_thermal(two_zone_graphs(true), ThermalParams{});
  MastacTrainer trainer(env, tiny_config(), 103);
  trainer.run();
  CHECK(trainer.critic_read_log(1) == set_of({1, 2}));
  CHECK(trainer.actor_read_log(1) == set_of({1, 2}));
  CHECK(trainer.critic_read_log(2) == set_of({1, 2}));
  CHECK(trainer.actor_read_log(2) == set_of({1, 2}));
}

TEST_CASE("targets drift by the soft-update mixture") {
  auto env = make_thermal(two_zone_graphs(true), ThermalParams{});
  TrainConfig config = tiny_config();
  config.epochs = 4;  // exactly one update, at the fourth step
  MastacTrainer after(env, config, 107);
  after.run();
  config.epochs = 3;  // stops just before that update
  MastacTrainer before(env, config, 107);
  before.run();

  for (int i = 0; i < 2; ++i) {
    const Mlp& main_new = after.learners()[i].critic;
    const Mlp& target_new = after.learners()[i].target_critic;
    const Mlp& target_old = before.learners()[i].target_critic;
    CHECK(net_diff(before.learners()[i].target_critic,
                   before.learners()[i].critic) == 0.0);
    for (std::size_t l = 0; l < main_new.w.size(); ++l) {
      const Eigen::MatrixXd want =
          0.25 * main_new.w[l] + 0.75 * target_old.w[l];
      CHECK((target_new.w[l] - want).cwiseAbs().maxCoeff() <= 1e-13);
      const Eigen::VectorXd want_b =
          0.25 * main_new.b[l] + 0.75 * target_old.b[l];
      CHECK((target_new.b[l] - want_b).cwiseAbs().maxCoeff() <= 1e-13);
    }
  }
}

TEST_CASE("no parameter moves before the warmup fills") {
  auto env = make_thermal(two_zone_graphs(true), ThermalParams{});
  TrainConfig config = tiny_config();
  config.epochs = 3;  // warmup is 4: replay never fills
  MastacTrainer ran(env, config, 109);
  ran.run();
  MastacTrainer fresh(env, config, 109);
  for (int i = 0; i < 2; ++i) {
    CHECK(net_diff(ran.learners()[i].actor, fresh.learners()[i].actor) == 0.0);
    CHECK(net_diff(ran.learners()[i].critic, fresh.learners()[i].critic) == 0.0);
  }
}

TEST_CASE("identically seeded runs are bitwise identical") {
  auto env = make_thermal(two_zone_graphs(true), ThermalParams{});
  MastacTrainer a(env, tiny_config(), 113);
  MastacTrainer b(env, tiny_config(), 113);
  const RunRecord ra = a.run();
  const RunRecord rb = b.run();
  CHECK(ra.episode_return == rb.episode_return);
  CHECK(ra.smoothed_return == rb.smoothed_return);
  for (int i = 0; i < 2; ++i) {
    CHECK(net_diff(a.learners()[i].actor, b.learners()[i].actor) == 0.0);
    CHECK(net_diff(a.learners()[i].critic, b.learners()[i].critic) == 0.0);
    CHECK(net_diff(a.learners()[i].target_critic,
                   b.learners()[i].target_critic) == 0.0);
  }

  MastacTrainer c(env, tiny_config(), 127);
  const RunRecord rc = c.run();
  CHECK(rc.episode_return != ra.episode_return);
}

TEST_CASE("the return metric replays from the stored rewards") {
  auto env = make_thermal(two_zone_graphs(true), ThermalParams{});
  TrainConfig config = tiny_config();
  config.epochs = 11;  // capacity 64 holds every transition in order
  MastacTrainer trainer(env, config, 131);
  const RunRecord record = trainer.run();

  REQUIRE(trainer.replay().size() == 11);
  double episode_sum = 0.0;
  int steps = 0;
  for (int e = 0; e < 11; ++e) {
    if (e % config.episode_length == 0) {
      episode_sum = 0.0;
      steps = 0;
    }
    episode_sum += trainer.replay().at(e).r.sum();
    ++steps;
    CHECK(record.episode_return[e] == episode_sum / steps);
  }

  for (int e = 0; e < 11; ++e) {
    const int window = std::min(100, e + 1);
    double total = 0.0;
    for (int k = e - window + 1; k <= e; ++k) total += record.episode_return[k];
    CHECK(record.smoothed_return[e] ==
          doctest::Approx(total / window).epsilon(1e-12));
  }
}

TEST_CASE("zero epochs produce an empty record") {
  auto env = make_thermal(two_zone_graphs(false), ThermalParams{});
  TrainConfig config = tiny_config();
  config.epochs = 0;
  MastacTrainer trainer(env, config, 137);
  const RunRecord record = trainer.run();
  CHECK(record.episode_return.empty());
  CHECK(record.smoothed_return.empty());
  CHECK(trainer.replay().size() == 0);
}

TEST_CASE("non-finite parameters abort with a diagnostic") {
  auto env = make_thermal(two_zone_graphs(true), ThermalParams{});
  TrainConfig config = tiny_config();
  config.epochs = 4;
  MastacTrainer trainer(env, config, 139);
  trainer.learners()[0].critic.w[0](0, 0) =
      std::numeric_limits<double>::quiet_NaN();
  try {
    trainer.run();
    FAIL("the poisoned run should have thrown");
  } catch (const std::runtime_error& err) {
    const std::string what = err.what();
    CHECK(what.find("non-finite") != std::string::npos);
    CHECK(what.find("agent 1") != std::string::npos);
  }
}

TEST_CASE("the noise schedule anneals linearly then holds") {
  auto env = make_thermal(two_zone_graphs(false), ThermalParams{});
  TrainConfig config = tiny_config();
  config.epochs = 1000;
  config.noise = {0.3, 0.05, 0.5};
  MastacTrainer trainer(env, config, 149);
  CHECK(trainer.noise_sigma(0) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(trainer.noise_sigma(250) == doctest::Approx(0.175).epsilon(1e-12));
  CHECK(trainer.noise_sigma(500) == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(trainer.noise_sigma(999) == doctest::Approx(0.05).epsilon(1e-14));

  config.noise = {0.3, 0.05, 0.0};
  MastacTrainer flat(env, config, 151);
  CHECK(flat.noise_sigma(0) == doctest::Approx(0.05).epsilon(1e-14));
}
