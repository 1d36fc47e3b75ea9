#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "structmarl/builtin.hpp"
#include "structmarl/dependency.hpp"
#include "structmarl/mabn.hpp"
#include "structmarl/mastac.hpp"
#include "structmarl/results.hpp"
#include "structmarl/thermal.hpp"
#include "structmarl/verify.hpp"
#include "structmarl/warehouse.hpp"

namespace {

using namespace structmarl;

nlohmann::json set_to_json(const std::set<int>& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const int x : s) arr.push_back(x);
  return arr;
}

void emit(const nlohmann::json& doc, const std::string& out_file) {
  const std::string text = doc.dump(2) + "\n";
  if (out_file.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + out_file);
  out << text;
}

CouplingGraphs resolve_graphs(const std::string& arg) {
  if (std::filesystem::exists(arg)) return load_coupling(arg);
  if (arg == "six_agent") return six_agent_graphs();
  if (arg == "warehouse9") return warehouse9_graphs();
  if (arg == "warehouse40") return warehouse40_graphs();
  if (arg == "thermal40") return thermal40_graphs();
  throw std::runtime_error("no such graph file or builtin: " + arg);
}

Variant parse_variant(const std::string& label, int& kappa) {
  if (label == "exact") return Variant::kExact;
  if (label == "undecq") return Variant::kUndecomposedQ;
  if (label == "undecqhat") return Variant::kUndecomposedQhat;
  if (label.rfind("kappa:", 0) == 0) {
    kappa = std::stoi(label.substr(6));
    return Variant::kKappa;
  }
  throw std::runtime_error(
      "variant must be exact, kappa:K, undecq, or undecqhat; got " + label);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t lo = std::stoull(text.substr(0, dots));
    const std::uint64_t hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw std::runtime_error("empty seed range " + text);
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const auto end = comma == std::string::npos ? text.size() : comma;
    seeds.push_back(std::stoull(text.substr(pos, end - pos)));
    pos = end + 1;
  }
  if (seeds.empty()) throw std::runtime_error("no seeds given");
  return seeds;
}

// Run-config JSON: a builtin name under "env" plus optional overrides of
// the training fields, the variant, the seeds, and the coupling graphs.
BuiltinSetup load_experiment(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file);
  const nlohmann::json doc = nlohmann::json::parse(in);
  BuiltinSetup setup = builtin_config(doc.at("env").get<std::string>());
  TrainConfig& c = setup.config;

  if (doc.contains("graphs")) {
    const CouplingGraphs graphs =
        resolve_graphs(doc["graphs"].get<std::string>());
    if (setup.name.rfind("warehouse", 0) == 0) {
      WarehouseParams params;
      params.amplitude.resize(graphs.n_agents);
      for (int i = 1; i <= graphs.n_agents; ++i) {
        params.amplitude(i - 1) = i % 2 ? -1.0 : 1.0;
      }
      params.episode_length = c.episode_length;
      setup.env = make_warehouse(graphs, params);
    } else {
      ThermalParams params;
      params.episode_length = c.episode_length;
      setup.env = make_thermal(graphs, params);
    }
    setup.graphs = graphs;
  }
  if (doc.contains("variant")) {
    c.variant = parse_variant(doc["variant"].get<std::string>(), c.kappa);
  }
  if (doc.contains("kappa")) c.kappa = doc["kappa"].get<int>();
  if (doc.contains("seeds")) {
    c.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  }
  if (doc.contains("epochs")) c.epochs = doc["epochs"].get<int>();
  if (doc.contains("batch")) c.batch = doc["batch"].get<int>();
  if (doc.contains("tau")) c.tau = doc["tau"].get<double>();
  if (doc.contains("gamma")) c.gamma = doc["gamma"].get<double>();
  if (doc.contains("actor_lr")) c.actor_lr = doc["actor_lr"].get<double>();
  if (doc.contains("critic_lr")) c.critic_lr = doc["critic_lr"].get<double>();
  if (doc.contains("episode_length")) {
    c.episode_length = doc["episode_length"].get<int>();
  }
  if (doc.contains("update_interval")) {
    c.update_interval = doc["update_interval"].get<int>();
  }
  if (doc.contains("warmup")) c.warmup = doc["warmup"].get<int>();
  if (doc.contains("literal_td")) c.literal_td = doc["literal_td"].get<bool>();
  if (doc.contains("critic_hidden")) {
    c.critic_hidden = doc["critic_hidden"].get<std::vector<int>>();
  }
  if (doc.contains("replay_capacity")) {
    c.replay_capacity = doc["replay_capacity"].get<std::int64_t>();
  }
  if (doc.contains("reward_bound")) {
    c.reward_bound = doc["reward_bound"].get<double>();
  }
  if (doc.contains("noise")) {
    const auto& n = doc["noise"];
    if (n.contains("sigma_start")) {
      c.noise.sigma_start = n["sigma_start"].get<double>();
    }
    if (n.contains("sigma_end")) c.noise.sigma_end = n["sigma_end"].get<double>();
    if (n.contains("decay_fraction")) {
      c.noise.decay_fraction = n["decay_fraction"].get<double>();
    }
  }
  return setup;
}

int thread_cap() {
  if (const char* env = std::getenv("STRUCTURED_MARL_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

int cmd_deps(const std::string& graphs_arg, int horizon, int kappa,
             const std::string& out_file) {
  const CouplingGraphs graphs = resolve_graphs(graphs_arg);
  const IndexSets idx = derive_index_sets(graphs);
  ValueDependency vd;
  std::string mode;
  if (horizon >= 0) {
    vd = value_dependency(repeat_index_sets(idx, horizon), 0, horizon);
    mode = "horizon-" + std::to_string(horizon);
  } else {
    vd = value_dependency_fixed_point(idx);
    mode = "fixed-point";
  }
  const GradientDependency gd = gradient_dependency(vd);
  const QhatIndex qhat = qhat_sets(vd, gd);

  std::vector<std::set<int>> kappa_sets;
  if (kappa >= 0) {
    kappa_sets = kappa_dependency(build_folded(idx), kappa).vd.i_q;
  }

  nlohmann::json doc;
  doc["graphs"] = graphs_arg;
  doc["n_agents"] = graphs.n_agents;
  doc["mode"] = mode;
  doc["e_vd_edges"] = vd.e_vd.size();
  doc["e_vd_complete"] =
      vd.e_vd.size() == static_cast<std::size_t>(graphs.n_agents) *
                            static_cast<std::size_t>(graphs.n_agents);
  doc["scc_state"] = scc_count(graphs.n_agents, graphs.state);
  doc["agents"] = nlohmann::json::array();
  for (int i = 1; i <= graphs.n_agents; ++i) {
    nlohmann::json agent;
    agent["agent"] = i;
    agent["i_q"] = set_to_json(vd.i_q[i - 1]);
    agent["i_gd"] = set_to_json(gd.i_gd[i - 1]);
    agent["i_qhat"] = set_to_json(qhat.i_qhat[i - 1]);
    if (kappa >= 0) agent["i_q_kappa"] = set_to_json(kappa_sets[i - 1]);
    doc["agents"].push_back(agent);
  }
  emit(doc, out_file);
  return 0;
}

int cmd_train(const std::string& env_arg, const std::string& variant_label_arg,
              const std::string& seeds_arg, int epochs, int batch,
              const std::string& out_dir) {
  BuiltinSetup setup;
  if (std::filesystem::exists(env_arg) &&
      std::filesystem::is_regular_file(env_arg)) {
    setup = load_experiment(env_arg);
  } else {
    setup = builtin_config(env_arg);
  }
  TrainConfig& config = setup.config;
  if (!variant_label_arg.empty()) {
    config.variant = parse_variant(variant_label_arg, config.kappa);
  }
  if (!seeds_arg.empty()) config.seeds = parse_seeds(seeds_arg);
  if (epochs >= 0) config.epochs = epochs;
  if (batch >= 1) {
    config.batch = batch;
    config.warmup = batch;
  }
  if (config.seeds.empty()) throw std::runtime_error("need at least one seed");
  config.validate();

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);

  std::vector<RunRecord> records(config.seeds.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t k = cursor.fetch_add(1);
      if (k >= config.seeds.size()) return;
      const std::uint64_t seed = config.seeds[k];
      try {
        MastacTrainer trainer(setup.env, config, seed);
        records[k] = trainer.run();
        const std::string id =
            run_id(setup.name, config.variant, config.kappa, seed);
        for (const AgentLearner& learner : trainer.learners()) {
          const std::string tag = id + "-agent" + std::to_string(learner.agent);
          save_checkpoint(learner.actor, dir / (tag + "-actor.json"));
          save_checkpoint(learner.critic, dir / (tag + "-critic.json"));
        }
      } catch (const std::exception& err) {
        records[k] = RunRecord{};
        records[k].seed = seed;
        records[k].variant = config.variant;
        records[k].kappa = config.kappa;
        records[k].failed = true;
        records[k].fail_reason = err.what();
      }
    }
  };
  const int threads =
      std::min<int>(thread_cap(), static_cast<int>(config.seeds.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  const ResultBundle bundle =
      aggregate_runs(setup.name, config, std::move(records));
  const auto base = write_bundle(bundle, dir);
  std::cout << base.filename().string() << ": " << bundle.completed << "/"
            << bundle.runs.size() << " seeds completed\n";
  std::cout << "final-20% mean " << format_double(bundle.final20_mean)
            << " std " << format_double(bundle.final20_std) << "\n";
  for (const RunRecord& run : bundle.runs) {
    if (run.failed) {
      std::cout << "seed " << run.seed << " failed: " << run.fail_reason
                << "\n";
    }
  }
  return bundle.completed > 0 ? 0 : 1;
}

int cmd_verify(const std::string& suite, int cases, long long samples,
               std::uint64_t seed, bool seed_given,
               const std::string& out_file) {
  // Each suite keeps its own default stream so verdicts stay reproducible
  // when no seed is passed.
  auto pick = [&](std::uint64_t fallback) { return seed_given ? seed : fallback; };
  nlohmann::json doc;
  doc["suite"] = suite;
  if (suite == "theorem1") {
    const SuiteResult r = locality_suite(cases > 0 ? cases : 200, pick(2027));
    doc["cases"] = r.cases;
    doc["max_error"] = r.max_error;
    doc["passed"] = r.passed;
    doc["notes"] = r.notes;
  } else if (suite == "theorem2") {
    const SuiteResult r =
        decomposition_suite(cases > 0 ? cases : 40, pick(2028));
    doc["cases"] = r.cases;
    doc["max_error"] = r.max_error;
    doc["passed"] = r.passed;
    doc["notes"] = r.notes;
  } else if (suite == "theorem4") {
    const VarianceSuite s =
        variance_suite(samples > 0 ? samples : 100000, pick(2029));
    doc["cases"] = s.verdict.cases;
    doc["max_error"] = s.verdict.max_error;
    doc["passed"] = s.verdict.passed;
    doc["notes"] = s.verdict.notes;
    doc["report"] = {
        {"tvar_gc", s.report.tvar_gc},
        {"tvar_gq", s.report.tvar_gq},
        {"diff_empirical", s.report.diff_empirical},
        {"diff_half_width", s.report.diff_half_width},
        {"diff_exact", s.report.diff_exact},
        {"lower_bound", s.report.lower_bound},
        {"upper_bound", s.report.upper_bound},
        {"sign_passed", s.report.sign_passed},
        {"sandwich_passed", s.report.sandwich_passed},
        {"exact_in_bounds", s.report.exact_in_bounds},
    };
  } else if (suite == "dependency-oracles") {
    const SuiteResult r =
        dependency_oracle_suite(cases > 0 ? cases : 200, 8, 6, pick(2026));
    doc["cases"] = r.cases;
    doc["max_error"] = r.max_error;
    doc["passed"] = r.passed;
    doc["notes"] = r.notes;
  } else if (suite == "grad-check") {
    const SuiteResult r = mlp_gradient_suite(cases > 0 ? cases : 12, pick(2030));
    doc["cases"] = r.cases;
    doc["max_error"] = r.max_error;
    doc["passed"] = r.passed;
    doc["notes"] = r.notes;
  } else {
    throw std::runtime_error(
        "suite must be one of theorem1, theorem2, theorem4, "
        "dependency-oracles, grad-check; got " +
        suite);
  }
  emit(doc, out_file);
  return doc["passed"].get<bool>() ? 0 : 1;
}

int cmd_variance_lab(const std::string& config_file,
                     const std::string& out_file) {
  std::uint64_t seed = 2029;
  long long samples = 100000;
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) throw std::runtime_error("cannot open " + config_file);
    const nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.contains("seed")) seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("samples")) samples = doc["samples"].get<long long>();
  }
  const VarianceSuite suite = variance_suite(samples, seed);
  const VarianceReport& r = suite.report;
  nlohmann::json doc;
  doc["seed"] = seed;
  doc["agent"] = r.agent;
  doc["n_samples"] = r.n_samples;
  doc["tvar_gc"] = r.tvar_gc;
  doc["tvar_gq"] = r.tvar_gq;
  doc["diff_empirical"] = r.diff_empirical;
  doc["diff_half_width"] = r.diff_half_width;
  doc["diff_exact"] = r.diff_exact;
  doc["mu_q"] = r.mu_q;
  doc["sigma2_q"] = r.sigma2_q;
  doc["mu_qhat"] = r.mu_qhat;
  doc["sigma2_qhat"] = r.sigma2_qhat;
  doc["sup_score_norm"] = r.sup_score_norm;
  doc["inf_score_norm"] = r.inf_score_norm;
  doc["eps_outside"] = r.eps_outside;
  doc["mean_score_sq"] = r.mean_score_sq;
  doc["lower_bound"] = r.lower_bound;
  doc["upper_bound"] = r.upper_bound;
  doc["sign_passed"] = r.sign_passed;
  doc["sandwich_passed"] = r.sandwich_passed;
  doc["exact_in_bounds"] = r.exact_in_bounds;
  emit(doc, out_file);
  return suite.verdict.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured multi-agent RL toolkit"};
  app.require_subcommand(1);

  auto* deps = app.add_subcommand(
      "deps", "Dependency sets derived from coupling graphs");
  std::string deps_graphs;
  int deps_horizon = -1;
  int deps_kappa = -1;
  std::string deps_out;
  deps->add_option("--graphs", deps_graphs,
                   "Graph JSON file or builtin name (six_agent, warehouse9, "
                   "warehouse40, thermal40)")
      ->required();
  deps->add_option("--horizon", deps_horizon,
                   "Finite horizon; omit for the fixed point");
  deps->add_option("--kappa", deps_kappa, "Also emit kappa-truncated sets");
  deps->add_option("--out", deps_out, "Write JSON here instead of stdout");

  auto* train = app.add_subcommand("train", "Run seeded training sweeps");
  std::string train_env, train_variant, train_seeds, train_out;
  int train_epochs = -1;
  int train_batch = -1;
  train->add_option("--env", train_env,
                    "Builtin name (warehouse9, warehouse40, thermal40) or "
                    "run-config JSON file")
      ->required();
  train->add_option("--variant", train_variant,
                    "exact | kappa:K | undecq | undecqhat");
  train->add_option("--seeds", train_seeds, "Range 0..14 or list 0,3,7");
  train->add_option("--epochs", train_epochs, "Override the epoch budget");
  train->add_option("--batch", train_batch,
                    "Override batch (warmup follows the batch)");
  train->add_option("--out", train_out, "Output directory")->required();

  auto* verify = app.add_subcommand("verify", "Machine-checkable suites");
  std::string verify_suite, verify_out;
  int verify_cases = -1;
  long long verify_samples = -1;
  std::uint64_t verify_seed = 2026;
  verify->add_option("--suite", verify_suite,
                     "theorem1 | theorem2 | theorem4 | dependency-oracles | "
                     "grad-check")
      ->required();
  verify->add_option("--cases", verify_cases, "Instance count override");
  verify->add_option("--samples", verify_samples,
                     "Sample count override (theorem4)");
  auto* verify_seed_opt =
      verify->add_option("--seed", verify_seed, "Suite seed override");
  verify->add_option("--out", verify_out, "Write JSON here instead of stdout");

  auto* lab = app.add_subcommand("variance-lab",
                                 "Paired gradient-variance estimation");
  std::string lab_config, lab_out;
  lab->add_option("--config", lab_config,
                  "JSON with optional seed and samples fields");
  lab->add_option("--out", lab_out, "Write JSON here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (deps->parsed()) {
      return cmd_deps(deps_graphs, deps_horizon, deps_kappa, deps_out);
    }
    if (train->parsed()) {
      return cmd_train(train_env, train_variant, train_seeds, train_epochs,
                       train_batch, train_out);
    }
    if (verify->parsed()) {
      return cmd_verify(verify_suite, verify_cases, verify_samples,
                        verify_seed, verify_seed_opt->count() > 0, verify_out);
    }
    if (lab->parsed()) {
      return cmd_variance_lab(lab_config, lab_out);
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
