// Acceptance gate: ten independently runnable criteria, one PASS/FAIL
// line each. Exit code 0 iff every selected criterion passed.
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
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
using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x) { return format_double(x); }

std::string join_notes(const std::vector<std::string>& notes) {
  std::string out;
  for (const std::string& n : notes) {
    if (!out.empty()) out += "; ";
    out += n;
  }
  return out;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome from_suite(const SuiteResult& r, double elapsed) {
  Outcome o;
  o.pass = r.passed;
  std::ostringstream s;
  s << r.cases << " cases, max error " << fmt(r.max_error);
  if (!r.notes.empty()) s << ", " << join_notes(r.notes);
  s << " (" << fmt(elapsed) << "s)";
  o.detail = s.str();
  return o;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  const SuiteResult r = dependency_oracle_suite(200, 8, 6, 2026);
  return from_suite(r, secs_since(t0));
}

Outcome criterion2() {
  Outcome o;
  std::vector<std::string> problems;

  const IndexSets idx6 = derive_index_sets(six_agent_graphs());
  const ValueDependency vd6 = value_dependency_fixed_point(idx6);
  const GradientDependency gd6 = gradient_dependency(vd6);
  const auto expect = [&](const std::set<int>& got, const std::set<int>& want,
                          const std::string& label) {
    if (got != want) problems.push_back(label + " mismatch");
  };
  expect(vd6.i_q[0], {1, 2}, "six-agent i_q(1)");
  expect(vd6.i_q[2], {1, 2, 3, 4, 5, 6}, "six-agent i_q(3)");
  expect(vd6.i_q[4], {5, 6}, "six-agent i_q(5)");
  expect(gd6.i_gd[0], {1, 2, 3, 4}, "six-agent i_gd(1)");
  expect(gd6.i_gd[2], {3, 4}, "six-agent i_gd(3)");

  const CouplingGraphs g40 = warehouse40_graphs();
  const ValueDependency vd40 =
      value_dependency_fixed_point(derive_index_sets(g40));
  const std::size_t n40 = static_cast<std::size_t>(g40.n_agents);
  if (vd40.e_vd.size() != n40 * n40) {
    problems.push_back("warehouse40 dependency edge set not complete (" +
                       std::to_string(vd40.e_vd.size()) + "/1600)");
  }

  const CouplingGraphs gt = thermal40_graphs();
  const int sccs = scc_count(gt.n_agents, gt.state);
  if (sccs != 2) {
    problems.push_back("thermal40 state graph has " + std::to_string(sccs) +
                       " strongly connected components, want 2");
  }

  o.pass = problems.empty();
  o.detail = o.pass ? "six-agent sets, complete warehouse40 dependency "
                      "edges, and the two thermal40 components all match"
                    : join_notes(problems);
  return o;
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  const SuiteResult r = locality_suite(200, 2027, 1e-10);
  return from_suite(r, secs_since(t0));
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  const SuiteResult r = decomposition_suite(40, 2028, 1e-6);
  return from_suite(r, secs_since(t0));
}

Outcome criterion5() {
  const auto t0 = Clock::now();
  const VarianceSuite s = variance_suite(100000, 2029);
  Outcome o = from_suite(s.verdict, secs_since(t0));
  std::ostringstream extra;
  extra << "; gap " << fmt(s.report.diff_empirical) << " +- "
        << fmt(s.report.diff_half_width) << " in ["
        << fmt(s.report.lower_bound) << ", " << fmt(s.report.upper_bound)
        << "]";
  o.detail += extra.str();
  return o;
}

Outcome criterion6() {
  const auto t0 = Clock::now();
  const SuiteResult r = mlp_gradient_suite(12, 2030, 1e-4);
  return from_suite(r, secs_since(t0));
}

Outcome criterion7() {
  Outcome o;
  std::vector<std::string> problems;

  // At 22 C everywhere, envelope loss (30-22)/1 plus 1 kW internal gain
  // is cancelled exactly by -9 kW of cooling, so the noise-free map must
  // hold the fixed point.
  ThermalParams tp;
  tp.noise_std = 0.0;
  const auto thermal = make_thermal(thermal40_graphs(), tp);
  Rng trng(1);
  GlobalState ts;
  ts.x = Eigen::VectorXd::Constant(40, 22.0);
  ts.t = 0;
  JointAction cool(40, Eigen::VectorXd::Constant(1, -9.0));
  double thermal_worst = 0.0;
  for (int step = 0; step < 100; ++step) {
    auto [next, reward] = thermal->step(ts, cool, trng);
    thermal_worst = std::max(
        thermal_worst, (next.x.array() - 22.0).abs().maxCoeff());
    ts = next;
  }
  if (thermal_worst > 1e-12) {
    problems.push_back("thermal fixed point drifts by " + fmt(thermal_worst));
  }

  // With zero inflow amplitude the stock vector is only redistributed,
  // so its sum is invariant under any simplex routing.
  WarehouseParams wp;
  wp.amplitude = Eigen::VectorXd::Zero(9);
  const auto warehouse = make_warehouse(warehouse9_graphs(), wp);
  Rng wrng(2);
  GlobalState ws = warehouse->reset(wrng);
  double total0 = 0.0;
  for (int i = 1; i <= 9; ++i) total0 += ws.x(warehouse->state_offset(i));
  double mass_worst = 0.0;
  for (int step = 0; step < 50; ++step) {
    JointAction act(9);
    for (int i = 1; i <= 9; ++i) {
      Eigen::VectorXd shares(warehouse->action_dim(i));
      for (int k = 0; k < shares.size(); ++k) {
        shares(k) = wrng.uniform(0.05, 1.0);
      }
      act[i - 1] = shares / shares.sum();
    }
    auto [next, reward] = warehouse->step(ws, act, wrng);
    double total = 0.0;
    for (int i = 1; i <= 9; ++i) total += next.x(warehouse->state_offset(i));
    mass_worst = std::max(mass_worst, std::abs(total - total0));
    ws = next;
  }
  if (mass_worst > 1e-12) {
    problems.push_back("stock total drifts by " + fmt(mass_worst));
  }

  o.pass = problems.empty();
  o.detail = o.pass ? "thermal fixed point held to " + fmt(thermal_worst) +
                          ", stock total held to " + fmt(mass_worst)
                    : join_notes(problems);
  return o;
}

std::vector<RunRecord> run_seeds(const BuiltinSetup& setup,
                                 const TrainConfig& config,
                                 const std::string& tag) {
  std::vector<RunRecord> records;
  records.reserve(config.seeds.size());
  for (const std::uint64_t seed : config.seeds) {
    const auto t0 = Clock::now();
    try {
      MastacTrainer trainer(setup.env, config, seed);
      records.push_back(trainer.run());
      std::cerr << "  [" << tag << "] seed " << seed << " done ("
                << fmt(secs_since(t0)) << "s)\n";
    } catch (const std::exception& err) {
      RunRecord rec;
      rec.seed = seed;
      rec.variant = config.variant;
      rec.kappa = config.kappa;
      rec.failed = true;
      rec.fail_reason = err.what();
      records.push_back(std::move(rec));
      std::cerr << "  [" << tag << "] seed " << seed
                << " FAILED: " << err.what() << "\n";
    }
  }
  return records;
}

ResultBundle train_bundle(const BuiltinSetup& setup, TrainConfig config,
                          const std::filesystem::path& out_dir,
                          const std::string& tag) {
  auto records = run_seeds(setup, config, tag);
  ResultBundle bundle =
      aggregate_runs(setup.name, std::move(config), std::move(records));
  std::filesystem::create_directories(out_dir);
  write_bundle(bundle, out_dir);
  return bundle;
}

double mean_smoothed_at(const std::vector<RunRecord>& runs, int epoch) {
  double sum = 0.0;
  int n = 0;
  for (const RunRecord& run : runs) {
    if (run.failed || epoch >= static_cast<int>(run.smoothed_return.size())) {
      continue;
    }
    sum += run.smoothed_return[epoch];
    ++n;
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

Outcome criterion8(const std::filesystem::path& out_dir) {
  Outcome o;
  BuiltinSetup setup = builtin_config("warehouse9");
  TrainConfig config = setup.config;
  config.seeds = {0, 1, 2, 3, 4};

  config.variant = Variant::kExact;
  const ResultBundle exact =
      train_bundle(setup, config, out_dir / "c8", "w9 exact");
  config.variant = Variant::kUndecomposedQ;
  const ResultBundle undec =
      train_bundle(setup, config, out_dir / "c8", "w9 undecq");

  const int probe_epoch = 1999;
  const double exact_mid = mean_smoothed_at(exact.runs, probe_epoch);
  const double undec_mid = mean_smoothed_at(undec.runs, probe_epoch);

  const bool level_ok = exact.completed > 0 && exact.final20_mean >= -0.8;
  const bool order_ok = undec.completed > 0 && exact_mid > undec_mid;
  o.pass = level_ok && order_ok;
  std::ostringstream s;
  s << "final-20% mean " << fmt(exact.final20_mean) << " (threshold -0.8, "
    << exact.completed << "/5 seeds); smoothed return at epoch 2000: "
    << fmt(exact_mid) << " vs " << fmt(undec_mid)
    << " for the undecomposed critic (" << undec.completed << "/5 seeds)";
  o.detail = s.str();
  return o;
}

Outcome criterion9(const std::filesystem::path& out_dir) {
  Outcome o;
  BuiltinSetup setup = builtin_config("warehouse40");
  TrainConfig base = setup.config;
  base.epochs = 1500;
  base.batch = 64;
  base.warmup = 64;

  int ordered = 0;
  int done = 0;
  std::ostringstream s;
  for (int rep = 0; rep < 3; ++rep) {
    TrainConfig config = base;
    config.seeds = {static_cast<std::uint64_t>(3 * rep),
                    static_cast<std::uint64_t>(3 * rep + 1),
                    static_cast<std::uint64_t>(3 * rep + 2)};
    config.variant = Variant::kKappa;

    const auto dir = out_dir / ("c9-rep" + std::to_string(rep));
    config.kappa = 2;
    const ResultBundle k2 = train_bundle(
        setup, config, dir, "w40 k2 rep" + std::to_string(rep));
    config.kappa = 8;
    const ResultBundle k8 = train_bundle(
        setup, config, dir, "w40 k8 rep" + std::to_string(rep));

    const int last = base.epochs - 1;
    const double m2 = mean_smoothed_at(k2.runs, last);
    const double m8 = mean_smoothed_at(k8.runs, last);
    const bool rep_ok =
        k2.completed > 0 && k8.completed > 0 && !(m2 < m8);
    ++done;
    ordered += rep_ok ? 1 : 0;
    if (rep > 0) s << "; ";
    s << "repeat " << rep << ": kappa2 " << fmt(m2) << (rep_ok ? " >= " : " < ")
      << "kappa8 " << fmt(m8);
    if (ordered == 2 || done - ordered == 2) break;
  }
  o.pass = ordered >= 2;
  o.detail = s.str() + " (" + std::to_string(ordered) + "/" +
             std::to_string(done) + " repeats ordered, need 2)";
  return o;
}

std::string training_artifacts(const ResultBundle& bundle) {
  return results_csv(bundle) + "\n---\n" + aggregate_csv(bundle) + "\n---\n" +
         metadata_json(bundle) + "\n---\n" + chart_svg(bundle);
}

std::string suite_json(const SuiteResult& r) {
  nlohmann::json doc;
  doc["cases"] = r.cases;
  doc["max_error"] = r.max_error;
  doc["passed"] = r.passed;
  doc["notes"] = r.notes;
  return doc.dump(2);
}

Outcome criterion10() {
  Outcome o;
  BuiltinSetup setup = builtin_config("warehouse9");
  TrainConfig config = setup.config;
  config.epochs = 150;
  config.batch = 32;
  config.warmup = 32;
  config.seeds = {0, 1};

  const auto emit_training = [&]() {
    std::vector<RunRecord> records;
    for (const std::uint64_t seed : config.seeds) {
      MastacTrainer trainer(setup.env, config, seed);
      records.push_back(trainer.run());
    }
    return training_artifacts(
        aggregate_runs(setup.name, config, std::move(records)));
  };
  const std::string train_a = emit_training();
  const std::string train_b = emit_training();

  const std::string verify_a = suite_json(mlp_gradient_suite(3, 99));
  const std::string verify_b = suite_json(mlp_gradient_suite(3, 99));
  const std::string locality_a = suite_json(locality_suite(10, 77));
  const std::string locality_b = suite_json(locality_suite(10, 77));

  const bool train_ok = train_a == train_b;
  const bool verify_ok = verify_a == verify_b && locality_a == locality_b;
  o.pass = train_ok && verify_ok;
  std::ostringstream s;
  s << "training artifacts " << (train_ok ? "byte-identical" : "DIFFER")
    << " across reruns (" << train_a.size() << " bytes); verification JSON "
    << (verify_ok ? "byte-identical" : "DIFFERS") << " across reruns";
  o.detail = s.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the structured multi-agent toolkit"};
  int criterion = 0;
  std::string out_dir = "acceptance_runs";
  app.add_option("--criterion", criterion,
                 "Run a single criterion 1..10 (default: all)")
      ->check(CLI::Range(0, 10));
  app.add_option("--out", out_dir, "Directory for training artifacts");
  CLI11_PARSE(app, argc, argv);

  bool all_pass = true;
  for (int n = 1; n <= 10; ++n) {
    if (criterion != 0 && criterion != n) continue;
    Outcome o;
    try {
      switch (n) {
        case 1: o = criterion1(); break;
        case 2: o = criterion2(); break;
        case 3: o = criterion3(); break;
        case 4: o = criterion4(); break;
        case 5: o = criterion5(); break;
        case 6: o = criterion6(); break;
        case 7: o = criterion7(); break;
        case 8: o = criterion8(out_dir); break;
        case 9: o = criterion9(out_dir); break;
        case 10: o = criterion10(); break;
      }
    } catch (const std::exception& err) {
      o.pass = false;
      o.detail = std::string("exception: ") + err.what();
    }
    all_pass = all_pass && o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL")
              << " - " << o.detail << std::endl;
  }
  return all_pass ? 0 : 1;
}
