#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "structmarl/builtin.hpp"
#include "structmarl/results.hpp"

using namespace structmarl;

namespace {

RunRecord make_run(std::uint64_t seed, std::vector<double> series) {
  RunRecord run;
  run.seed = seed;
  run.variant = Variant::kExact;
  run.episode_return = series;
  run.smoothed_return = std::move(series);
  return run;
}

std::string slurp(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("double formatting round-trips exactly") {
  for (const double x : {0.1, -1.4, 1e-300, 3.0, -0.0, 1.0 / 3.0,
                         12345.678901234567}) {
    const std::string text = format_double(x);
    double back = 0.0;
    const auto [ptr, ec] =
        std::from_chars(text.data(), text.data() + text.size(), back);
    CHECK(ec == std::errc());
    CHECK(ptr == text.data() + text.size());
    CHECK(back == x);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(3.0) == format_double(3.0));
}

TEST_CASE("run ids and variant tags are filesystem-safe") {
  CHECK(variant_file_tag(Variant::kKappa, 2) == "kappa2");
  CHECK(run_id("warehouse40", Variant::kKappa, 2, 7) ==
        "warehouse40-kappa2-seed7");
  CHECK(run_id("thermal40", Variant::kExact, 0, 0) == "thermal40-exact-seed0");
}

TEST_CASE("aggregation reduces across completed seeds only") {
  TrainConfig config;
  config.epochs = 4;
  std::vector<RunRecord> runs;
  runs.push_back(make_run(0, {1.0, 2.0, 3.0, 4.0}));
  runs.push_back(make_run(1, {3.0, 4.0, 5.0, 6.0}));
  RunRecord broken;
  broken.seed = 2;
  broken.failed = true;
  broken.fail_reason = "poked";
  runs.push_back(broken);

  const ResultBundle bundle = aggregate_runs("toy", config, runs);
  CHECK(bundle.completed == 2);
  CHECK(bundle.failed == 1);
  REQUIRE(bundle.mean_return.size() == 4);
  CHECK(bundle.mean_return[0] == 2.0);
  CHECK(bundle.mean_return[3] == 5.0);
  // Sample deviation of {1,3} is sqrt(2).
  CHECK(bundle.std_return[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

  // Final 20% of 4 epochs is the last entry of each completed run.
  CHECK(bundle.final20_mean == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(bundle.final20_std ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("length mismatches between completed runs are rejected") {
  TrainConfig config;
  std::vector<RunRecord> runs;
  runs.push_back(make_run(0, {1.0, 2.0}));
  runs.push_back(make_run(1, {1.0}));
  CHECK_THROWS_AS(aggregate_runs("toy", config, runs), std::invalid_argument);
}

TEST_CASE("the final-window statistic pools the trailing entries") {
  std::vector<RunRecord> runs;
  runs.push_back(make_run(0, {10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 4.0}));
  runs.push_back(make_run(1, {10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 6.0, 8.0}));
  // ceil(0.2 * 10) = 2 entries per run: {2,4,6,8}.
  const auto [mean, stddev] = final_window_stats(runs, 0.2);
  CHECK(mean == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(stddev == doctest::Approx(std::sqrt(20.0 / 3.0)).epsilon(1e-12));

  CHECK(final_window_stats({}, 0.2) == std::pair<double, double>{0.0, 0.0});
}

TEST_CASE("the per-run CSV matches the pinned schema byte for byte") {
  TrainConfig config;
  config.epochs = 2;
  std::vector<RunRecord> runs;
  runs.push_back(make_run(0, {-0.5, 1.5}));
  runs.push_back(make_run(3, {0.25, -2.0}));
  const ResultBundle bundle = aggregate_runs("toy", config, runs);

  const std::string csv = results_csv(bundle);
  const std::string want =
      "run_id,variant,seed,epoch,episode_return,smoothed_return\n"
      "toy-exact-seed0,exact,0,0,-0.5,-0.5\n"
      "toy-exact-seed0,exact,0,1,1.5,1.5\n"
      "toy-exact-seed3,exact,3,0,0.25,0.25\n"
      "toy-exact-seed3,exact,3,1,-2,-2\n";
  CHECK(csv == want);
  CHECK(results_csv(bundle) == csv);

  const std::string agg = aggregate_csv(bundle);
  CHECK(agg.rfind("epoch,mean_return,std_return,mean_smoothed,std_smoothed\n",
                  0) == 0);
  CHECK(aggregate_csv(bundle) == agg);
}

TEST_CASE("metadata is deterministic and free of wall-clock fields") {
  TrainConfig config;
  config.epochs = 2;
  std::vector<RunRecord> runs;
  runs.push_back(make_run(4, {0.0, 1.0}));
  runs[0].wall_clock_seconds = 123.456;
  RunRecord broken;
  broken.seed = 5;
  broken.failed = true;
  broken.fail_reason = "non-finite reward";
  runs.push_back(broken);

  const ResultBundle bundle = aggregate_runs("toy", config, runs);
  const std::string meta = metadata_json(bundle);
  CHECK(metadata_json(bundle) == meta);
  CHECK(meta.find("wall") == std::string::npos);
  CHECK(meta.find("123.456") == std::string::npos);
  CHECK(meta.find("non-finite reward") != std::string::npos);
  CHECK(meta.find("mt19937_64+box-muller") != std::string::npos);
  CHECK(meta.find("config_fingerprint") != std::string::npos);
}

TEST_CASE("config fingerprints separate distinct configurations") {
  TrainConfig a;
  const std::uint64_t base = config_fingerprint(a, "toy");
  CHECK(config_fingerprint(a, "toy") == base);
  CHECK(config_fingerprint(a, "other") != base);
  TrainConfig b = a;
  b.gamma = 0.9;
  CHECK(config_fingerprint(b, "toy") != base);
  TrainConfig c = a;
  c.critic_hidden = {64, 65};
  CHECK(config_fingerprint(c, "toy") != base);
}

TEST_CASE("charts are valid standalone SVG and reproducible") {
  TrainConfig config;
  config.epochs = 5;
  std::vector<RunRecord> runs;
  runs.push_back(make_run(0, {0.0, -1.0, -0.5, 0.5, 1.0}));
  runs.push_back(make_run(1, {1.0, 0.0, 0.5, 1.5, 2.0}));
  const ResultBundle bundle = aggregate_runs("toy", config, runs);

  const std::string svg = chart_svg(bundle);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("<polygon") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(chart_svg(bundle) == svg);

  const ResultBundle empty = aggregate_runs("toy", config, {});
  const std::string placeholder = chart_svg(empty);
  CHECK(placeholder.find("no completed runs") != std::string::npos);
}

TEST_CASE("bundles land on disk under the expected names") {
  TrainConfig config;
  config.epochs = 3;
  config.variant = Variant::kKappa;
  config.kappa = 4;
  std::vector<RunRecord> runs;
  RunRecord run = make_run(2, {1.0, 2.0, 3.0});
  run.variant = Variant::kKappa;
  run.kappa = 4;
  runs.push_back(run);
  const ResultBundle bundle = aggregate_runs("toy", config, runs);

  const auto dir =
      std::filesystem::temp_directory_path() / "structmarl_results_test";
  std::filesystem::remove_all(dir);
  const auto base = write_bundle(bundle, dir);
  CHECK(base.filename() == "toy-kappa4");
  CHECK(slurp(dir / "toy-kappa4.csv") == results_csv(bundle));
  CHECK(slurp(dir / "toy-kappa4-aggregate.csv") == aggregate_csv(bundle));
  CHECK(slurp(dir / "toy-kappa4-metadata.json") == metadata_json(bundle));
  CHECK(slurp(dir / "toy-kappa4-chart.svg") == chart_svg(bundle));
  std::filesystem::remove_all(dir);
}

TEST_CASE("builtin experiments carry the published hyperparameters") {
  const BuiltinSetup w9 = builtin_config("warehouse9");
  CHECK(w9.env->n_agents() == 9);
  CHECK(w9.config.gamma == 0.95);
  CHECK(w9.config.batch == 256);
  CHECK(w9.config.episode_length == 8);
  CHECK(w9.config.epochs == 3500);
  CHECK(w9.config.actor_lr == 1e-4);
  CHECK(w9.config.critic_lr == 1e-3);
  CHECK(w9.config.seeds.size() == 15);

  const BuiltinSetup w40 = builtin_config("warehouse40");
  CHECK(w40.env->n_agents() == 40);
  CHECK(w40.config.epochs == 6000);
  CHECK(w40.config.actor_lr == 5e-4);
  CHECK(w40.config.critic_lr == 5e-3);
  CHECK(w40.config.episode_length == 8);

  const BuiltinSetup t40 = builtin_config("thermal40");
  CHECK(t40.env->n_agents() == 40);
  CHECK(t40.config.gamma == 0.9);
  CHECK(t40.config.episode_length == 40);
  CHECK(t40.config.epochs == 5000);
  CHECK(t40.config.noise.sigma_start == 3.0);

  CHECK_THROWS_AS(builtin_config("six_agent"), std::invalid_argument);
}
