#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "structmarl/mastac.hpp"

namespace structmarl {

// Shortest decimal that round-trips the exact double; the one float
// formatter used in every serialized artifact so re-emission is
// byte-identical.
std::string format_double(double x);

// Filesystem-safe variant tag ("exact", "kappa2", "undecq", "undecqhat").
std::string variant_file_tag(Variant variant, int kappa);

// "<env>-<tag>-seed<seed>", the per-run key used in CSV rows and file
// names.
std::string run_id(const std::string& env_name, Variant variant, int kappa,
                   std::uint64_t seed);

// Per-seed records plus their cross-seed reduction. Aggregate series
// cover completed runs only; failures stay listed with their reasons.
struct ResultBundle {
  std::string env_name;
  TrainConfig config;
  std::vector<RunRecord> runs;
  std::vector<double> mean_return, std_return;
  std::vector<double> mean_smoothed, std_smoothed;
  double final20_mean = 0.0;
  double final20_std = 0.0;
  int completed = 0;
  int failed = 0;
};

// Pooled mean/std of the last ceil(fraction * K) entries of
// episode_return across completed runs; (0, 0) when nothing completed.
std::pair<double, double> final_window_stats(
    const std::vector<RunRecord>& runs, double fraction = 0.2);

ResultBundle aggregate_runs(std::string env_name, TrainConfig config,
                            std::vector<RunRecord> runs);

// One row per (seed, epoch) with the pinned header
// run_id,variant,seed,epoch,episode_return,smoothed_return.
std::string results_csv(const ResultBundle& bundle);

// Cross-seed reduction, one row per epoch:
// epoch,mean_return,std_return,mean_smoothed,std_smoothed.
std::string aggregate_csv(const ResultBundle& bundle);

// Sorted-key JSON: configuration echo, fingerprint, generator name,
// format versions, failures, and the final-window statistic. Never
// includes wall-clock times.
std::string metadata_json(const ResultBundle& bundle);

// Self-contained line chart: mean episode return with a +-std band and
// the smoothed mean overlaid.
std::string chart_svg(const ResultBundle& bundle);

// FNV-1a over a canonical rendering of the configuration.
std::uint64_t config_fingerprint(const TrainConfig& config,
                                 const std::string& env_name);

// Writes <base>.csv, <base>-aggregate.csv, <base>-metadata.json, and
// <base>-chart.svg under dir with base "<env>-<tag>"; returns that base
// path.
std::filesystem::path write_bundle(const ResultBundle& bundle,
                                   const std::filesystem::path& dir);

}  // namespace structmarl
