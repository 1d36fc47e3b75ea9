#include "structmarl/results.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <system_error>

#include <json.hpp>

#include <Eigen/Core>

namespace structmarl {

namespace {

void fnv_mix(std::uint64_t& hash, const std::string& text) {
  for (const char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  hash ^= static_cast<unsigned char>(';');
  hash *= 0x100000001b3ULL;
}

std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(xs[k]);
  }
  return out;
}

// Mean and sample standard deviation; a single value has spread zero.
std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (const double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + file.string() + " for writing");
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("short write to " + file.string());
}

// Scale [lo, hi] onto pixels, guarding a degenerate range.
struct LinearScale {
  double lo, hi, pix_lo, pix_hi;
  double operator()(double x) const {
    const double span = hi - lo;
    const double frac = span == 0.0 ? 0.5 : (x - lo) / span;
    return pix_lo + frac * (pix_hi - pix_lo);
  }
};

}  // namespace

std::string format_double(double x) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), x);
  if (ec != std::errc()) throw std::runtime_error("double formatting failed");
  return std::string(buffer, ptr);
}

std::string variant_file_tag(Variant variant, int kappa) {
  switch (variant) {
    case Variant::kExact:
      return "exact";
    case Variant::kKappa:
      return "kappa" + std::to_string(kappa);
    case Variant::kUndecomposedQ:
      return "undecq";
    case Variant::kUndecomposedQhat:
      return "undecqhat";
  }
  throw std::invalid_argument("unknown variant");
}

std::string run_id(const std::string& env_name, Variant variant, int kappa,
                   std::uint64_t seed) {
  return env_name + "-" + variant_file_tag(variant, kappa) + "-seed" +
         std::to_string(seed);
}

std::pair<double, double> final_window_stats(
    const std::vector<RunRecord>& runs, double fraction) {
  std::vector<double> pooled;
  for (const RunRecord& run : runs) {
    if (run.failed || run.episode_return.empty()) continue;
    const auto k = static_cast<std::size_t>(run.episode_return.size());
    const auto window = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(k)));
    for (std::size_t e = k - window; e < k; ++e) {
      pooled.push_back(run.episode_return[e]);
    }
  }
  return mean_std(pooled);
}

ResultBundle aggregate_runs(std::string env_name, TrainConfig config,
                            std::vector<RunRecord> runs) {
  ResultBundle bundle;
  bundle.env_name = std::move(env_name);
  bundle.config = std::move(config);
  bundle.runs = std::move(runs);

  std::size_t epochs = 0;
  for (const RunRecord& run : bundle.runs) {
    if (run.failed) {
      ++bundle.failed;
      continue;
    }
    ++bundle.completed;
    if (epochs == 0) {
      epochs = run.episode_return.size();
    } else if (run.episode_return.size() != epochs) {
      throw std::invalid_argument(
          "completed runs disagree on the number of recorded epochs");
    }
  }

  bundle.mean_return.resize(epochs);
  bundle.std_return.resize(epochs);
  bundle.mean_smoothed.resize(epochs);
  bundle.std_smoothed.resize(epochs);
  std::vector<double> raw, smooth;
  for (std::size_t e = 0; e < epochs; ++e) {
    raw.clear();
    smooth.clear();
    for (const RunRecord& run : bundle.runs) {
      if (run.failed) continue;
      raw.push_back(run.episode_return[e]);
      smooth.push_back(run.smoothed_return[e]);
    }
    const auto [mr, sr] = mean_std(raw);
    bundle.mean_return[e] = mr;
    bundle.std_return[e] = sr;
    const auto [ms, ss] = mean_std(smooth);
    bundle.mean_smoothed[e] = ms;
    bundle.std_smoothed[e] = ss;
  }

  const auto [fm, fs] = final_window_stats(bundle.runs);
  bundle.final20_mean = fm;
  bundle.final20_std = fs;
  return bundle;
}

std::string results_csv(const ResultBundle& bundle) {
  std::string out = "run_id,variant,seed,epoch,episode_return,smoothed_return\n";
  const std::string label =
      variant_label(bundle.config.variant, bundle.config.kappa);
  for (const RunRecord& run : bundle.runs) {
    const std::string id =
        run_id(bundle.env_name, run.variant, run.kappa, run.seed);
    for (std::size_t e = 0; e < run.episode_return.size(); ++e) {
      out += id;
      out += ',';
      out += label;
      out += ',';
      out += std::to_string(run.seed);
      out += ',';
      out += std::to_string(e);
      out += ',';
      out += format_double(run.episode_return[e]);
      out += ',';
      out += format_double(run.smoothed_return[e]);
      out += '\n';
    }
  }
  return out;
}

std::string aggregate_csv(const ResultBundle& bundle) {
  std::string out = "epoch,mean_return,std_return,mean_smoothed,std_smoothed\n";
  for (std::size_t e = 0; e < bundle.mean_return.size(); ++e) {
    out += std::to_string(e);
    out += ',';
    out += format_double(bundle.mean_return[e]);
    out += ',';
    out += format_double(bundle.std_return[e]);
    out += ',';
    out += format_double(bundle.mean_smoothed[e]);
    out += ',';
    out += format_double(bundle.std_smoothed[e]);
    out += '\n';
  }
  return out;
}

std::uint64_t config_fingerprint(const TrainConfig& config,
                                 const std::string& env_name) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  fnv_mix(hash, env_name);
  fnv_mix(hash, variant_label(config.variant, config.kappa));
  fnv_mix(hash, std::to_string(config.epochs));
  fnv_mix(hash, std::to_string(config.batch));
  fnv_mix(hash, format_double(config.tau));
  fnv_mix(hash, format_double(config.gamma));
  fnv_mix(hash, format_double(config.actor_lr));
  fnv_mix(hash, format_double(config.critic_lr));
  fnv_mix(hash, std::to_string(config.episode_length));
  fnv_mix(hash, std::to_string(config.update_interval));
  fnv_mix(hash, std::to_string(config.warmup));
  fnv_mix(hash, format_double(config.noise.sigma_start));
  fnv_mix(hash, format_double(config.noise.sigma_end));
  fnv_mix(hash, format_double(config.noise.decay_fraction));
  fnv_mix(hash, config.literal_td ? "literal" : "bootstrap");
  fnv_mix(hash, join_ints(config.critic_hidden));
  fnv_mix(hash, std::to_string(config.replay_capacity));
  fnv_mix(hash, format_double(config.reward_bound));
  for (const std::uint64_t seed : config.seeds) {
    fnv_mix(hash, std::to_string(seed));
  }
  return hash;
}

std::string metadata_json(const ResultBundle& bundle) {
  nlohmann::json doc;
  doc["env"] = bundle.env_name;
  doc["variant"] = variant_label(bundle.config.variant, bundle.config.kappa);
  doc["config"] = {
      {"epochs", bundle.config.epochs},
      {"batch", bundle.config.batch},
      {"tau", bundle.config.tau},
      {"gamma", bundle.config.gamma},
      {"actor_lr", bundle.config.actor_lr},
      {"critic_lr", bundle.config.critic_lr},
      {"episode_length", bundle.config.episode_length},
      {"update_interval", bundle.config.update_interval},
      {"warmup", bundle.config.warmup},
      {"noise",
       {{"sigma_start", bundle.config.noise.sigma_start},
        {"sigma_end", bundle.config.noise.sigma_end},
        {"decay_fraction", bundle.config.noise.decay_fraction}}},
      {"literal_td", bundle.config.literal_td},
      {"critic_hidden", bundle.config.critic_hidden},
      {"replay_capacity", bundle.config.replay_capacity},
      {"reward_bound", bundle.config.reward_bound},
  };
  char fingerprint[32];
  std::snprintf(fingerprint, sizeof(fingerprint), "%016llx",
                static_cast<unsigned long long>(
                    config_fingerprint(bundle.config, bundle.env_name)));
  doc["config_fingerprint"] = fingerprint;
  doc["rng_algorithm"] = Rng::kAlgorithm;
  doc["versions"] = {
      {"artifact_format", 1},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
  };
  doc["seeds"] = nlohmann::json::array();
  for (const RunRecord& run : bundle.runs) doc["seeds"].push_back(run.seed);
  doc["completed"] = bundle.completed;
  doc["failed"] = nlohmann::json::array();
  for (const RunRecord& run : bundle.runs) {
    if (run.failed) {
      doc["failed"].push_back({{"seed", run.seed}, {"reason", run.fail_reason}});
    }
  }
  doc["final20"] = {{"mean", bundle.final20_mean},
                    {"std", bundle.final20_std}};
  doc["csv_schema"] = "run_id,variant,seed,epoch,episode_return,smoothed_return";
  return doc.dump(2) + "\n";
}

std::string chart_svg(const ResultBundle& bundle) {
  const double width = 720, height = 440;
  const double left = 70, right = 700, top = 30, bottom = 390;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         format_double(width) + "\" height=\"" + format_double(height) +
         "\" viewBox=\"0 0 " + format_double(width) + " " +
         format_double(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const std::size_t epochs = bundle.mean_return.size();
  if (epochs == 0) {
    svg += "<text x=\"360\" y=\"220\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">no completed "
           "runs</text>\n</svg>\n";
    return svg;
  }

  double lo = bundle.mean_return[0], hi = lo;
  for (std::size_t e = 0; e < epochs; ++e) {
    lo = std::min(lo, bundle.mean_return[e] - bundle.std_return[e]);
    hi = std::max(hi, bundle.mean_return[e] + bundle.std_return[e]);
    lo = std::min(lo, bundle.mean_smoothed[e]);
    hi = std::max(hi, bundle.mean_smoothed[e]);
  }
  if (lo == hi) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  const LinearScale x{0.0, static_cast<double>(epochs - 1), left, right};
  const LinearScale y{lo - pad, hi + pad, bottom, top};

  // +-std band around the per-epoch mean.
  svg += "<polygon fill=\"#4477aa\" fill-opacity=\"0.2\" stroke=\"none\" "
         "points=\"";
  for (std::size_t e = 0; e < epochs; ++e) {
    svg += format_double(x(static_cast<double>(e))) + "," +
           format_double(y(bundle.mean_return[e] + bundle.std_return[e])) + " ";
  }
  for (std::size_t e = epochs; e-- > 0;) {
    svg += format_double(x(static_cast<double>(e))) + "," +
           format_double(y(bundle.mean_return[e] - bundle.std_return[e])) + " ";
  }
  svg += "\"/>\n";

  auto polyline = [&](const std::vector<double>& series, const char* color) {
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t e = 0; e < epochs; ++e) {
      svg += format_double(x(static_cast<double>(e))) + "," +
             format_double(y(series[e])) + " ";
    }
    svg += "\"/>\n";
  };
  polyline(bundle.mean_return, "#4477aa");
  polyline(bundle.mean_smoothed, "#ee6677");

  // Axes and ticks.
  svg += "<line x1=\"" + format_double(left) + "\" y1=\"" +
         format_double(bottom) + "\" x2=\"" + format_double(right) +
         "\" y2=\"" + format_double(bottom) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + format_double(left) + "\" y1=\"" +
         format_double(top) + "\" x2=\"" + format_double(left) + "\" y2=\"" +
         format_double(bottom) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = static_cast<double>(epochs - 1) * k / 4.0;
    const double px = x(fx);
    svg += "<line x1=\"" + format_double(px) + "\" y1=\"" +
           format_double(bottom) + "\" x2=\"" + format_double(px) +
           "\" y2=\"" + format_double(bottom + 5) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + format_double(px) + "\" y=\"" +
           format_double(bottom + 20) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           std::to_string(static_cast<long>(std::lround(fx))) + "</text>\n";

    const double fy = (lo - pad) + (hi + pad - (lo - pad)) * k / 4.0;
    const double py = y(fy);
    svg += "<line x1=\"" + format_double(left - 5) + "\" y1=\"" +
           format_double(py) + "\" x2=\"" + format_double(left) + "\" y2=\"" +
           format_double(py) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    char label[32];
    std::snprintf(label, sizeof(label), "%.3g", fy);
    svg += "<text x=\"" + format_double(left - 9) + "\" y=\"" +
           format_double(py + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           label + "</text>\n";
  }

  svg += "<text x=\"" + format_double((left + right) / 2) + "\" y=\"" +
         format_double(height - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">epoch</text>\n";
  svg += "<text x=\"" + format_double((left + right) / 2) + "\" y=\"18\" "
         "text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         bundle.env_name + " " +
         variant_label(bundle.config.variant, bundle.config.kappa) +
         " (mean of " + std::to_string(bundle.completed) + " seeds)</text>\n";
  svg += "<text x=\"" + format_double(right - 4) + "\" y=\"" +
         format_double(top + 14) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
         "fill=\"#4477aa\">episode return</text>\n";
  svg += "<text x=\"" + format_double(right - 4) + "\" y=\"" +
         format_double(top + 28) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
         "fill=\"#ee6677\">smoothed</text>\n";
  svg += "</svg>\n";
  return svg;
}

std::filesystem::path write_bundle(const ResultBundle& bundle,
                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string base =
      bundle.env_name + "-" +
      variant_file_tag(bundle.config.variant, bundle.config.kappa);
  write_text(dir / (base + ".csv"), results_csv(bundle));
  write_text(dir / (base + "-aggregate.csv"), aggregate_csv(bundle));
  write_text(dir / (base + "-metadata.json"), metadata_json(bundle));
  write_text(dir / (base + "-chart.svg"), chart_svg(bundle));
  return dir / base;
}

}  // namespace structmarl
