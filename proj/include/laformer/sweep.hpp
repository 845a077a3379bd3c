#pragma once

// Sensitivity sweeps: one model per (value, seed), reported as mean and std.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "laformer/metrics.hpp"

namespace laformer {

enum class SweepAxis { kK, kLambda1, kLambda2, kLambda3 };

const char* to_string(SweepAxis axis);
/// Accepts k, lambda1, lambda2, lambda3 (and the Greek spellings); anything else is Error(kConfig).
SweepAxis sweep_axis_from_string(const std::string& s);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single seed
};
MeanStd mean_std(const std::vector<double>& xs);

struct SweepRow {
  double value = 0.0;
  std::vector<MetricsReport> per_seed;
  MeanStd min_ade;
  MeanStd min_fde;
  MeanStd miss_rate;
  nlohmann::json to_json() const;
};

struct SweepOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int K = 6;
  /// Train stage 2 as well. Forced on for the lambda2 / lambda3 axes.
  bool stage2 = false;
  std::function<void(const std::string&)> progress;
};

/// Rows sorted by axis value. Stage-1 models are shared across values when the axis only affects stage 2.
std::vector<SweepRow> run_sweep(SweepAxis axis, const std::vector<double>& values, const TrainConfig& base,
                                const std::vector<ProcessedScene>& train, const std::vector<ProcessedScene>& val,
                                const SweepOptions& options = {});

/// Markdown table: value | minADE_K | minFDE_K | MR_K, each "mean ± std".
std::string format_sweep_table(SweepAxis axis, const std::vector<SweepRow>& rows, int K);

}  // namespace laformer
