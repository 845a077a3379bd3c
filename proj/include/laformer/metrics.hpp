#pragma once

// Displacement metrics over the top-K modes, and model evaluation.

#include <vector>

#include "json.hpp"
#include "laformer/harness.hpp"

namespace laformer {

inline constexpr double kMissThreshold = 2.0;  // meters, final step

struct MetricsReport {
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;
  int K = 0;
  int n_scenes = 0;
  nlohmann::json to_json() const;
};

/// Indices of the K most probable modes, most probable first; ties keep the lower index.
std::vector<int> top_modes(const std::vector<double>& probs, int K);

/// Per-scene best errors over the chosen modes of one prediction ((M * t_f) x 2 trajectories).
struct SceneErrors {
  double ade = 0.0;
  double fde = 0.0;
};
SceneErrors scene_errors(const ad::Matrix& trajectories, const ad::Matrix& Y, const std::vector<int>& modes);

/// Averages scene errors; a scene is a miss when its best final-step error exceeds kMissThreshold.
MetricsReport aggregate(const std::vector<SceneErrors>& errors, int K);

/// trajectories[i] is (M * t_f) x 2, probs[i] has M entries, futures[i] is t_f x 2. K > M is Error(kConfig).
MetricsReport compute_metrics(const std::vector<ad::Matrix>& trajectories, const std::vector<std::vector<double>>& probs,
                              const std::vector<ad::Matrix>& futures, int K);

struct ScenePrediction {
  ad::Matrix trajectories;  // (M * t_f) x 2, normalized frame, refined when stage 2
  ad::Matrix anchors;       // stage-1 mu
  std::vector<double> probs;
  std::vector<std::vector<int>> candidates;  // per scored step, -1 = padding
  std::vector<std::vector<double>> candidate_scores;
  std::vector<int> scored_steps;
};

/// Deterministic forward pass (z = 0).
ScenePrediction predict_normalized(const LaformerModel& model, const ProcessedScene& scene, int stage, int k);

/// Evaluates a model at the given stage and candidate count. `threads` > 1 shards scenes.
MetricsReport evaluate(const LaformerModel& model, const std::vector<ProcessedScene>& scenes, int stage, int k, int K,
                       int threads = 1);
MetricsReport evaluate(const Checkpoint& ckpt, const std::vector<ProcessedScene>& scenes, int K);

/// Fraction of (scene, scored step) pairs whose ground-truth lane is among the top-k candidates.
double candidate_recall(const LaformerModel& model, const std::vector<ProcessedScene>& scenes, int stage, int k);

}  // namespace laformer
