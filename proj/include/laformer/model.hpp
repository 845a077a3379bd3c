#pragma once

// The composed predictor: encoder -> lane-aware estimation -> MDN decoder ->
// optional refinement, with the variant switches used by the ablation runs.

#include <cstdint>
#include <optional>
#include <vector>

#include "laformer/features.hpp"
#include "laformer/gig_encoder.hpp"
#include "laformer/lane_aware.hpp"
#include "laformer/mdn_decoder.hpp"
#include "laformer/refiner.hpp"
#include "laformer/scene_model.hpp"

namespace laformer {

struct PreprocessOptions {
  double lane_radius = 50.0;
  bool rotate_to_heading = false;
  double coord_scale = 0.1;
};

/// A scene prepared for the model: normalized, radius-filtered, featurized and labeled.
struct ProcessedScene {
  NormalizedScene normalized;
  SceneTensors tensors;
  ad::Matrix history;  // t_h x 2, normalized frame
  ad::Matrix future;   // t_f x 2, normalized frame
  LaneLabel labels;    // empty when the scene has no lanes
  int scene_index = -1;
};

ProcessedScene preprocess(const Scene& raw, const PreprocessOptions& options = {}, int scene_index = -1);

struct LossWeights {
  double lambda1 = 10.0;
  double lambda2 = 5.0;
  double lambda3 = 2.0;
  double tau = 1.0;
  bool use_offset = true;
  bool use_angle = true;
  /// In stage 2 pick the WTA mode from refined trajectories (otherwise from stage-1 mu).
  bool wta_on_refined = true;
};

struct ForwardResult {
  SceneEncoding encoding;
  ad::Var h;      // 1 x D target encoding
  ad::Var h_att;  // 1 x D (zeros for variants without the lane-aware module)
  std::optional<LaneScores> scores;
  std::optional<CandidateSet> candidates;
  MixturePrediction mixture;
  std::optional<RefinedPrediction> refined;

  /// Reported trajectories: refined when available, otherwise mu.
  const ad::Var& trajectories() const { return refined ? refined->final : mixture.mu; }
};

/// Discrete choices made inside the loss. Passing them back in holds them fixed, which is how
/// finite-difference checks see the same piecewise-smooth function as the tape.
struct LossSelections {
  int winner = 0;          // WTA mode on stage-1 mu
  int refined_winner = 0;  // WTA mode used by the stage-2 terms
  std::vector<double> soft_targets;
};

struct LossBreakdown {
  ad::Var total;
  double lane = 0.0;
  double reg = 0.0;
  double cls = 0.0;
  double off = 0.0;
  double angle = 0.0;
  double stage1 = 0.0;
  double stage2 = 0.0;
  int winner = 0;
  LossSelections selections;
};

class LaformerModel {
 public:
  LaformerModel(const ModelConfig& config, std::uint64_t seed);
  LaformerModel(LaformerModel&&) = default;
  LaformerModel& operator=(LaformerModel&&) = default;

  /// stage 1 skips the refiner; k is the number of lane candidates per scored step.
  ForwardResult forward(ad::Tape& tape, const ProcessedScene& scene, int stage, int k, const ad::Matrix& z) const;
  ForwardResult forward(ad::Tape& tape, const ProcessedScene& scene, int stage, int k) const;

  LossBreakdown loss(ad::Tape& tape, const ForwardResult& result, const ProcessedScene& scene,
                     const LossWeights& weights, int stage, const LossSelections* frozen = nullptr) const;

  /// Future steps (0-based) that the lane-aware module scores for this variant.
  std::vector<int> scored_steps() const;

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

 private:
  ModelConfig config_;
  nn::ParamStore store_;
  GigEncoder encoder_;
  LaneAware lane_aware_;
  MdnDecoder decoder_;
  Refiner refiner_;
};

}  // namespace laformer
