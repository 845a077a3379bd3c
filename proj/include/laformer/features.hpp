#pragma once

// Model configuration and the conversion of a normalized scene into padded,
// masked per-step feature matrices for the recurrent encoders.

#include <string>
#include <vector>

#include "json.hpp"
#include "laformer/autograd.hpp"
#include "laformer/scene_model.hpp"

namespace laformer {

enum class Variant { kBaseline, kBaselineS2, kSpatial, kTemporal, kFull };

const char* to_string(Variant v);
/// Throws Error(kConfig) for unknown names.
Variant variant_from_string(const std::string& s);

/// Whether the lane-aware module is active for a variant.
bool uses_lanes(Variant v);
/// Whether the variant has a second (refinement) stage.
bool has_refinement(Variant v);

struct ModelConfig {
  int hidden = 32;  // D
  int modes = 6;    // M
  int heads = 1;
  int history_steps = 4;
  int future_steps = 12;
  int top_k = 2;
  int latent_dim = 2;
  Variant variant = Variant::kFull;
  double coord_scale = 0.1;      // input features are meters * coord_scale
  double position_scale = 10.0;  // decoder outputs are multiplied by this to get meters
  bool cumulative_decoding = true;  // mu_t is the running sum of per-step decoder outputs
  double b_min = 1e-3;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

inline constexpr int kAgentFeatures = 8;   // start(2) end(2) class one-hot(3) timestamp(1)
inline constexpr int kLaneFeatures = 10;   // start(2) end(2) traffic control(1) turn one-hot(3) predecessor(2)
inline constexpr int kRefineFeatures = 4;  // start(2) end(2)

struct SceneTensors {
  // Agents: one matrix per history vector slot (t_h - 1 slots), rows = tracks.
  std::vector<ad::Matrix> agent_steps;      // N_traj x kAgentFeatures
  std::vector<ad::Matrix> agent_step_mask;  // N_traj x 1 with 0/1 entries
  ad::RowMask agent_mask;                   // agents with at least one valid vector
  int target_row = 0;
  // Lanes: one matrix per vector position, rows = segments, padded to the longest segment.
  std::vector<ad::Matrix> lane_steps;       // N_lane x kLaneFeatures
  std::vector<ad::Matrix> lane_step_mask;   // N_lane x 1
  ad::RowMask lane_mask;

  int agent_count() const { return static_cast<int>(agent_mask.size()); }
  int lane_count() const { return static_cast<int>(lane_mask.size()); }
};

SceneTensors build_scene_tensors(const Scene& normalized, double coord_scale);

/// Target observed positions as t_h x 2 rows.
ad::Matrix history_matrix(const Scene& scene);
/// Target future positions as t_f x 2 rows.
ad::Matrix future_matrix(const Scene& scene);

}  // namespace laformer
