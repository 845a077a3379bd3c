#pragma once

// Deterministic procedural scenes: lane graphs (straight road, curve, 4-arm
// crossing) and kinematic agents that follow lane centerlines.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "laformer/scene_model.hpp"

namespace laformer::gen {

enum class Topology { kStraight, kCurve, kCrossing };
enum class TurnOption { kLeft, kStraight, kRight };
enum class AccelProfile { kConstant, kAccelerate, kDecelerate };
enum class Maneuver { kKeepLane, kLaneChange, kTurnLeft, kTurnRight };

const char* to_string(Maneuver m);
const char* to_string(Topology t);

struct MapSpec {
  Topology topology = Topology::kCrossing;
  int lane_count_per_approach = 1;
  double lane_width = 3.5;
  /// Curve radius; for crossings, the half-size of the intersection box.
  double arc_radius = 12.0;
  std::set<TurnOption> branch_turn_options{TurnOption::kLeft, TurnOption::kStraight, TurnOption::kRight};
  /// Road length for `straight`, leg length for `curve`, arm length for `crossing`.
  double approach_length = 40.0;
  double point_spacing = 2.0;
  int vectors_per_segment = 10;
};

/// One lane centerline of a generated map and the segments it was sliced into.
struct Centerline {
  int id = 0;
  std::vector<Vec2> points;
  LaneAttributes attrs;
  std::vector<int> successors;  // centerline ids
  std::vector<int> segment_ids;
  // Crossing bookkeeping; -1 when not applicable.
  int arm = -1;
  int lane = 0;
  bool incoming = false;
  bool outgoing = false;
  TurnOption turn = TurnOption::kStraight;
};

struct RoadMap {
  MapSpec spec;
  std::vector<Centerline> centerlines;
  std::vector<LaneSegment> segments;

  const Centerline& centerline(int id) const { return centerlines.at(static_cast<std::size_t>(id)); }
  /// Segments (by position in `segments`) belonging to a centerline.
  std::vector<const LaneSegment*> segments_of(int centerline_id) const;
};

/// Throws Error(kConfig) for invalid or unsupported specs.
RoadMap build_map(const MapSpec& spec);

/// Applies p -> R(theta) p + offset to every map coordinate, then snaps to the coordinate grid.
RoadMap transform_map(const RoadMap& map, double theta, const Vec2& offset);

struct BehaviorScript {
  double nominal_speed = 10.0;
  AccelProfile accel_profile = AccelProfile::kConstant;
  Maneuver maneuver = Maneuver::kKeepLane;
  double noise_std = 0.0;
  // Placement and kinematic limits.
  int start_centerline = 0;     // centerline the agent is on at step 0
  double start_arc = 0.0;       // arc length along start_centerline at step 0
  double acceleration = 1.0;    // magnitude, m/s^2
  double min_speed = 3.0;
  double max_speed = 15.0;
  double lane_change_start = 0.5;   // s after step 0
  double lane_change_window = 3.0;  // s
};

struct TrackLayout {
  int history_steps = 4;
  int future_steps = 12;
  double sampling_period = 0.5;
};

/// Lane-following agent. Throws Error(kGeneration) when the maneuver is not realizable on the map.
AgentTrack simulate_agent(const RoadMap& map, const BehaviorScript& script, const TrackLayout& layout,
                          std::mt19937_64& rng, int agent_id = 0, AgentClass agent_class = AgentClass::kTarget);

/// Centerline ids the agent will traverse starting from the script's start centerline.
std::vector<int> route_for(const RoadMap& map, const BehaviorScript& script);

/// Snaps a coordinate onto the 2^-32 m grid used for every generated coordinate.
double snap(double v);
Vec2 snap(const Vec2& p);

struct GenConfig {
  std::uint64_t seed = 0;
  int n_scenes = 2500;
  double val_fraction = 0.2;
  int history_steps = 4;
  int future_steps = 12;
  double sampling_period = 0.5;
  int min_neighbors = 1;
  int max_neighbors = 3;
  // Map distribution.
  double lane_width_min = 3.2;
  double lane_width_max = 3.8;
  double arc_radius_min = 10.0;
  double arc_radius_max = 16.0;
  double approach_length = 40.0;
  double point_spacing = 2.0;
  int vectors_per_segment = 10;
  double world_extent = 200.0;  // raw-frame offsets drawn from [-extent, extent]
  // Target behavior mix.
  double p_straight = 0.4;
  double p_left = 0.3;
  double p_right = 0.3;
  double noise_std_max = 0.1;
  double neighbor_history_dropout = 0.2;  // probability of masking a neighbor's earliest step

  /// Throws Error(kConfig).
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are a config error; missing keys keep defaults.
  static GenConfig from_json(const nlohmann::json& j);
};

/// Independent RNG stream for (seed, scene_index, role).
std::mt19937_64 derive_stream(std::uint64_t seed, std::uint64_t scene_index, std::uint64_t role);

/// Scene i of the dataset; a pure function of (config, i).
Scene generate_scene(const GenConfig& config, int scene_index);

struct DatasetSummary {
  int n_train = 0;
  int n_val = 0;
  std::map<std::string, int> maneuver_counts;
};

/// Writes scenes.jsonl, train.txt, val.txt and generation_log.json into out_dir.
DatasetSummary generate_dataset(const GenConfig& config, const std::filesystem::path& out_dir);

}  // namespace laformer::gen
