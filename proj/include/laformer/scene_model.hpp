#pragma once

// Scene data model and vector representation of agent tracks and lane
// centerlines. All coordinates are meters in a 2D world frame.

#include <Eigen/Core>
#include "json.hpp"

#include <span>
#include <vector>

namespace laformer {

using Vec2 = Eigen::Vector2d;

enum class AgentClass { kTarget, kAutonomousVehicle, kOther };
enum class TurnDirection { kNone, kLeft, kRight };

const char* to_string(AgentClass c);
const char* to_string(TurnDirection t);
AgentClass agent_class_from_string(const std::string& s);
TurnDirection turn_direction_from_string(const std::string& s);

struct TrajectoryVector {
  Vec2 start;
  Vec2 end;
  double timestamp = 0.0;  // time of `end`, seconds relative to step 0
  AgentClass agent_class = AgentClass::kOther;
};

struct LaneAttributes {
  bool has_traffic_control = false;
  TurnDirection turn = TurnDirection::kNone;

  bool operator==(const LaneAttributes&) const = default;
};

struct LaneVector {
  Vec2 start;
  Vec2 end;
  LaneAttributes attrs;
  Vec2 predecessor;  // start point of the previous vector in the segment; own start for the first one
};

struct LaneSegment {
  int segment_id = 0;
  std::vector<LaneVector> vectors;
  std::vector<int> predecessor_ids;
  std::vector<int> successor_ids;
};

/// Positions indexed over steps -t_h+1 ... t_f, i.e. positions[history_steps - 1] is step 0.
struct AgentTrack {
  int agent_id = 0;
  AgentClass agent_class = AgentClass::kOther;
  std::vector<Vec2> positions;
  std::vector<bool> valid;
};

struct Scene {
  int target_id = 0;
  std::vector<AgentTrack> tracks;
  std::vector<LaneSegment> lanes;
  double sampling_period = 0.5;
  int history_steps = 4;  // t_h
  int future_steps = 12;  // t_f
  nlohmann::json metadata = nlohmann::json::object();

  const AgentTrack& target() const;
  /// Index of step 0 inside AgentTrack::positions.
  int current_index() const { return history_steps - 1; }
};

struct NormalizeOptions {
  /// Also rotate so the target's last observed heading points along +x.
  bool rotate_to_heading = false;
};

/// Scene expressed in the target-centered frame plus the transform back to the raw frame.
struct NormalizedScene {
  Scene scene;
  Vec2 origin = Vec2::Zero();
  double rotation = 0.0;  // radians applied after translation (0 unless rotate_to_heading)

  /// Maps a normalized-frame point back to the raw frame.
  Vec2 to_raw(const Vec2& p) const;
};

struct LaneLabel {
  std::vector<int> gt_segment_index;  // position in the scene's lane list, one per future step
};

/// Throws Error(kInvalidScene) unless exactly one target track with a valid step-0 position exists.
void validate_scene(const Scene& scene);

NormalizedScene normalize_scene(const Scene& scene, const NormalizeOptions& options = {});

/// Vectors between consecutive valid observed positions (steps -t_h+1 ... 0).
std::vector<TrajectoryVector> track_to_vectors(const AgentTrack& track, double sampling_period, int history_steps);

/// Splits a centerline into chained segments with ids first_segment_id, first_segment_id + 1, ...
std::vector<LaneSegment> slice_centerline(std::span<const Vec2> polyline, int vectors_per_segment,
                                          int first_segment_id = 0, const LaneAttributes& attrs = {});

/// Keeps segments having any vector endpoint within Manhattan distance radius_m of the origin (inclusive).
NormalizedScene filter_lanes_by_radius(const NormalizedScene& scene, double radius_m = 50.0);

/// Distance from p to the polyline traced by the segment's vectors.
double point_to_segment_distance(const Vec2& p, const LaneSegment& segment);

LaneLabel nearest_lane_labels(std::span<const Vec2> future_positions, std::span<const LaneSegment> lanes);

/// Target future positions (steps 1 ... t_f).
std::vector<Vec2> target_future(const Scene& scene);
/// Target observed positions (steps -t_h+1 ... 0).
std::vector<Vec2> target_history(const Scene& scene);

/// True when every segment's vectors are end-to-start connected and d_pre follows the predecessor rule.
bool chain_connected(const LaneSegment& segment);

/// Adds `offset` to every coordinate of the scene.
Scene translate_scene(const Scene& scene, const Vec2& offset);

}  // namespace laformer
