#include "laformer/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "laformer/errors.hpp"

namespace laformer {

const char* to_string(AgentClass c) {
  switch (c) {
    case AgentClass::kTarget: return "target";
    case AgentClass::kAutonomousVehicle: return "autonomous_vehicle";
    case AgentClass::kOther: return "other";
  }
  return "other";
}

const char* to_string(TurnDirection t) {
  switch (t) {
    case TurnDirection::kNone: return "none";
    case TurnDirection::kLeft: return "left";
    case TurnDirection::kRight: return "right";
  }
  return "none";
}

AgentClass agent_class_from_string(const std::string& s) {
  if (s == "target") return AgentClass::kTarget;
  if (s == "autonomous_vehicle") return AgentClass::kAutonomousVehicle;
  if (s == "other") return AgentClass::kOther;
  throw Error(ErrorKind::kData, "unknown agent_class '" + s + "'");
}

TurnDirection turn_direction_from_string(const std::string& s) {
  if (s == "none") return TurnDirection::kNone;
  if (s == "left") return TurnDirection::kLeft;
  if (s == "right") return TurnDirection::kRight;
  throw Error(ErrorKind::kData, "unknown turn direction '" + s + "'");
}

const AgentTrack& Scene::target() const {
  for (const auto& t : tracks)
    if (t.agent_id == target_id) return t;
  throw Error(ErrorKind::kInvalidScene, "target_id " + std::to_string(target_id) + " has no track");
}

Vec2 NormalizedScene::to_raw(const Vec2& p) const {
  if (rotation == 0.0) return p + origin;
  const double c = std::cos(rotation), s = std::sin(rotation);
  // Inverse of R(rotation) applied in normalize_scene.
  return Vec2(c * p.x() - s * p.y(), s * p.x() + c * p.y()) + origin;
}

void validate_scene(const Scene& scene) {
  if (scene.history_steps < 2 || scene.future_steps < 0)
    throw Error(ErrorKind::kInvalidScene, "scene horizons must satisfy t_h >= 2");
  int n_target = 0;
  const std::size_t horizon = static_cast<std::size_t>(scene.history_steps + scene.future_steps);
  for (const auto& t : scene.tracks) {
    if (t.positions.size() != horizon || t.valid.size() != horizon)
      throw Error(ErrorKind::kInvalidScene, "track " + std::to_string(t.agent_id) + " has wrong length");
    if (t.agent_class == AgentClass::kTarget) {
      ++n_target;
      if (t.agent_id != scene.target_id)
        throw Error(ErrorKind::kInvalidScene, "target-class track does not match target_id");
    }
  }
  if (n_target != 1) throw Error(ErrorKind::kInvalidScene, "scene must contain exactly one target track");
  const AgentTrack& target = scene.target();
  if (!target.valid[static_cast<std::size_t>(scene.current_index())])
    throw Error(ErrorKind::kInvalidScene, "target has no valid step-0 position");
}

namespace {

template <typename F>
Scene map_coordinates(const Scene& scene, F&& f) {
  Scene out = scene;
  for (auto& t : out.tracks)
    for (auto& p : t.positions) p = f(p);
  for (auto& seg : out.lanes)
    for (auto& v : seg.vectors) {
      v.start = f(v.start);
      v.end = f(v.end);
      v.predecessor = f(v.predecessor);
    }
  return out;
}

}  // namespace

NormalizedScene normalize_scene(const Scene& scene, const NormalizeOptions& options) {
  validate_scene(scene);
  const AgentTrack& target = scene.target();
  const std::size_t now = static_cast<std::size_t>(scene.current_index());
  NormalizedScene out;
  out.origin = target.positions[now];
  const Vec2 origin = out.origin;
  if (!options.rotate_to_heading) {
    out.scene = map_coordinates(scene, [&](const Vec2& p) -> Vec2 { return p - origin; });
    return out;
  }
  double heading = 0.0;
  if (now >= 1 && target.valid[now - 1]) {
    const Vec2 d = target.positions[now] - target.positions[now - 1];
    if (d.norm() > 0.0) heading = std::atan2(d.y(), d.x());
  }
  out.rotation = heading;
  const double c = std::cos(heading), s = std::sin(heading);
  out.scene = map_coordinates(scene, [&](const Vec2& p) -> Vec2 {
    const Vec2 q = p - origin;
    return Vec2(c * q.x() + s * q.y(), -s * q.x() + c * q.y());
  });
  return out;
}

std::vector<TrajectoryVector> track_to_vectors(const AgentTrack& track, double sampling_period, int history_steps) {
  std::vector<TrajectoryVector> out;
  const int n = std::min<int>(history_steps, static_cast<int>(track.positions.size()));
  for (int i = 1; i < n; ++i) {
    if (!track.valid[static_cast<std::size_t>(i)] || !track.valid[static_cast<std::size_t>(i - 1)]) continue;
    TrajectoryVector v;
    v.start = track.positions[static_cast<std::size_t>(i - 1)];
    v.end = track.positions[static_cast<std::size_t>(i)];
    v.timestamp = static_cast<double>(i - (history_steps - 1)) * sampling_period;
    v.agent_class = track.agent_class;
    out.push_back(v);
  }
  if (out.empty())
    throw Error(ErrorKind::kEmptyTrack,
                "track " + std::to_string(track.agent_id) + " has fewer than 2 consecutive valid observed positions");
  return out;
}

std::vector<LaneSegment> slice_centerline(std::span<const Vec2> polyline, int vectors_per_segment,
                                          int first_segment_id, const LaneAttributes& attrs) {
  if (polyline.size() < 2) throw Error(ErrorKind::kDegenerateLane, "centerline needs at least 2 points");
  if (vectors_per_segment < 1) throw Error(ErrorKind::kConfig, "vectors_per_segment must be >= 1");
  std::vector<LaneSegment> segments;
  const std::size_t n_vectors = polyline.size() - 1;
  for (std::size_t first = 0; first < n_vectors; first += static_cast<std::size_t>(vectors_per_segment)) {
    LaneSegment seg;
    seg.segment_id = first_segment_id + static_cast<int>(segments.size());
    const std::size_t last = std::min(n_vectors, first + static_cast<std::size_t>(vectors_per_segment));
    for (std::size_t k = first; k < last; ++k) {
      LaneVector v;
      v.start = polyline[k];
      v.end = polyline[k + 1];
      v.attrs = attrs;
      v.predecessor = (k == first) ? polyline[k] : polyline[k - 1];
      seg.vectors.push_back(v);
    }
    segments.push_back(std::move(seg));
  }
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i > 0) segments[i].predecessor_ids.push_back(segments[i - 1].segment_id);
    if (i + 1 < segments.size()) segments[i].successor_ids.push_back(segments[i + 1].segment_id);
  }
  return segments;
}

NormalizedScene filter_lanes_by_radius(const NormalizedScene& scene, double radius_m) {
  NormalizedScene out = scene;
  out.scene.lanes.clear();
  auto within = [radius_m](const Vec2& p) { return std::abs(p.x()) + std::abs(p.y()) <= radius_m; };
  for (const auto& seg : scene.scene.lanes) {
    const bool keep = std::any_of(seg.vectors.begin(), seg.vectors.end(),
                                  [&](const LaneVector& v) { return within(v.start) || within(v.end); });
    if (keep) out.scene.lanes.push_back(seg);
  }
  return out;
}

double point_to_segment_distance(const Vec2& p, const LaneSegment& segment) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : segment.vectors) {
    const Vec2 d = v.end - v.start;
    const double len2 = d.squaredNorm();
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp((p - v.start).dot(d) / len2, 0.0, 1.0);
    best = std::min(best, (v.start + t * d - p).norm());
  }
  return best;
}

LaneLabel nearest_lane_labels(std::span<const Vec2> future_positions, std::span<const LaneSegment> lanes) {
  if (lanes.empty()) throw Error(ErrorKind::kNoLanes, "cannot label future positions without lanes");
  LaneLabel label;
  label.gt_segment_index.reserve(future_positions.size());
  for (const Vec2& p : future_positions) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < lanes.size(); ++j) {
      const double d = point_to_segment_distance(p, lanes[j]);
      const bool better = d < best_d || (d == best_d && lanes[j].segment_id < lanes[static_cast<std::size_t>(best)].segment_id);
      if (best < 0 || better) {
        best = static_cast<int>(j);
        best_d = d;
      }
    }
    label.gt_segment_index.push_back(best);
  }
  return label;
}

std::vector<Vec2> target_future(const Scene& scene) {
  const AgentTrack& t = scene.target();
  const auto begin = t.positions.begin() + scene.history_steps;
  return {begin, begin + scene.future_steps};
}

std::vector<Vec2> target_history(const Scene& scene) {
  const AgentTrack& t = scene.target();
  return {t.positions.begin(), t.positions.begin() + scene.history_steps};
}

bool chain_connected(const LaneSegment& segment) {
  if (segment.vectors.empty()) return false;
  if (segment.vectors.front().predecessor != segment.vectors.front().start) return false;
  for (std::size_t n = 1; n < segment.vectors.size(); ++n) {
    if (segment.vectors[n].start != segment.vectors[n - 1].end) return false;
    if (segment.vectors[n].predecessor != segment.vectors[n - 1].start) return false;
  }
  return true;
}

Scene translate_scene(const Scene& scene, const Vec2& offset) {
  return map_coordinates(scene, [&](const Vec2& p) -> Vec2 { return p + offset; });
}

}  // namespace laformer
