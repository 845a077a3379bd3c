#include "laformer/scenario_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "laformer/errors.hpp"
#include "laformer/scene_io.hpp"

namespace laformer::gen {

using nlohmann::json;

const char* to_string(Maneuver m) {
  switch (m) {
    case Maneuver::kKeepLane: return "keep_lane";
    case Maneuver::kLaneChange: return "lane_change";
    case Maneuver::kTurnLeft: return "turn_left";
    case Maneuver::kTurnRight: return "turn_right";
  }
  return "keep_lane";
}

const char* to_string(Topology t) {
  switch (t) {
    case Topology::kStraight: return "straight";
    case Topology::kCurve: return "curve";
    case Topology::kCrossing: return "crossing";
  }
  return "crossing";
}

double snap(double v) { return std::ldexp(std::nearbyint(std::ldexp(v, 32)), -32); }
Vec2 snap(const Vec2& p) { return Vec2(snap(p.x()), snap(p.y())); }

std::vector<const LaneSegment*> RoadMap::segments_of(int centerline_id) const {
  std::vector<const LaneSegment*> out;
  for (int sid : centerline(centerline_id).segment_ids)
    for (const auto& s : segments)
      if (s.segment_id == sid) out.push_back(&s);
  return out;
}

namespace {

Vec2 rotate(const Vec2& p, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return Vec2(c * p.x() - s * p.y(), s * p.x() + c * p.y());
}

int vector_count(double length, double spacing) {
  return std::max(1, static_cast<int>(std::lround(length / spacing)));
}

std::vector<Vec2> line(const Vec2& a, const Vec2& b, double spacing) {
  const int n = vector_count((b - a).norm(), spacing);
  std::vector<Vec2> pts;
  for (int k = 0; k <= n; ++k) pts.push_back(a + (b - a) * (static_cast<double>(k) / n));
  return pts;
}

/// Arc around `center` from angle a0 to a1 (radians, signed sweep).
std::vector<Vec2> arc(const Vec2& center, double radius, double a0, double a1, double spacing) {
  const int n = vector_count(std::abs(a1 - a0) * radius, spacing);
  std::vector<Vec2> pts;
  for (int k = 0; k <= n; ++k) {
    const double a = a0 + (a1 - a0) * (static_cast<double>(k) / n);
    pts.push_back(center + radius * Vec2(std::cos(a), std::sin(a)));
  }
  return pts;
}

void append(std::vector<Vec2>& dst, const std::vector<Vec2>& src) {
  for (std::size_t k = (dst.empty() ? 0 : 1); k < src.size(); ++k) dst.push_back(src[k]);
}

int add_centerline(RoadMap& map, std::vector<Vec2> points, LaneAttributes attrs) {
  Centerline c;
  c.id = static_cast<int>(map.centerlines.size());
  c.points = std::move(points);
  c.attrs = attrs;
  map.centerlines.push_back(std::move(c));
  return map.centerlines.back().id;
}

void slice_all(RoadMap& map) {
  map.segments.clear();
  int next_id = 0;
  for (auto& c : map.centerlines) {
    auto segs = slice_centerline(c.points, map.spec.vectors_per_segment, next_id, c.attrs);
    c.segment_ids.clear();
    for (auto& s : segs) {
      c.segment_ids.push_back(s.segment_id);
      map.segments.push_back(std::move(s));
    }
    next_id += static_cast<int>(segs.size());
  }
  auto seg_index = [&](int sid) -> LaneSegment& { return map.segments[static_cast<std::size_t>(sid)]; };
  for (const auto& c : map.centerlines)
    for (int succ : c.successors) {
      const int from = c.segment_ids.back();
      const int to = map.centerline(succ).segment_ids.front();
      seg_index(from).successor_ids.push_back(to);
      seg_index(to).predecessor_ids.push_back(from);
    }
}

void check_spec(const MapSpec& spec) {
  if (spec.lane_count_per_approach < 1) throw Error(ErrorKind::kConfig, "lane_count_per_approach must be >= 1");
  if (!(spec.lane_width > 0.0)) throw Error(ErrorKind::kConfig, "lane_width must be positive");
  if (!(spec.arc_radius > spec.lane_width)) throw Error(ErrorKind::kConfig, "arc_radius must exceed lane_width");
  if (!(spec.point_spacing > 0.0) || !(spec.approach_length > 0.0))
    throw Error(ErrorKind::kConfig, "point_spacing and approach_length must be positive");
  if (spec.vectors_per_segment < 1) throw Error(ErrorKind::kConfig, "vectors_per_segment must be >= 1");
}

RoadMap build_parallel(const MapSpec& spec) {
  RoadMap map;
  map.spec = spec;
  const double w = spec.lane_width;
  for (int i = 0; i < spec.lane_count_per_approach; ++i) {
    const double off = i * w;  // lane i sits i lane widths to the left of lane 0
    std::vector<Vec2> pts;
    if (spec.topology == Topology::kStraight) {
      pts = line(Vec2(0.0, off), Vec2(spec.approach_length, off), spec.point_spacing);
    } else {
      // Leg along +x, left-hand quarter turn, leg along +y.
      const double r = spec.arc_radius - off;
      if (!(r > 0.0)) throw Error(ErrorKind::kConfig, "arc_radius too small for the lane count");
      const double L = spec.approach_length;
      const Vec2 center(L, spec.arc_radius);
      append(pts, line(Vec2(0.0, off), Vec2(L, off), spec.point_spacing));
      append(pts, arc(center, r, -std::numbers::pi / 2, 0.0, spec.point_spacing));
      append(pts, line(Vec2(L + r, spec.arc_radius), Vec2(L + r, spec.arc_radius + L), spec.point_spacing));
    }
    const int id = add_centerline(map, std::move(pts), LaneAttributes{});
    map.centerlines[static_cast<std::size_t>(id)].lane = i;
  }
  slice_all(map);
  return map;
}

RoadMap build_crossing(const MapSpec& spec) {
  RoadMap map;
  map.spec = spec;
  const double w = spec.lane_width;
  const double R0 = spec.arc_radius;
  const double L = spec.approach_length;
  const int lanes = spec.lane_count_per_approach;
  if (!(R0 > lanes * w)) throw Error(ErrorKind::kConfig, "arc_radius must exceed the total lane width of an arm");
  const double sp = spec.point_spacing;

  // In arm a's frame incoming traffic drives along +y toward the box edge y = -R0.
  std::vector<std::vector<int>> incoming(4), outgoing(4);
  for (int a = 0; a < 4; ++a) {
    const double th = a * std::numbers::pi / 2;
    for (int i = 0; i < lanes; ++i) {
      const double x = w / 2 + i * w;
      LaneAttributes in_attrs{true, TurnDirection::kNone};
      std::vector<Vec2> in_pts, out_pts;
      for (const auto& p : line(Vec2(x, -R0 - L), Vec2(x, -R0), sp)) in_pts.push_back(rotate(p, th));
      for (const auto& p : line(Vec2(-x, -R0), Vec2(-x, -R0 - L), sp)) out_pts.push_back(rotate(p, th));
      const int in_id = add_centerline(map, std::move(in_pts), in_attrs);
      const int out_id = add_centerline(map, std::move(out_pts), LaneAttributes{});
      auto& cin = map.centerlines[static_cast<std::size_t>(in_id)];
      cin.arm = a;
      cin.lane = i;
      cin.incoming = true;
      auto& cout = map.centerlines[static_cast<std::size_t>(out_id)];
      cout.arm = a;
      cout.lane = i;
      cout.outgoing = true;
      incoming[static_cast<std::size_t>(a)].push_back(in_id);
      outgoing[static_cast<std::size_t>(a)].push_back(out_id);
    }
  }
  auto allowed = [&](int lane, TurnOption t) {
    if (!spec.branch_turn_options.count(t)) return false;
    if (lanes == 1) return true;
    if (t == TurnOption::kStraight) return true;
    if (t == TurnOption::kLeft) return lane == 0;
    return lane == lanes - 1;
  };
  for (int a = 0; a < 4; ++a) {
    const double th = a * std::numbers::pi / 2;
    for (int i = 0; i < lanes; ++i) {
      const double x = w / 2 + i * w;
      const int in_id = incoming[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)];
      for (TurnOption t : {TurnOption::kLeft, TurnOption::kStraight, TurnOption::kRight}) {
        if (!allowed(i, t)) continue;
        std::vector<Vec2> local;
        int target_arm = a;
        LaneAttributes attrs;
        switch (t) {
          case TurnOption::kStraight:
            local = line(Vec2(x, -R0), Vec2(x, R0), sp);
            target_arm = (a + 2) % 4;
            break;
          case TurnOption::kRight:
            local = arc(Vec2(R0, -R0), R0 - x, std::numbers::pi, std::numbers::pi / 2, sp);
            target_arm = (a + 1) % 4;
            attrs.turn = TurnDirection::kRight;
            break;
          case TurnOption::kLeft:
            local = arc(Vec2(-R0, -R0), R0 + x, 0.0, std::numbers::pi / 2, sp);
            target_arm = (a + 3) % 4;
            attrs.turn = TurnDirection::kLeft;
            break;
        }
        std::vector<Vec2> pts;
        for (const auto& p : local) pts.push_back(rotate(p, th));
        const int cid = add_centerline(map, std::move(pts), attrs);
        auto& c = map.centerlines[static_cast<std::size_t>(cid)];
        c.arm = a;
        c.lane = i;
        c.turn = t;
        const int out_id = outgoing[static_cast<std::size_t>(target_arm)][static_cast<std::size_t>(i)];
        c.successors.push_back(out_id);
        map.centerlines[static_cast<std::size_t>(in_id)].successors.push_back(cid);
      }
    }
  }
  // Connector endpoints coincide with arm endpoints analytically; make them bit-identical.
  for (auto& c : map.centerlines) {
    if (c.incoming || c.outgoing) continue;
    const auto& in = map.centerlines[static_cast<std::size_t>(
        incoming[static_cast<std::size_t>(c.arm)][static_cast<std::size_t>(c.lane)])];
    c.points.front() = in.points.back();
    c.points.back() = map.centerline(c.successors.front()).points.front();
  }
  slice_all(map);
  return map;
}

}  // namespace

RoadMap build_map(const MapSpec& spec) {
  check_spec(spec);
  if (spec.topology == Topology::kCrossing) {
    if (spec.branch_turn_options.empty()) throw Error(ErrorKind::kConfig, "crossing needs at least one turn option");
    return build_crossing(spec);
  }
  return build_parallel(spec);
}

RoadMap transform_map(const RoadMap& map, double theta, const Vec2& offset) {
  RoadMap out = map;
  for (auto& c : out.centerlines)
    for (auto& p : c.points) p = snap(Vec2(rotate(p, theta) + offset));
  slice_all(out);
  return out;
}

std::vector<int> route_for(const RoadMap& map, const BehaviorScript& script) {
  if (script.start_centerline < 0 || script.start_centerline >= static_cast<int>(map.centerlines.size()))
    throw Error(ErrorKind::kGeneration, "start centerline out of range");
  const Centerline& start = map.centerline(script.start_centerline);
  const bool turn = script.maneuver == Maneuver::kTurnLeft || script.maneuver == Maneuver::kTurnRight;
  if (map.spec.topology != Topology::kCrossing) {
    if (turn) throw Error(ErrorKind::kGeneration, "turn maneuvers need a crossing map");
    return {start.id};
  }
  if (script.maneuver == Maneuver::kLaneChange)
    throw Error(ErrorKind::kGeneration, "lane_change is only realizable on straight or curve maps");
  std::vector<int> route{start.id};
  int cur = start.id;
  while (!map.centerline(cur).successors.empty()) {
    const Centerline& c = map.centerline(cur);
    int next = -1;
    if (c.incoming) {
      const TurnOption want = script.maneuver == Maneuver::kTurnLeft    ? TurnOption::kLeft
                              : script.maneuver == Maneuver::kTurnRight ? TurnOption::kRight
                                                                        : TurnOption::kStraight;
      for (int s : c.successors)
        if (map.centerline(s).turn == want) next = s;
      if (next < 0)
        throw Error(ErrorKind::kGeneration, std::string("maneuver ") + to_string(script.maneuver) +
                                                " not available from centerline " + std::to_string(cur));
    } else {
      next = c.successors.front();
    }
    route.push_back(next);
    cur = next;
  }
  if (turn && route.size() == 1)
    throw Error(ErrorKind::kGeneration, "turn maneuver requested on a lane without a crossing ahead");
  return route;
}

namespace {

/// Arc-length parameterized polyline with linear extrapolation past both ends.
class Path {
 public:
  explicit Path(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    cum_.push_back(0.0);
    for (std::size_t k = 1; k < pts_.size(); ++k) cum_.push_back(cum_.back() + (pts_[k] - pts_[k - 1]).norm());
  }

  double length() const { return cum_.back(); }

  /// Point and unit tangent at arc length s.
  std::pair<Vec2, Vec2> at(double s) const {
    std::size_t k = 0;
    if (s <= 0.0) {
      k = 0;
    } else if (s >= length()) {
      k = pts_.size() - 2;
    } else {
      k = static_cast<std::size_t>(std::upper_bound(cum_.begin(), cum_.end(), s) - cum_.begin()) - 1;
      k = std::min(k, pts_.size() - 2);
    }
    const Vec2 d = pts_[k + 1] - pts_[k];
    const double len = cum_[k + 1] - cum_[k];
    const Vec2 tangent = d / len;
    return {pts_[k] + tangent * (s - cum_[k]), tangent};
  }

 private:
  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

/// Signed arc length travelled between time 0 and t under a clamped constant acceleration.
double travelled(const BehaviorScript& b, double t) {
  double a = 0.0;
  if (b.accel_profile == AccelProfile::kAccelerate) a = b.acceleration;
  if (b.accel_profile == AccelProfile::kDecelerate) a = -b.acceleration;
  const double v0 = b.nominal_speed;
  if (a == 0.0) return v0 * t;
  if (t >= 0.0) {
    const double v_lim = a > 0 ? b.max_speed : b.min_speed;
    const double t_sw = std::max(0.0, (v_lim - v0) / a);
    if (t <= t_sw) return v0 * t + 0.5 * a * t * t;
    return v0 * t_sw + 0.5 * a * t_sw * t_sw + v_lim * (t - t_sw);
  }
  // Going back in time the speed changes with the opposite sign.
  const double tau = -t;
  const double v_lim = a > 0 ? b.min_speed : b.max_speed;
  const double t_sw = std::max(0.0, (v0 - v_lim) / a);
  if (tau <= t_sw) return -(v0 * tau - 0.5 * a * tau * tau);
  return -(v0 * t_sw - 0.5 * a * t_sw * t_sw + v_lim * (tau - t_sw));
}

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

}  // namespace

AgentTrack simulate_agent(const RoadMap& map, const BehaviorScript& script, const TrackLayout& layout,
                          std::mt19937_64& rng, int agent_id, AgentClass agent_class) {
  if (!(script.nominal_speed > 0.0)) throw Error(ErrorKind::kGeneration, "nominal_speed must be positive");
  if (script.noise_std < 0.0) throw Error(ErrorKind::kGeneration, "noise_std must be non-negative");
  const std::vector<int> route = route_for(map, script);
  std::vector<Vec2> pts;
  for (int cid : route) append(pts, map.centerline(cid).points);
  const Path path(std::move(pts));

  double lateral_target = 0.0;
  if (script.maneuver == Maneuver::kLaneChange) {
    const Centerline& c = map.centerline(script.start_centerline);
    const int n_lanes = map.spec.lane_count_per_approach;
    if (n_lanes < 2) throw Error(ErrorKind::kGeneration, "lane_change needs an adjacent lane");
    // Lane i+1 lies one lane width along the left normal of lane i.
    lateral_target = (c.lane + 1 < n_lanes ? 1.0 : -1.0) * map.spec.lane_width;
  }

  AgentTrack track;
  track.agent_id = agent_id;
  track.agent_class = agent_class;
  std::normal_distribution<double> noise(0.0, 1.0);
  const int first = -layout.history_steps + 1;
  for (int k = first; k <= layout.future_steps; ++k) {
    const double t = k * layout.sampling_period;
    const auto [p, tangent] = path.at(script.start_arc + travelled(script, t));
    const Vec2 left(-tangent.y(), tangent.x());
    double lateral = 0.0;
    if (lateral_target != 0.0)
      lateral = lateral_target * smoothstep((t - script.lane_change_start) / script.lane_change_window);
    const double eps = noise(rng);
    if (script.noise_std > 0.0) lateral += script.noise_std * eps;
    track.positions.push_back(snap(Vec2(lateral == 0.0 ? p : Vec2(p + left * lateral))));
    track.valid.push_back(true);
  }
  return track;
}

void GenConfig::validate() const {
  if (n_scenes < 1) throw Error(ErrorKind::kConfig, "n_scenes must be >= 1");
  if (history_steps < 2) throw Error(ErrorKind::kConfig, "t_h must be >= 2");
  if (future_steps < 1) throw Error(ErrorKind::kConfig, "t_f must be >= 1");
  if (!(sampling_period > 0.0)) throw Error(ErrorKind::kConfig, "sampling_period must be positive");
  if (min_neighbors < 0 || max_neighbors < min_neighbors) throw Error(ErrorKind::kConfig, "invalid neighbor range");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw Error(ErrorKind::kConfig, "val_fraction must be in [0, 1)");
  if (lane_width_min > lane_width_max || arc_radius_min > arc_radius_max)
    throw Error(ErrorKind::kConfig, "min/max ranges are inverted");
  if (!(arc_radius_min > lane_width_max)) throw Error(ErrorKind::kConfig, "arc_radius_min must exceed lane_width_max");
  if (p_straight < 0 || p_left < 0 || p_right < 0 || p_straight + p_left + p_right <= 0)
    throw Error(ErrorKind::kConfig, "maneuver probabilities must be non-negative with a positive sum");
  if (noise_std_max < 0) throw Error(ErrorKind::kConfig, "noise_std_max must be non-negative");
}

json GenConfig::to_json() const {
  return json{{"seed", seed},
              {"n_scenes", n_scenes},
              {"val_fraction", val_fraction},
              {"t_h", history_steps},
              {"t_f", future_steps},
              {"sampling_period", sampling_period},
              {"min_neighbors", min_neighbors},
              {"max_neighbors", max_neighbors},
              {"lane_width_min", lane_width_min},
              {"lane_width_max", lane_width_max},
              {"arc_radius_min", arc_radius_min},
              {"arc_radius_max", arc_radius_max},
              {"approach_length", approach_length},
              {"point_spacing", point_spacing},
              {"vectors_per_segment", vectors_per_segment},
              {"world_extent", world_extent},
              {"p_straight", p_straight},
              {"p_left", p_left},
              {"p_right", p_right},
              {"noise_std_max", noise_std_max},
              {"neighbor_history_dropout", neighbor_history_dropout}};
}

GenConfig GenConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "generation config must be a key-value object");
  GenConfig c;
  const json defaults = c.to_json();
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key)) throw Error(ErrorKind::kConfig, "unknown generation config key '" + key + "'");
  try {
    c.seed = j.value("seed", c.seed);
    c.n_scenes = j.value("n_scenes", c.n_scenes);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.history_steps = j.value("t_h", c.history_steps);
    c.future_steps = j.value("t_f", c.future_steps);
    c.sampling_period = j.value("sampling_period", c.sampling_period);
    c.min_neighbors = j.value("min_neighbors", c.min_neighbors);
    c.max_neighbors = j.value("max_neighbors", c.max_neighbors);
    c.lane_width_min = j.value("lane_width_min", c.lane_width_min);
    c.lane_width_max = j.value("lane_width_max", c.lane_width_max);
    c.arc_radius_min = j.value("arc_radius_min", c.arc_radius_min);
    c.arc_radius_max = j.value("arc_radius_max", c.arc_radius_max);
    c.approach_length = j.value("approach_length", c.approach_length);
    c.point_spacing = j.value("point_spacing", c.point_spacing);
    c.vectors_per_segment = j.value("vectors_per_segment", c.vectors_per_segment);
    c.world_extent = j.value("world_extent", c.world_extent);
    c.p_straight = j.value("p_straight", c.p_straight);
    c.p_left = j.value("p_left", c.p_left);
    c.p_right = j.value("p_right", c.p_right);
    c.noise_std_max = j.value("noise_std_max", c.noise_std_max);
    c.neighbor_history_dropout = j.value("neighbor_history_dropout", c.neighbor_history_dropout);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad generation config value: ") + e.what());
  }
  c.validate();
  return c;
}

std::mt19937_64 derive_stream(std::uint64_t seed, std::uint64_t scene_index, std::uint64_t role) {
  // splitmix64 finalizer over the combined key.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  const std::uint64_t h = mix(mix(mix(seed) ^ scene_index) ^ role);
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

namespace {

enum StreamRole : std::uint64_t { kMapStream = 1, kTargetStream = 2, kNeighborStream = 3 };

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Maneuver draw_maneuver(std::mt19937_64& rng, double ps, double pl, double pr) {
  const double u = uniform(rng, 0.0, ps + pl + pr);
  if (u < ps) return Maneuver::kKeepLane;
  if (u < ps + pl) return Maneuver::kTurnLeft;
  return Maneuver::kTurnRight;
}

BehaviorScript draw_script(std::mt19937_64& rng, Maneuver m, double noise_max) {
  BehaviorScript b;
  b.maneuver = m;
  if (m == Maneuver::kKeepLane) {
    b.nominal_speed = uniform(rng, 7.0, 12.0);
    b.accel_profile = uniform(rng, 0.0, 1.0) < 0.5 ? AccelProfile::kConstant : AccelProfile::kAccelerate;
  } else {
    b.nominal_speed = uniform(rng, 6.0, 10.0);
    b.accel_profile = AccelProfile::kDecelerate;
  }
  b.acceleration = uniform(rng, 0.5, 1.5);
  b.min_speed = 3.0;
  b.max_speed = 15.0;
  b.noise_std = uniform(rng, 0.0, noise_max);
  return b;
}

int incoming_centerline(const RoadMap& map, int arm) {
  for (const auto& c : map.centerlines)
    if (c.incoming && c.arm == arm) return c.id;
  throw Error(ErrorKind::kGeneration, "arm without incoming lane");
}

}  // namespace

Scene generate_scene(const GenConfig& config, int scene_index) {
  auto map_rng = derive_stream(config.seed, static_cast<std::uint64_t>(scene_index), kMapStream);
  MapSpec spec;
  spec.topology = Topology::kCrossing;
  spec.lane_width = uniform(map_rng, config.lane_width_min, config.lane_width_max);
  spec.arc_radius = uniform(map_rng, config.arc_radius_min, config.arc_radius_max);
  spec.approach_length = config.approach_length;
  spec.point_spacing = config.point_spacing;
  spec.vectors_per_segment = config.vectors_per_segment;
  const double theta = uniform(map_rng, -std::numbers::pi, std::numbers::pi);
  const Vec2 offset(uniform(map_rng, -config.world_extent, config.world_extent),
                    uniform(map_rng, -config.world_extent, config.world_extent));
  const RoadMap map = transform_map(build_map(spec), theta, offset);

  const TrackLayout layout{config.history_steps, config.future_steps, config.sampling_period};
  Scene scene;
  scene.sampling_period = config.sampling_period;
  scene.history_steps = config.history_steps;
  scene.future_steps = config.future_steps;
  scene.target_id = 0;

  auto target_rng = derive_stream(config.seed, static_cast<std::uint64_t>(scene_index), kTargetStream);
  const int target_arm = uniform_int(target_rng, 0, 3);
  const Maneuver maneuver = draw_maneuver(target_rng, config.p_straight, config.p_left, config.p_right);
  BehaviorScript script = draw_script(target_rng, maneuver, config.noise_std_max);
  script.start_centerline = incoming_centerline(map, target_arm);
  const double lane_len = map.centerline(script.start_centerline).points.size() > 1
                              ? config.approach_length
                              : 0.0;
  script.start_arc = lane_len - uniform(target_rng, 2.0, 25.0);
  scene.tracks.push_back(simulate_agent(map, script, layout, target_rng, 0, AgentClass::kTarget));

  auto nb_rng = derive_stream(config.seed, static_cast<std::uint64_t>(scene_index), kNeighborStream);
  const int n_neighbors = uniform_int(nb_rng, config.min_neighbors, config.max_neighbors);
  for (int n = 0; n < n_neighbors; ++n) {
    const int arm = (target_arm + uniform_int(nb_rng, 1, 3)) % 4;
    const Maneuver m = draw_maneuver(nb_rng, 1.0, 1.0, 1.0);
    BehaviorScript b = draw_script(nb_rng, m, config.noise_std_max);
    b.start_centerline = incoming_centerline(map, arm);
    b.start_arc = config.approach_length - uniform(nb_rng, 0.0, 30.0);
    AgentTrack t = simulate_agent(map, b, layout, nb_rng, n + 1,
                                  n == 0 ? AgentClass::kAutonomousVehicle : AgentClass::kOther);
    if (uniform(nb_rng, 0.0, 1.0) < config.neighbor_history_dropout) t.valid[0] = false;
    scene.tracks.push_back(std::move(t));
  }
  scene.lanes = map.segments;
  scene.metadata = json{{"scene_index", scene_index},
                        {"maneuver", to_string(maneuver)},
                        {"arm", target_arm},
                        {"lane_width", spec.lane_width},
                        {"arc_radius", spec.arc_radius},
                        {"theta", theta},
                        {"generator_seed", config.seed}};
  return scene;
}

DatasetSummary generate_dataset(const GenConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  std::ofstream scenes(out_dir / "scenes.jsonl", std::ios::binary);
  std::ofstream train(out_dir / "train.txt", std::ios::binary);
  std::ofstream val(out_dir / "val.txt", std::ios::binary);
  if (!scenes || !train || !val) throw Error(ErrorKind::kIo, "cannot write dataset files in " + out_dir.string());

  DatasetSummary summary;
  const int n_val = static_cast<int>(std::lround(config.n_scenes * config.val_fraction));
  const int n_train = config.n_scenes - n_val;
  for (int i = 0; i < config.n_scenes; ++i) {
    const Scene s = generate_scene(config, i);
    scenes << scene_to_line(s);
    (i < n_train ? train : val) << i << '\n';
    summary.maneuver_counts[s.metadata.at("maneuver").get<std::string>()] += 1;
  }
  summary.n_train = n_train;
  summary.n_val = n_val;

  json log{{"config", config.to_json()},
           {"n_train", n_train},
           {"n_val", n_val},
           {"maneuver_counts", summary.maneuver_counts}};
  std::ofstream log_file(out_dir / "generation_log.json", std::ios::binary);
  log_file << log.dump(2) << '\n';
  if (!scenes || !train || !val || !log_file) throw Error(ErrorKind::kIo, "write failed in " + out_dir.string());
  return summary;
}

}  // namespace laformer::gen
