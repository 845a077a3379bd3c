#include "laformer/scene_io.hpp"

#include <fstream>
#include <sstream>

#include "laformer/errors.hpp"

namespace laformer {

using nlohmann::json;

namespace {

json point(const Vec2& p) { return json::array({p.x(), p.y()}); }

Vec2 point_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::kData, "expected a [x, y] pair");
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

}  // namespace

json scene_to_json(const Scene& scene) {
  json j;
  j["schema"] = kSceneSchema;
  j["target_id"] = scene.target_id;
  j["sampling_period"] = scene.sampling_period;
  j["t_h"] = scene.history_steps;
  j["t_f"] = scene.future_steps;
  json tracks = json::array();
  for (const auto& t : scene.tracks) {
    json jt;
    jt["agent_id"] = t.agent_id;
    jt["agent_class"] = to_string(t.agent_class);
    json pos = json::array();
    for (const auto& p : t.positions) pos.push_back(point(p));
    jt["positions"] = std::move(pos);
    jt["valid"] = t.valid;
    tracks.push_back(std::move(jt));
  }
  j["tracks"] = std::move(tracks);
  json lanes = json::array();
  for (const auto& seg : scene.lanes) {
    json js;
    js["segment_id"] = seg.segment_id;
    json pts = json::array();
    for (const auto& v : seg.vectors) pts.push_back(point(v.start));
    if (!seg.vectors.empty()) pts.push_back(point(seg.vectors.back().end));
    js["points"] = std::move(pts);
    const LaneAttributes attrs = seg.vectors.empty() ? LaneAttributes{} : seg.vectors.front().attrs;
    js["has_traffic_control"] = attrs.has_traffic_control;
    js["turn"] = to_string(attrs.turn);
    js["predecessor_ids"] = seg.predecessor_ids;
    js["successor_ids"] = seg.successor_ids;
    lanes.push_back(std::move(js));
  }
  j["lanes"] = std::move(lanes);
  j["metadata"] = scene.metadata;
  return j;
}

Scene scene_from_json(const json& j) {
  try {
    if (j.value("schema", std::string{}) != kSceneSchema)
      throw Error(ErrorKind::kData, "unsupported scene schema '" + j.value("schema", std::string{}) + "'");
    Scene s;
    s.target_id = j.at("target_id").get<int>();
    s.sampling_period = j.at("sampling_period").get<double>();
    s.history_steps = j.at("t_h").get<int>();
    s.future_steps = j.at("t_f").get<int>();
    for (const auto& jt : j.at("tracks")) {
      AgentTrack t;
      t.agent_id = jt.at("agent_id").get<int>();
      t.agent_class = agent_class_from_string(jt.at("agent_class").get<std::string>());
      for (const auto& p : jt.at("positions")) t.positions.push_back(point_from(p));
      t.valid = jt.at("valid").get<std::vector<bool>>();
      s.tracks.push_back(std::move(t));
    }
    for (const auto& js : j.at("lanes")) {
      LaneSegment seg;
      seg.segment_id = js.at("segment_id").get<int>();
      LaneAttributes attrs;
      attrs.has_traffic_control = js.value("has_traffic_control", false);
      attrs.turn = turn_direction_from_string(js.value("turn", std::string("none")));
      std::vector<Vec2> pts;
      for (const auto& p : js.at("points")) pts.push_back(point_from(p));
      if (pts.size() < 2) throw Error(ErrorKind::kData, "lane segment needs at least 2 points");
      for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        LaneVector v;
        v.start = pts[k];
        v.end = pts[k + 1];
        v.attrs = attrs;
        v.predecessor = k == 0 ? pts[0] : pts[k - 1];
        seg.vectors.push_back(v);
      }
      seg.predecessor_ids = js.value("predecessor_ids", std::vector<int>{});
      seg.successor_ids = js.value("successor_ids", std::vector<int>{});
      s.lanes.push_back(std::move(seg));
    }
    s.metadata = j.value("metadata", json::object());
    validate_scene(s);
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kData, std::string("malformed scene record: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidScene) throw Error(ErrorKind::kData, e.what());
    throw;
  }
}

std::string scene_to_line(const Scene& scene) { return scene_to_json(scene).dump() + "\n"; }

void write_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& s : scenes) out << scene_to_line(s);
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

std::vector<Scene> read_scenes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kData, "cannot read " + path.string());
  std::vector<Scene> scenes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kData, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    scenes.push_back(scene_from_json(j));
  }
  return scenes;
}

}  // namespace laformer
