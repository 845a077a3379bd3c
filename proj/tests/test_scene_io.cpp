#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "fixtures.hpp"
#include "laformer/errors.hpp"
#include "laformer/scenario_gen.hpp"
#include "laformer/scene_io.hpp"

using namespace laformer;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_same_scene(const Scene& a, const Scene& b) {
  CHECK(a.target_id == b.target_id);
  CHECK(a.sampling_period == b.sampling_period);
  CHECK(a.history_steps == b.history_steps);
  CHECK(a.future_steps == b.future_steps);
  REQUIRE(a.tracks.size() == b.tracks.size());
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    CHECK(a.tracks[i].agent_id == b.tracks[i].agent_id);
    CHECK(a.tracks[i].agent_class == b.tracks[i].agent_class);
    CHECK(a.tracks[i].positions == b.tracks[i].positions);
    CHECK(a.tracks[i].valid == b.tracks[i].valid);
  }
  REQUIRE(a.lanes.size() == b.lanes.size());
  for (std::size_t i = 0; i < a.lanes.size(); ++i) {
    const auto& la = a.lanes[i];
    const auto& lb = b.lanes[i];
    CHECK(la.segment_id == lb.segment_id);
    CHECK(la.predecessor_ids == lb.predecessor_ids);
    CHECK(la.successor_ids == lb.successor_ids);
    REQUIRE(la.vectors.size() == lb.vectors.size());
    for (std::size_t j = 0; j < la.vectors.size(); ++j) {
      CHECK(la.vectors[j].start == lb.vectors[j].start);
      CHECK(la.vectors[j].end == lb.vectors[j].end);
      CHECK(la.vectors[j].predecessor == lb.vectors[j].predecessor);
      CHECK(la.vectors[j].attrs == lb.vectors[j].attrs);
    }
  }
  CHECK(a.metadata == b.metadata);
}

ErrorKind kind_of(const json& j) {
  try {
    scene_from_json(j);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kConfig;
}

}  // namespace

TEST_CASE("generated scenes round trip bit-exactly") {
  gen::GenConfig cfg;
  cfg.seed = 21;
  for (int i = 0; i < 30; ++i) {
    const Scene s = generate_scene(cfg, i);
    const std::string line = scene_to_line(s);
    CHECK(line.back() == '\n');
    CHECK(line.find('\n') == line.size() - 1);
    const Scene back = scene_from_json(json::parse(line));
    check_same_scene(s, back);
    CHECK(scene_to_line(back) == line);
  }
}

TEST_CASE("non-dyadic coordinates survive the text format") {
  Scene s = testing::small_scene();
  s.tracks[1].positions[0] = Vec2(0.1, -1.0 / 3.0);
  s.tracks[1].valid[0] = false;
  // Attributes are stored per segment.
  for (auto& v : s.lanes[0].vectors) v.attrs = LaneAttributes{true, TurnDirection::kLeft};
  s.metadata["note"] = "x";
  check_same_scene(s, scene_from_json(json::parse(scene_to_line(s))));
}

TEST_CASE("write_scenes and read_scenes round trip through a file") {
  const fs::path dir = fs::temp_directory_path() / ("laformer_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  gen::GenConfig cfg;
  std::vector<Scene> scenes;
  for (int i = 0; i < 5; ++i) scenes.push_back(generate_scene(cfg, i));
  write_scenes(dir / "s.jsonl", scenes);
  const auto back = read_scenes(dir / "s.jsonl");
  REQUIRE(back.size() == scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) check_same_scene(scenes[i], back[i]);

  {
    std::ofstream bad(dir / "bad.jsonl");
    bad << scene_to_line(scenes[0]) << "{not json\n";
  }
  try {
    read_scenes(dir / "bad.jsonl");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK_THROWS_AS(write_scenes(dir / "missing" / "x.jsonl", scenes), Error);
  fs::remove_all(dir);
}

TEST_CASE("schema and field problems are data errors") {
  const json good = scene_to_json(testing::small_scene());
  CHECK_NOTHROW(scene_from_json(good));

  json j = good;
  j["schema"] = "laformer-scene/2";
  CHECK(kind_of(j) == ErrorKind::kData);

  j = good;
  j.erase("target_id");
  CHECK(kind_of(j) == ErrorKind::kData);

  j = good;
  j["lanes"][0]["points"] = json::array({json::array({0.0, 0.0})});
  CHECK(kind_of(j) == ErrorKind::kData);

  j = good;
  j["tracks"][0]["positions"][0] = json::array({1.0});
  CHECK(kind_of(j) == ErrorKind::kData);

  j = good;
  j["tracks"][0]["agent_class"] = "bicycle";
  CHECK(kind_of(j) == ErrorKind::kData);

  j = good;
  j["target_id"] = 12345;
  CHECK(kind_of(j) == ErrorKind::kData);
}
