#pragma once

// "laformer-scene/1" newline-delimited scene files. See docs/scene_format.md.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "laformer/scene_model.hpp"

namespace laformer {

inline constexpr const char* kSceneSchema = "laformer-scene/1";

nlohmann::json scene_to_json(const Scene& scene);
/// Throws Error(kData) on schema or field problems.
Scene scene_from_json(const nlohmann::json& j);

/// One compact JSON document per line, terminated by '\n'.
std::string scene_to_line(const Scene& scene);

void write_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes);
std::vector<Scene> read_scenes(const std::filesystem::path& path);

}  // namespace laformer
