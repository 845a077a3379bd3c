#pragma once

// Per-scene prediction records in the raw frame, and SVG scene plots.

#include <filesystem>

#include "json.hpp"
#include "laformer/metrics.hpp"

namespace laformer {

/// Record with the K most probable trajectories (raw frame), their probabilities, the stage-1
/// anchors, and the per-step lane candidates (indices into the radius-filtered lanes plus their
/// segment ids). Horizon mismatch is Error(kConfig).
nlohmann::json prediction_record(const LaformerModel& model, const ProcessedScene& scene, int stage, int k, int K);
nlohmann::json prediction_record(const Checkpoint& ckpt, const ProcessedScene& scene, int K);

/// Writes an SVG of the raw scene with lanes, observed track, ground truth, the record's modes
/// and per-step candidate highlights. Unwritable path is Error(kIo).
void plot_scene(const Scene& scene, const nlohmann::json& record, const std::filesystem::path& out_path);

}  // namespace laformer
