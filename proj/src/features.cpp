#include "laformer/features.hpp"

#include <algorithm>

#include "laformer/errors.hpp"

namespace laformer {

using ad::Matrix;
using nlohmann::json;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kBaselineS2: return "baseline_s2";
    case Variant::kSpatial: return "spatial";
    case Variant::kTemporal: return "temporal";
    case Variant::kFull: return "full";
  }
  return "full";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::kBaseline, Variant::kBaselineS2, Variant::kSpatial, Variant::kTemporal, Variant::kFull})
    if (s == to_string(v)) return v;
  throw Error(ErrorKind::kConfig, "unknown variant '" + s + "'");
}

bool uses_lanes(Variant v) { return v == Variant::kSpatial || v == Variant::kTemporal || v == Variant::kFull; }
bool has_refinement(Variant v) { return v == Variant::kBaselineS2 || v == Variant::kFull; }

json ModelConfig::to_json() const {
  return json{{"hidden", hidden},           {"modes", modes},
              {"heads", heads},             {"t_h", history_steps},
              {"t_f", future_steps},        {"top_k", top_k},
              {"latent_dim", latent_dim},   {"variant", to_string(variant)},
              {"coord_scale", coord_scale}, {"position_scale", position_scale},
              {"cumulative_decoding", cumulative_decoding},
              {"b_min", b_min}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.hidden = j.value("hidden", c.hidden);
    c.modes = j.value("modes", c.modes);
    c.heads = j.value("heads", c.heads);
    c.history_steps = j.value("t_h", c.history_steps);
    c.future_steps = j.value("t_f", c.future_steps);
    c.top_k = j.value("top_k", c.top_k);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.variant = variant_from_string(j.value("variant", std::string(to_string(c.variant))));
    c.coord_scale = j.value("coord_scale", c.coord_scale);
    c.position_scale = j.value("position_scale", c.position_scale);
    c.b_min = j.value("b_min", c.b_min);
    c.cumulative_decoding = j.value("cumulative_decoding", c.cumulative_decoding);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad model config: ") + e.what());
  }
  if (c.hidden < 1 || c.modes < 1 || c.heads < 1 || c.hidden % c.heads != 0 || c.top_k < 1)
    throw Error(ErrorKind::kConfig, "invalid model dimensions");
  return c;
}

SceneTensors build_scene_tensors(const Scene& scene, double coord_scale) {
  SceneTensors t;
  const int n_agents = static_cast<int>(scene.tracks.size());
  const int slots = scene.history_steps - 1;
  t.agent_steps.assign(static_cast<std::size_t>(slots), Matrix::Zero(n_agents, kAgentFeatures));
  t.agent_step_mask.assign(static_cast<std::size_t>(slots), Matrix::Zero(n_agents, 1));
  t.agent_mask.assign(static_cast<std::size_t>(n_agents), false);
  for (int a = 0; a < n_agents; ++a) {
    const AgentTrack& track = scene.tracks[static_cast<std::size_t>(a)];
    if (track.agent_id == scene.target_id) t.target_row = a;
    for (int s = 0; s < slots; ++s) {
      // Slot s holds the vector ending at history index s + 1.
      const auto i0 = static_cast<std::size_t>(s), i1 = static_cast<std::size_t>(s + 1);
      if (!track.valid[i0] || !track.valid[i1]) continue;
      Matrix& m = t.agent_steps[static_cast<std::size_t>(s)];
      const Vec2 a0 = track.positions[i0] * coord_scale, a1 = track.positions[i1] * coord_scale;
      m(a, 0) = a0.x();
      m(a, 1) = a0.y();
      m(a, 2) = a1.x();
      m(a, 3) = a1.y();
      m(a, 4 + static_cast<int>(track.agent_class)) = 1.0;
      m(a, 7) = static_cast<double>(s + 1 - (scene.history_steps - 1)) * scene.sampling_period;
      t.agent_step_mask[static_cast<std::size_t>(s)](a, 0) = 1.0;
      t.agent_mask[static_cast<std::size_t>(a)] = true;
    }
  }

  const int n_lanes = static_cast<int>(scene.lanes.size());
  std::size_t longest = 0;
  for (const auto& seg : scene.lanes) longest = std::max(longest, seg.vectors.size());
  t.lane_steps.assign(longest, Matrix::Zero(n_lanes, kLaneFeatures));
  t.lane_step_mask.assign(longest, Matrix::Zero(n_lanes, 1));
  t.lane_mask.assign(static_cast<std::size_t>(n_lanes), false);
  for (int j = 0; j < n_lanes; ++j) {
    const LaneSegment& seg = scene.lanes[static_cast<std::size_t>(j)];
    t.lane_mask[static_cast<std::size_t>(j)] = !seg.vectors.empty();
    for (std::size_t n = 0; n < seg.vectors.size(); ++n) {
      const LaneVector& v = seg.vectors[n];
      Matrix& m = t.lane_steps[n];
      m(j, 0) = v.start.x() * coord_scale;
      m(j, 1) = v.start.y() * coord_scale;
      m(j, 2) = v.end.x() * coord_scale;
      m(j, 3) = v.end.y() * coord_scale;
      m(j, 4) = v.attrs.has_traffic_control ? 1.0 : 0.0;
      m(j, 5 + static_cast<int>(v.attrs.turn)) = 1.0;
      m(j, 8) = v.predecessor.x() * coord_scale;
      m(j, 9) = v.predecessor.y() * coord_scale;
      t.lane_step_mask[n](j, 0) = 1.0;
    }
  }
  return t;
}

Matrix history_matrix(const Scene& scene) {
  const auto h = target_history(scene);
  Matrix m(static_cast<Eigen::Index>(h.size()), 2);
  for (std::size_t i = 0; i < h.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = h[i].transpose();
  return m;
}

Matrix future_matrix(const Scene& scene) {
  const auto f = target_future(scene);
  Matrix m(static_cast<Eigen::Index>(f.size()), 2);
  for (std::size_t i = 0; i < f.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = f[i].transpose();
  return m;
}

}  // namespace laformer
