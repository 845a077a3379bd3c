#include "laformer/model.hpp"

#include "laformer/errors.hpp"

namespace laformer {

using ad::Matrix;
using ad::Tape;
using ad::Var;

ProcessedScene preprocess(const Scene& raw, const PreprocessOptions& options, int scene_index) {
  ProcessedScene p;
  p.scene_index = scene_index;
  p.normalized =
      filter_lanes_by_radius(normalize_scene(raw, {options.rotate_to_heading}), options.lane_radius);
  const Scene& s = p.normalized.scene;
  for (std::size_t k = 0; k < static_cast<std::size_t>(s.history_steps + s.future_steps); ++k)
    if (!s.target().valid[k]) throw Error(ErrorKind::kData, "target track must be complete over t_h + t_f");
  p.tensors = build_scene_tensors(s, options.coord_scale);
  if (!p.tensors.agent_mask[static_cast<std::size_t>(p.tensors.target_row)])
    throw Error(ErrorKind::kData, "target has no observed trajectory vector");
  p.history = history_matrix(s);
  p.future = future_matrix(s);
  if (!s.lanes.empty()) {
    const auto fut = target_future(s);
    p.labels = nearest_lane_labels(fut, s.lanes);
  }
  return p;
}

LaformerModel::LaformerModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  encoder_ = GigEncoder(store_, "encoder", config_, rng);
  lane_aware_ = LaneAware(store_, "lane_aware", config_, rng);
  decoder_ = MdnDecoder(store_, "decoder", config_, rng);
  refiner_ = Refiner(store_, "refiner", config_, rng);
}

std::vector<int> LaformerModel::scored_steps() const {
  if (config_.variant == Variant::kSpatial) return {config_.future_steps - 1};
  std::vector<int> steps;
  for (int t = 0; t < config_.future_steps; ++t) steps.push_back(t);
  return steps;
}

ForwardResult LaformerModel::forward(Tape& tape, const ProcessedScene& scene, int stage, int k) const {
  return forward(tape, scene, stage, k, Matrix::Zero(1, config_.latent_dim));
}

ForwardResult LaformerModel::forward(Tape& tape, const ProcessedScene& scene, int stage, int k,
                                     const Matrix& z) const {
  if (stage == 2 && !has_refinement(config_.variant))
    throw Error(ErrorKind::kConfig, std::string("variant ") + to_string(config_.variant) + " has no second stage");
  if (scene.history.rows() != config_.history_steps || scene.future.rows() != config_.future_steps)
    throw Error(ErrorKind::kConfig, "scene horizon does not match the model");
  ForwardResult r;
  const bool lanes = uses_lanes(config_.variant);
  r.encoding = encoder_.forward(tape, scene.tensors, lanes);
  r.h = ad::row(r.encoding.H, scene.tensors.target_row);
  if (lanes) {
    r.scores = lane_aware_.score_lanes(tape, r.h, r.encoding.H, r.encoding.agent_mask, r.encoding.C,
                                       r.encoding.lane_mask, scored_steps());
    r.candidates = lane_aware_.select_top_k(tape, *r.scores, r.encoding.C, k);
    r.h_att = lane_aware_.fuse_candidates(tape, r.h, *r.candidates);
  } else {
    r.h_att = tape.constant(Matrix::Zero(1, config_.hidden));
  }
  r.mixture = decoder_.decode(tape, r.h, r.h_att, tape.constant(z));
  if (stage == 2) {
    Var h_dot = refiner_.re_encode(tape, scene.history, r.mixture.mu, config_.modes);
    r.refined = refiner_.predict_offset(tape, r.h, r.h_att, h_dot, r.mixture.mu);
  }
  return r;
}

LossBreakdown LaformerModel::loss(Tape& tape, const ForwardResult& r, const ProcessedScene& scene,
                                  const LossWeights& w, int stage, const LossSelections* frozen) const {
  LossBreakdown out;
  const Matrix& Y = scene.future;
  Var lane = tape.constant(Matrix::Zero(1, 1));
  if (r.scores) {
    std::vector<int> labels;
    for (int t : r.scores->steps) labels.push_back(scene.labels.gt_segment_index.at(static_cast<std::size_t>(t)));
    lane = lane_loss(*r.scores, labels);
  }
  LossSelections& sel = out.selections;
  sel.winner = frozen ? frozen->winner : wta_mode(r.mixture.mu.value(), Y, config_.modes);
  sel.soft_targets = frozen ? frozen->soft_targets : soft_targets(r.mixture.mu.value(), Y, config_.modes, w.tau);
  Var reg = wta_regression_loss(r.mixture, Y, sel.winner);
  Var cls = classification_loss(r.mixture.log_pi, sel.soft_targets);
  Var s1 = stage1_loss(lane, reg, cls, w.lambda1);
  out.lane = lane.scalar();
  out.reg = reg.scalar();
  out.cls = cls.scalar();
  out.stage1 = s1.scalar();
  out.total = s1;
  out.winner = sel.winner;
  sel.refined_winner = sel.winner;
  if (stage == 2 && r.refined) {
    const int winner = frozen ? frozen->refined_winner
                       : w.wta_on_refined ? wta_mode(r.refined->final.value(), Y, config_.modes)
                                          : sel.winner;
    sel.refined_winner = winner;
    out.winner = winner;
    Var zero = tape.constant(Matrix::Zero(1, 1));
    Var off = w.use_offset ? offset_loss(*r.refined, r.mixture.mu, Y, winner) : zero;
    Var ang = w.use_angle ? angle_loss(r.refined->final, Y, Eigen::Vector2d::Zero(), winner) : zero;
    Var s2 = stage2_loss(s1, off, ang, w.lambda2, w.lambda3);
    out.off = off.scalar();
    out.angle = ang.scalar();
    out.stage2 = s2.scalar();
    out.total = s2;
  }
  return out;
}

}  // namespace laformer
