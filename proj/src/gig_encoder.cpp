#include "laformer/gig_encoder.hpp"

namespace laformer {

using ad::Matrix;
using ad::Tape;
using ad::Var;

GigEncoder::GigEncoder(nn::ParamStore& store, const std::string& prefix, const ModelConfig& config,
                       std::mt19937_64& rng)
    : hidden_(config.hidden),
      agent_mlp_(store, prefix + "/agent_mlp", kAgentFeatures, config.hidden, config.hidden, rng),
      agent_gru_(store, prefix + "/agent_gru", config.hidden, config.hidden, rng),
      lane_mlp_(store, prefix + "/lane_mlp", kLaneFeatures, config.hidden, config.hidden, rng),
      lane_gru_(store, prefix + "/lane_gru", config.hidden, config.hidden, rng),
      agent_to_lane_(store, prefix + "/agent_to_lane", config.hidden, config.hidden, config.hidden, config.heads, rng),
      lane_to_agent_(store, prefix + "/lane_to_agent", config.hidden, config.hidden, config.hidden, config.heads, rng),
      lane_pool_(store, prefix + "/lane_pool", config.hidden, config.hidden, config.hidden, config.heads, rng),
      concat_proj_(store, prefix + "/concat_proj", 2 * config.hidden, config.hidden, rng),
      self_att_(store, prefix + "/self_att", config.hidden, config.hidden, config.hidden, config.heads, rng) {}

namespace {

Var run_sequence(Tape& tape, const nn::Mlp2& mlp, const nn::GruCell& gru, const std::vector<Matrix>& steps,
                 const std::vector<Matrix>& masks) {
  std::vector<Var> inputs, step_masks;
  inputs.reserve(steps.size());
  for (std::size_t s = 0; s < steps.size(); ++s) {
    inputs.push_back(mlp(tape, tape.constant(steps[s])));
    step_masks.push_back(tape.constant(masks[s]));
  }
  return gru.run(tape, inputs, step_masks);
}

}  // namespace

Var GigEncoder::encode_agents(Tape& tape, const SceneTensors& scene) const {
  return run_sequence(tape, agent_mlp_, agent_gru_, scene.agent_steps, scene.agent_step_mask);
}

Var GigEncoder::encode_lanes(Tape& tape, const SceneTensors& scene) const {
  return run_sequence(tape, lane_mlp_, lane_gru_, scene.lane_steps, scene.lane_step_mask);
}

std::pair<Var, Var> GigEncoder::fuse_symmetric_cross_attention(Tape& tape, const Var& H, const Var& C,
                                                               const ad::RowMask& agent_mask,
                                                               const ad::RowMask& lane_mask,
                                                               SceneEncoding* trace) const {
  auto a2l = agent_to_lane_(tape, H, C, lane_mask);
  Var H1 = ad::add(H, a2l.out);
  auto l2a = lane_to_agent_(tape, C, H1, agent_mask);
  Var C1 = ad::add(C, l2a.out);
  if (trace != nullptr) {
    trace->agent_to_lane_weights = std::move(a2l.weights);
    trace->lane_to_agent_weights = std::move(l2a.weights);
  }
  return {H1, C1};
}

Var GigEncoder::global_self_attention(Tape& tape, const Var& H, const Var& C, const ad::RowMask& agent_mask,
                                      const ad::RowMask& lane_mask, SceneEncoding* trace) const {
  Var pooled;
  if (C.valid()) {
    auto pool = lane_pool_(tape, H, C, lane_mask);
    pooled = pool.out;
    if (trace != nullptr) trace->pool_weights = std::move(pool.weights);
  } else {
    pooled = tape.constant(Matrix::Zero(H.rows(), hidden_));
  }
  Var Hc = concat_proj_(tape, ad::concat_cols({H, pooled}));
  auto self = self_att_(tape, Hc, Hc, agent_mask);
  if (trace != nullptr) trace->self_weights = std::move(self.weights);
  return ad::add(Hc, self.out);
}

SceneEncoding GigEncoder::forward(Tape& tape, const SceneTensors& scene, bool use_lanes) const {
  SceneEncoding enc;
  enc.agent_mask = scene.agent_mask;
  Var H = encode_agents(tape, scene);
  if (use_lanes && scene.lane_count() > 0) {
    enc.lane_mask = scene.lane_mask;
    Var C = encode_lanes(tape, scene);
    auto [H1, C1] = fuse_symmetric_cross_attention(tape, H, C, enc.agent_mask, enc.lane_mask, &enc);
    enc.H = global_self_attention(tape, H1, C1, enc.agent_mask, enc.lane_mask, &enc);
    enc.C = C1;
  } else {
    enc.H = global_self_attention(tape, H, Var{}, enc.agent_mask, {}, &enc);
  }
  return enc;
}

}  // namespace laformer
