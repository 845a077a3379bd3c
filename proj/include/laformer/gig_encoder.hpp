#pragma once

// Global Interaction Graph: per-vector MLP + GRU encoders for agents and lane
// segments, symmetric agent/lane cross-attention, lane pooling and agent
// self-attention.

#include <string>
#include <vector>

#include "laformer/features.hpp"
#include "laformer/nn.hpp"

namespace laformer {

struct SceneEncoding {
  ad::Var H;  // N_traj x D
  ad::Var C;  // N_lane x D (invalid Var when the scene is encoded without lanes)
  ad::RowMask agent_mask;
  ad::RowMask lane_mask;
  // Attention distributions of the last forward pass, for inspection.
  std::vector<ad::Matrix> agent_to_lane_weights;
  std::vector<ad::Matrix> lane_to_agent_weights;
  std::vector<ad::Matrix> pool_weights;
  std::vector<ad::Matrix> self_weights;

  bool has_lanes() const { return C.valid(); }
};

class GigEncoder {
 public:
  GigEncoder() = default;
  GigEncoder(nn::ParamStore& store, const std::string& prefix, const ModelConfig& config, std::mt19937_64& rng);

  /// MLP per trajectory vector, GRU over the history slots; masked-out agents produce zero rows.
  ad::Var encode_agents(ad::Tape& tape, const SceneTensors& scene) const;
  /// Same architecture with separate parameters, GRU along each segment's vectors.
  ad::Var encode_lanes(ad::Tape& tape, const SceneTensors& scene) const;

  /// H' = H + CrossAtt(H, C); C' = C + CrossAtt(C, H'), in that order.
  std::pair<ad::Var, ad::Var> fuse_symmetric_cross_attention(ad::Tape& tape, const ad::Var& H, const ad::Var& C,
                                                             const ad::RowMask& agent_mask,
                                                             const ad::RowMask& lane_mask,
                                                             SceneEncoding* trace = nullptr) const;

  /// h <- Linear([h, attention-pooled lane summary]); H <- H + SelfAtt(H).
  /// C may be invalid (no lanes), in which case the pooled summary is zero.
  ad::Var global_self_attention(ad::Tape& tape, const ad::Var& H, const ad::Var& C, const ad::RowMask& agent_mask,
                                const ad::RowMask& lane_mask, SceneEncoding* trace = nullptr) const;

  /// Full encoder. With use_lanes == false the lane inputs are ignored entirely.
  SceneEncoding forward(ad::Tape& tape, const SceneTensors& scene, bool use_lanes) const;

 private:
  int hidden_ = 0;
  nn::Mlp2 agent_mlp_;
  nn::GruCell agent_gru_;
  nn::Mlp2 lane_mlp_;
  nn::GruCell lane_gru_;
  nn::Attention agent_to_lane_;
  nn::Attention lane_to_agent_;
  nn::Attention lane_pool_;
  nn::Linear concat_proj_;
  nn::Attention self_att_;
};

}  // namespace laformer
