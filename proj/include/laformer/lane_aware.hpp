#pragma once

// Temporally dense lane-aware estimation: per-future-step lane scores, top-k
// candidate selection, the lane loss and candidate/motion fusion.

#include <string>
#include <vector>

#include "laformer/features.hpp"
#include "laformer/nn.hpp"
#include "laformer/scene_model.hpp"

namespace laformer {

struct LaneScores {
  ad::Var logits;     // T x N_lane
  ad::Var log_probs;  // T x N_lane (masked columns hold 0)
  ad::Var probs;      // T x N_lane (masked columns hold exactly 0)
  std::vector<int> steps;  // future step (0-based) scored by each row
  ad::RowMask lane_mask;

  const ad::Matrix& value() const { return probs.value(); }
};

struct CandidateSet {
  std::vector<std::vector<int>> indices;  // per scored row: k lane indices, -1 for padding
  std::vector<std::vector<double>> scores;
  ad::Var entries;                        // (rows * k) x (D + 1): [c_j, s_j]
  ad::RowMask entry_mask;                 // false for padding entries
};

/// Per row, the k highest-scoring valid lanes in descending score order; ties go to the lower index.
/// With fewer than k valid lanes the remaining slots are padding (index -1).
std::vector<std::vector<int>> top_k_indices(const ad::Matrix& scores, const ad::RowMask& lane_mask, int k);

/// Cross entropy of the one-hot labels against the scored rows, summed over rows.
/// labels[r] is the ground-truth lane for row r. Throws Error(kInvalidLabel) for masked/out-of-range labels.
ad::Var lane_loss(const LaneScores& scores, const std::vector<int>& labels);

class LaneAware {
 public:
  LaneAware() = default;
  LaneAware(nn::ParamStore& store, const std::string& prefix, const ModelConfig& config, std::mt19937_64& rng);

  /// Scores every lane for each future step in `steps` (0-based). Keys/values come from the agent
  /// encodings `H` (masked by agent_mask); queries from lane encodings plus a learned step embedding.
  /// Throws Error(kNoLanes) when no lane is valid.
  LaneScores score_lanes(ad::Tape& tape, const ad::Var& h_target, const ad::Var& H, const ad::RowMask& agent_mask,
                         const ad::Var& C, const ad::RowMask& lane_mask, const std::vector<int>& steps) const;

  CandidateSet select_top_k(ad::Tape& tape, const LaneScores& scores, const ad::Var& C, int k) const;

  /// Cross-attention from the target encoding to the candidate entries; returns 1 x D.
  ad::Var fuse_candidates(ad::Tape& tape, const ad::Var& h_target, const CandidateSet& candidates,
                          std::vector<ad::Matrix>* weights = nullptr) const;

 private:
  int hidden_ = 0;
  int future_steps_ = 0;
  ad::Parameter* step_embedding_ = nullptr;  // t_f x D
  nn::Attention score_att_;
  nn::Mlp2 phi_;
  nn::Attention fuse_att_;
};

}  // namespace laformer
