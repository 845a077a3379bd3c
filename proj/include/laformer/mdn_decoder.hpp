#pragma once

// Laplacian mixture-density decoder and its stage-1 losses.
//
// Trajectory tensors are stored as (M * t_f) x 2 matrices with row m * t_f + t
// holding mode m at future step t (0-based).

#include <string>
#include <vector>

#include "laformer/features.hpp"
#include "laformer/nn.hpp"

namespace laformer {

struct MixturePrediction {
  ad::Var mu;         // (M * t_f) x 2, meters
  ad::Var b;          // (M * t_f) x 2, >= b_min
  ad::Var pi_logits;  // 1 x M
  ad::Var log_pi;     // 1 x M
  ad::Var pi;         // 1 x M
  int modes = 0;
  int steps = 0;
};

class MdnDecoder {
 public:
  MdnDecoder() = default;
  MdnDecoder(nn::ParamStore& store, const std::string& prefix, const ModelConfig& config, std::mt19937_64& rng);

  /// h, h_att: 1 x D; z: 1 x latent_dim.
  MixturePrediction decode(ad::Tape& tape, const ad::Var& h, const ad::Var& h_att, const ad::Var& z) const;

 private:
  int hidden_ = 0;
  int modes_ = 0;
  int steps_ = 0;
  double position_scale_ = 1.0;
  double b_min_ = 1e-3;
  bool cumulative_ = true;
  nn::Mlp2 pi_head_;
  nn::Linear init_;
  ad::Parameter* mode_embedding_ = nullptr;  // M x D
  nn::GruCell gru_;
  nn::Mlp2 mu_head_;
  nn::Mlp2 b_head_;
};

/// Mode with the smallest summed per-step L2 error to Y (t_f x 2); ties go to the lower index.
int wta_mode(const ad::Matrix& mu, const ad::Matrix& Y, int modes);

/// (1 / t_f) * sum_t sum_d [log(2 b) + |Y - mu| / b] for the WTA mode.
ad::Var wta_regression_loss(const MixturePrediction& pred, const ad::Matrix& Y);
/// Same, with the winning mode given.
ad::Var wta_regression_loss(const MixturePrediction& pred, const ad::Matrix& Y, int winner);

/// softmax(-FDE_m / tau) over modes, computed from values only.
std::vector<double> soft_targets(const ad::Matrix& mu, const ad::Matrix& Y, int modes, double tau = 1.0);

/// sum_m -pi_m log pi_hat_m with pi from soft_targets (treated as constants).
ad::Var classification_loss(const MixturePrediction& pred, const ad::Matrix& Y, double tau = 1.0);
ad::Var classification_loss(const ad::Var& log_pi, const std::vector<double>& targets);

/// lambda1 * lane + reg + cls.
ad::Var stage1_loss(const ad::Var& lane, const ad::Var& reg, const ad::Var& cls, double lambda1 = 10.0);
double stage1_loss(double lane, double reg, double cls, double lambda1 = 10.0);

}  // namespace laformer
