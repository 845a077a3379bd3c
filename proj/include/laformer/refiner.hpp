#pragma once

// Second-stage refinement: re-encode observed + predicted trajectory per mode,
// regress per-mode offsets, and the offset/angle losses.

#include <string>
#include <vector>

#include "laformer/features.hpp"
#include "laformer/nn.hpp"

namespace laformer {

struct RefinedPrediction {
  ad::Var delta;  // (M * t_f) x 2
  ad::Var final;  // mu + delta
  int modes = 0;
  int steps = 0;
};

struct AngleTerms {
  std::vector<double> theta;                     // t_f ground-truth angles
  std::vector<std::vector<double>> theta_hat;    // M x t_f predicted angles
  std::vector<bool> step_valid_mask;             // for the evaluated mode
};

inline constexpr double kAngleEpsilon = 1e-6;

class Refiner {
 public:
  Refiner() = default;
  Refiner(nn::ParamStore& store, const std::string& prefix, const ModelConfig& config, std::mt19937_64& rng,
          bool zero_init_head = true);

  /// Encodes each mode's t_h + t_f position sequence (t_h + t_f - 1 vectors). Returns M x D.
  ad::Var re_encode(ad::Tape& tape, const ad::Matrix& observed, const ad::Var& mu, int modes) const;

  /// Two-layer head on [h, h_att, h_dot_m] per mode; final = mu + delta.
  RefinedPrediction predict_offset(ad::Tape& tape, const ad::Var& h, const ad::Var& h_att, const ad::Var& h_dot,
                                   const ad::Var& mu) const;

 private:
  int hidden_ = 0;
  int steps_ = 0;
  double coord_scale_ = 1.0;
  nn::Mlp2 mlp_;
  nn::GruCell gru_;
  nn::Mlp2 head_;
};

/// (1 / t_f) sum_t || delta_hat_t - (Y_t - mu_t) ||_2 for the given mode.
ad::Var offset_loss(const RefinedPrediction& pred, const ad::Var& mu, const ad::Matrix& Y, int winner);

/// Angles of Y_t - X0 and final_t - X0 for one mode; steps where either displacement is below
/// kAngleEpsilon are invalid.
AngleTerms angle_terms(const ad::Matrix& final_traj, const ad::Matrix& Y, const Eigen::Vector2d& x0, int modes,
                       int winner);

/// Mean over valid steps of -cos(theta_hat - theta) for the given mode; 0 (with a warning on stderr)
/// when every step is masked.
ad::Var angle_loss(const ad::Var& final_traj, const ad::Matrix& Y, const Eigen::Vector2d& x0, int winner);

/// L_S1 + lambda2 * off + lambda3 * angle.
ad::Var stage2_loss(const ad::Var& s1, const ad::Var& off, const ad::Var& angle, double lambda2 = 5.0,
                    double lambda3 = 2.0);
double stage2_loss(double s1, double off, double angle, double lambda2 = 5.0, double lambda3 = 2.0);

}  // namespace laformer
