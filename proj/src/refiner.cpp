#include "laformer/refiner.hpp"

#include <cmath>
#include <iostream>

namespace laformer {

using ad::Matrix;
using ad::Tape;
using ad::Var;

Refiner::Refiner(nn::ParamStore& store, const std::string& prefix, const ModelConfig& config, std::mt19937_64& rng,
                 bool zero_init_head)
    : hidden_(config.hidden),
      steps_(config.future_steps),
      coord_scale_(config.coord_scale),
      mlp_(store, prefix + "/mlp", kRefineFeatures, config.hidden, config.hidden, rng),
      gru_(store, prefix + "/gru", config.hidden, config.hidden, rng),
      head_(store, prefix + "/head", 3 * config.hidden, config.hidden, 2 * config.future_steps, rng, zero_init_head) {}

Var Refiner::re_encode(Tape& tape, const Matrix& observed, const Var& mu, int modes) const {
  const int th = static_cast<int>(observed.rows());
  const int tf = static_cast<int>(mu.rows()) / modes;
  // Position k of mode m: observed row k for k < th, otherwise mu row m * tf + (k - th).
  auto position = [&](int k) -> Var {
    if (k < th) return tape.constant(observed.row(k).replicate(modes, 1));
    std::vector<int> rows;
    for (int m = 0; m < modes; ++m) rows.push_back(m * tf + (k - th));
    return ad::gather_rows(mu, rows);
  };
  std::vector<Var> inputs;
  Var prev = position(0);
  for (int k = 1; k < th + tf; ++k) {
    Var cur = position(k);
    inputs.push_back(mlp_(tape, ad::scale(ad::concat_cols({prev, cur}), coord_scale_)));
    prev = cur;
  }
  return gru_.run(tape, inputs, {});
}

RefinedPrediction Refiner::predict_offset(Tape& tape, const Var& h, const Var& h_att, const Var& h_dot,
                                          const Var& mu) const {
  RefinedPrediction out;
  out.modes = static_cast<int>(h_dot.rows());
  out.steps = steps_;
  Var in = ad::concat_cols({ad::tile_rows(h, out.modes), ad::tile_rows(h_att, out.modes), h_dot});
  out.delta = ad::reshape(head_(tape, in), static_cast<Eigen::Index>(out.modes) * steps_, 2);
  out.final = ad::add(mu, out.delta);
  return out;
}

Var offset_loss(const RefinedPrediction& pred, const Var& mu, const Matrix& Y, int winner) {
  const auto T = Y.rows();
  Tape& tape = *pred.delta.tape();
  Var delta_hat = ad::slice(pred.delta, winner * T, 0, T, 2);
  Var delta = ad::sub(tape.constant(Y), ad::slice(mu, winner * T, 0, T, 2));
  return ad::scale(ad::sum(ad::row_norm(ad::sub(delta_hat, delta))), 1.0 / static_cast<double>(T));
}

AngleTerms angle_terms(const Matrix& final_traj, const Matrix& Y, const Eigen::Vector2d& x0, int modes, int winner) {
  const Eigen::Index T = Y.rows();
  AngleTerms terms;
  terms.theta_hat.assign(static_cast<std::size_t>(modes), {});
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Vector2d g = Y.row(t).transpose() - x0;
    terms.theta.push_back(std::atan2(g.y(), g.x()));
    for (int m = 0; m < modes; ++m) {
      const Eigen::Vector2d p = final_traj.row(m * T + t).transpose() - x0;
      terms.theta_hat[static_cast<std::size_t>(m)].push_back(std::atan2(p.y(), p.x()));
    }
    const Eigen::Vector2d p = final_traj.row(winner * T + t).transpose() - x0;
    terms.step_valid_mask.push_back(g.norm() >= kAngleEpsilon && p.norm() >= kAngleEpsilon);
  }
  return terms;
}

Var angle_loss(const Var& final_traj, const Matrix& Y, const Eigen::Vector2d& x0, int winner) {
  const Eigen::Index T = Y.rows();
  Tape& tape = *final_traj.tape();
  const int modes = static_cast<int>(final_traj.rows() / T);
  const AngleTerms terms = angle_terms(final_traj.value(), Y, x0, modes, winner);
  std::vector<int> rows;
  Matrix g(T, 2);
  Matrix g_norm(T, 1);
  int n_valid = 0;
  for (Eigen::Index t = 0; t < T; ++t) {
    if (!terms.step_valid_mask[static_cast<std::size_t>(t)]) continue;
    rows.push_back(winner * static_cast<int>(T) + static_cast<int>(t));
    g.row(n_valid) = Y.row(t) - x0.transpose();
    g_norm(n_valid, 0) = g.row(n_valid).norm();
    ++n_valid;
  }
  if (n_valid == 0) {
    std::cerr << "warning: angle loss has no valid step; using 0\n";
    return tape.constant(Matrix::Zero(1, 1));
  }
  Matrix x0_rows = x0.transpose().replicate(n_valid, 1);
  Var p = ad::sub(ad::gather_rows(final_traj, rows), tape.constant(x0_rows));
  Var dot = ad::row_sum(ad::mul(p, tape.constant(g.topRows(n_valid))));
  Var cosine = ad::div(dot, ad::mul(ad::row_norm(p), tape.constant(g_norm.topRows(n_valid))));
  return ad::scale(ad::sum(cosine), -1.0 / n_valid);
}

Var stage2_loss(const Var& s1, const Var& off, const Var& angle, double lambda2, double lambda3) {
  return ad::add(ad::add(s1, ad::scale(off, lambda2)), ad::scale(angle, lambda3));
}

double stage2_loss(double s1, double off, double angle, double lambda2, double lambda3) {
  return s1 + lambda2 * off + lambda3 * angle;
}

}  // namespace laformer
