#include "laformer/mdn_decoder.hpp"

#include <cmath>
#include <limits>

namespace laformer {

using ad::Matrix;
using ad::Tape;
using ad::Var;

MdnDecoder::MdnDecoder(nn::ParamStore& store, const std::string& prefix, const ModelConfig& config,
                       std::mt19937_64& rng)
    : hidden_(config.hidden),
      modes_(config.modes),
      steps_(config.future_steps),
      position_scale_(config.position_scale),
      b_min_(config.b_min),
      cumulative_(config.cumulative_decoding),
      pi_head_(store, prefix + "/pi_head", 2 * config.hidden + config.latent_dim, config.hidden, config.modes, rng),
      init_(store, prefix + "/init", 2 * config.hidden + config.latent_dim, config.hidden, rng),
      gru_(store, prefix + "/gru", config.hidden, config.hidden, rng),
      mu_head_(store, prefix + "/mu_head", config.hidden, config.hidden, 2, rng),
      b_head_(store, prefix + "/b_head", config.hidden, config.hidden, 2, rng) {
  mode_embedding_ = store.create(prefix + "/mode_embedding", config.modes, config.hidden, rng);
}

MixturePrediction MdnDecoder::decode(Tape& tape, const Var& h, const Var& h_att, const Var& z) const {
  MixturePrediction pred;
  pred.modes = modes_;
  pred.steps = steps_;
  Var x = ad::concat_cols({h, h_att, z});
  pred.pi_logits = pi_head_(tape, x);
  pred.log_pi = ad::log_softmax_rows(pred.pi_logits);
  pred.pi = ad::softmax_rows(pred.pi_logits);

  // Per-mode input: shared context projection plus a learned mode embedding.
  Var u = ad::tanh(ad::add_row(tape.param(*mode_embedding_), init_(tape, x)));
  Var state = u;
  std::vector<Var> states;
  states.reserve(static_cast<std::size_t>(steps_));
  for (int t = 0; t < steps_; ++t) {
    state = gru_.step(tape, u, state);
    states.push_back(state);
  }
  // Stacked as row t * M + m; reorder to m * t_f + t.
  Var stacked = ad::concat_rows(states);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(modes_ * steps_));
  for (int m = 0; m < modes_; ++m)
    for (int t = 0; t < steps_; ++t) order.push_back(t * modes_ + m);
  Var S = ad::gather_rows(stacked, order);
  pred.mu = ad::scale(mu_head_(tape, S), position_scale_);
  if (cumulative_) {
    // Block lower-triangular ones: each mode's rows become prefix sums over its steps.
    Matrix prefix = Matrix::Zero(modes_ * steps_, modes_ * steps_);
    for (int m = 0; m < modes_; ++m)
      prefix.block(m * steps_, m * steps_, steps_, steps_).triangularView<Eigen::Lower>().setOnes();
    pred.mu = ad::matmul(tape.constant(std::move(prefix)), pred.mu);
  }
  pred.b = ad::add_scalar(ad::softplus(b_head_(tape, S)), b_min_);
  return pred;
}

int wta_mode(const Matrix& mu, const Matrix& Y, int modes) {
  const Eigen::Index T = Y.rows();
  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (int m = 0; m < modes; ++m) {
    double err = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) err += (mu.row(m * T + t) - Y.row(t)).norm();
    if (err < best_err) {
      best_err = err;
      best = m;
    }
  }
  return best;
}

Var wta_regression_loss(const MixturePrediction& pred, const Matrix& Y) {
  return wta_regression_loss(pred, Y, wta_mode(pred.mu.value(), Y, pred.modes));
}

Var wta_regression_loss(const MixturePrediction& pred, const Matrix& Y, int winner) {
  const auto T = Y.rows();
  Tape& tape = *pred.mu.tape();
  Var mu = ad::slice(pred.mu, winner * T, 0, T, 2);
  Var b = ad::slice(pred.b, winner * T, 0, T, 2);
  Var err = ad::abs(ad::sub(tape.constant(Y), mu));
  Var nll = ad::add(ad::log(ad::scale(b, 2.0)), ad::div(err, b));
  return ad::scale(ad::sum(nll), 1.0 / static_cast<double>(T));
}

std::vector<double> soft_targets(const Matrix& mu, const Matrix& Y, int modes, double tau) {
  const Eigen::Index T = Y.rows();
  std::vector<double> logits(static_cast<std::size_t>(modes));
  double mx = -std::numeric_limits<double>::infinity();
  for (int m = 0; m < modes; ++m) {
    const double fde = (mu.row(m * T + T - 1) - Y.row(T - 1)).norm();
    logits[static_cast<std::size_t>(m)] = -fde / tau;
    mx = std::max(mx, logits[static_cast<std::size_t>(m)]);
  }
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  for (double& l : logits) l /= z;
  return logits;
}

Var classification_loss(const MixturePrediction& pred, const Matrix& Y, double tau) {
  return classification_loss(pred.log_pi, soft_targets(pred.mu.value(), Y, pred.modes, tau));
}

Var classification_loss(const Var& log_pi, const std::vector<double>& targets) {
  Matrix w(1, static_cast<Eigen::Index>(targets.size()));
  for (std::size_t m = 0; m < targets.size(); ++m) w(0, static_cast<Eigen::Index>(m)) = -targets[m];
  return ad::sum(ad::mul(log_pi, log_pi.tape()->constant(w)));
}

Var stage1_loss(const Var& lane, const Var& reg, const Var& cls, double lambda1) {
  return ad::add(ad::add(ad::scale(lane, lambda1), reg), cls);
}

double stage1_loss(double lane, double reg, double cls, double lambda1) { return lambda1 * lane + reg + cls; }

}  // namespace laformer
