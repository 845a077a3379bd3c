#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "grad_check.hpp"
#include "oracles.hpp"
#include "laformer/mdn_decoder.hpp"

using namespace laformer;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using testing::random_matrix;
using namespace testing;

namespace {

MixturePrediction make_pred(Tape& tape, const Matrix& mu, const Matrix& b, const Matrix& logits, int modes) {
  MixturePrediction p;
  p.mu = tape.constant(mu);
  p.b = tape.constant(b);
  p.pi_logits = tape.constant(logits);
  p.log_pi = ad::log_softmax_rows(p.pi_logits);
  p.pi = ad::softmax_rows(p.pi_logits);
  p.modes = modes;
  p.steps = static_cast<int>(mu.rows()) / modes;
  return p;
}

MixturePrediction from_vars(const std::vector<Var>& v, int modes) {
  MixturePrediction p;
  p.mu = v[0];
  p.b = v[1];
  p.pi_logits = v[2];
  p.log_pi = ad::log_softmax_rows(v[2]);
  p.pi = ad::softmax_rows(v[2]);
  p.modes = modes;
  p.steps = static_cast<int>(v[0].rows()) / modes;
  return p;
}

}  // namespace

TEST_CASE("decoder output shapes and invariants") {
  ModelConfig cfg;
  cfg.hidden = 16;
  cfg.modes = 6;
  cfg.future_steps = 12;
  cfg.latent_dim = 2;
  for (bool cumulative : {true, false}) {
    cfg.cumulative_decoding = cumulative;
    nn::ParamStore store;
    std::mt19937_64 rng(1);
    const MdnDecoder dec(store, "dec", cfg, rng);
    for (int trial = 0; trial < 20; ++trial) {
      Tape tape;
      const MixturePrediction p =
          dec.decode(tape, tape.constant(random_matrix(rng, 1, 16, -3, 3)), tape.constant(random_matrix(rng, 1, 16, -3, 3)),
                     tape.constant(random_matrix(rng, 1, 2, -2, 2)));
      CHECK(p.mu.rows() == 72);
      CHECK(p.mu.cols() == 2);
      CHECK(p.b.rows() == 72);
      CHECK(p.b.cols() == 2);
      CHECK(p.pi.cols() == 6);
      CHECK(p.modes == 6);
      CHECK(p.steps == 12);
      CHECK(p.pi.value().sum() == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(p.b.value().minCoeff() >= 1e-3);
      CHECK(p.mu.value().allFinite());
    }
  }
}

TEST_CASE("decoder with a latent sample varies the trajectories") {
  ModelConfig cfg;
  cfg.hidden = 8;
  nn::ParamStore store;
  std::mt19937_64 rng(2);
  const MdnDecoder dec(store, "dec", cfg, rng);
  Tape tape;
  const Var h = tape.constant(random_matrix(rng, 1, 8));
  const Var a = tape.constant(random_matrix(rng, 1, 8));
  const Matrix m0 = dec.decode(tape, h, a, tape.constant(Matrix::Zero(1, 2))).mu.value();
  const Matrix m0b = dec.decode(tape, h, a, tape.constant(Matrix::Zero(1, 2))).mu.value();
  const Matrix m1 = dec.decode(tape, h, a, tape.constant(Matrix::Ones(1, 2))).mu.value();
  CHECK(m0 == m0b);
  CHECK((m0 - m1).norm() > 1e-9);
}

TEST_CASE("WTA regression closed forms") {
  Tape tape;
  Matrix Y(12, 2);
  std::mt19937_64 rng(3);
  Y = random_matrix(rng, 12, 2, -20, 20);
  // Single mode, exact mean, b = 0.5: log(2 * 0.5) = 0 and zero residual.
  const MixturePrediction one = make_pred(tape, Y, Matrix::Constant(12, 2, 0.5), Matrix::Zero(1, 1), 1);
  CHECK(wta_regression_loss(one, Y).scalar() == 0.0);

  // Mode 0 exact, mode 1 offset by 10 m.
  Matrix mu(24, 2);
  mu << Y, (Y.array() + 10.0).matrix();
  Matrix b = Matrix::Constant(24, 2, 0.5);
  b.bottomRows(12).setConstant(7.0);
  const MixturePrediction two = make_pred(tape, mu, b, Matrix::Zero(1, 2), 2);
  CHECK(wta_mode(mu, Y, 2) == 0);
  CHECK(wta_regression_loss(two, Y).scalar() == 0.0);
}

TEST_CASE("WTA ties go to the lowest mode") {
  Matrix Y = Matrix::Zero(3, 2);
  Matrix mu(9, 2);
  mu.setZero();
  mu.middleRows(0, 3).setConstant(1.0);
  mu.middleRows(3, 3).setConstant(-1.0);
  mu.middleRows(6, 3).setConstant(1.0);
  CHECK(wta_mode(mu, Y, 3) == 0);
}

TEST_CASE("WTA loss matches a scalar NLL calculator") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int M = 1 + trial % 6;
    const int T = 1 + trial % 12;
    const Matrix mu = random_matrix(rng, M * T, 2, -10, 10);
    const Matrix b = random_matrix(rng, M * T, 2, 1e-3, 5.0);
    const Matrix Y = random_matrix(rng, T, 2, -10, 10);
    Tape tape;
    const MixturePrediction p = make_pred(tape, mu, b, random_matrix(rng, 1, M), M);
    const int m = scalar_wta(mu, Y, M);
    CHECK(wta_mode(mu, Y, M) == m);
    CHECK(std::abs(wta_regression_loss(p, Y).scalar() - scalar_nll(mu, b, Y, m)) <= 1e-9);
    for (int other = 0; other < M; ++other) {
      CHECK(std::abs(wta_regression_loss(p, Y, other).scalar() - scalar_nll(mu, b, Y, other)) <= 1e-9);
    }
  }
}

TEST_CASE("WTA winner is invariant to scaling b") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix mu = random_matrix(rng, 6 * 12, 2, -10, 10);
    const Matrix b = random_matrix(rng, 6 * 12, 2, 0.1, 3.0);
    const Matrix Y = random_matrix(rng, 12, 2, -10, 10);
    Tape tape;
    const MixturePrediction p = make_pred(tape, mu, b, Matrix::Zero(1, 6), 6);
    const MixturePrediction q = make_pred(tape, mu, b * 37.5, Matrix::Zero(1, 6), 6);
    // The selected mode is the same, so the losses differ exactly as the closed form predicts.
    const int m = wta_mode(mu, Y, 6);
    CHECK(std::abs(wta_regression_loss(q, Y).scalar() - scalar_nll(mu, b * 37.5, Y, m)) < 1e-9);
    CHECK(std::abs(wta_regression_loss(p, Y).scalar() - scalar_nll(mu, b, Y, m)) < 1e-9);
  }
}

TEST_CASE("Laplace NLL is monotone in b on either side of the residual") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double e = u(rng);
    Matrix Y(1, 2);
    Y << e, 0.0;
    const auto nll = [&](double b) {
      Tape tape;
      Matrix bb(1, 2);
      bb << b, 1.0;
      return wta_regression_loss(make_pred(tape, Matrix::Zero(1, 2), bb, Matrix::Zero(1, 1), 1), Y).scalar();
    };
    // Below the residual NLL falls as b grows; above it NLL rises.
    CHECK(nll(0.5 * e) > nll(0.9 * e));
    CHECK(nll(1.1 * e) < nll(2.0 * e));
    CHECK(nll(e) <= nll(0.99 * e));
    CHECK(nll(e) <= nll(1.01 * e));
  }
}

TEST_CASE("classification loss closed forms") {
  Tape tape;
  const Matrix Y = Matrix::Ones(4, 2);
  const Matrix mu = Matrix::Zero(6 * 4, 2);
  const MixturePrediction uniform = make_pred(tape, mu, Matrix::Ones(24, 2), Matrix::Zero(1, 6), 6);
  for (double t : soft_targets(mu, Y, 6)) CHECK(t == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(classification_loss(uniform, Y).scalar() == doctest::Approx(std::log(6.0)).epsilon(1e-12));

  // One mode exact at the final step, the others 100 m away.
  Matrix far = Matrix::Constant(24, 2, 100.0 / std::sqrt(2.0) + 1.0);
  far.middleRows(8, 4) = Matrix::Ones(4, 2);
  const auto targets = soft_targets(far, Y, 6);
  const auto oracle = scalar_soft_targets(far, Y, 6, 1.0);
  for (std::size_t m = 0; m < 6; ++m) CHECK(std::abs(targets[m] - oracle[m]) <= 1e-12);
  CHECK(targets[2] == doctest::Approx(1.0).epsilon(1e-12));

  // pi_hat == pi: loss equals the entropy of pi.
  std::mt19937_64 rng(7);
  const Matrix mu2 = random_matrix(rng, 24, 2, -2, 2);
  const auto pi = soft_targets(mu2, Y, 6);
  Matrix logits(1, 6);
  double entropy = 0.0;
  for (int m = 0; m < 6; ++m) {
    logits(0, m) = std::log(pi[static_cast<std::size_t>(m)]);
    entropy -= pi[static_cast<std::size_t>(m)] * std::log(pi[static_cast<std::size_t>(m)]);
  }
  const MixturePrediction matched = make_pred(tape, mu2, Matrix::Ones(24, 2), logits, 6);
  CHECK(classification_loss(matched, Y).scalar() == doctest::Approx(entropy).epsilon(1e-12));
}

TEST_CASE("classification loss matches a scalar calculator") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int M = 1 + trial % 6;
    const int T = 1 + trial % 12;
    const double tau = 0.5 + (trial % 4) * 0.5;
    const Matrix mu = random_matrix(rng, M * T, 2, -5, 5);
    const Matrix Y = random_matrix(rng, T, 2, -5, 5);
    const Matrix logits = random_matrix(rng, 1, M, -3, 3);
    Tape tape;
    const MixturePrediction p = make_pred(tape, mu, Matrix::Ones(M * T, 2), logits, M);
    const auto target = scalar_soft_targets(mu, Y, M, tau);
    CHECK(std::abs(classification_loss(p, Y, tau).scalar() - scalar_cross_entropy(target, logits)) <= 1e-9);
  }
}

TEST_CASE("soft targets carry no gradient") {
  Tape tape;
  std::mt19937_64 rng(9);
  const Matrix Y = random_matrix(rng, 3, 2);
  MixturePrediction p = make_pred(tape, Matrix::Zero(6, 2), Matrix::Ones(6, 2), Matrix::Zero(1, 2), 2);
  const Var mu = tape.variable(random_matrix(rng, 6, 2));
  p.mu = mu;
  tape.backward(classification_loss(p, Y));
  CHECK(mu.grad().isZero());
}

TEST_CASE("stage-1 objective") {
  CHECK(stage1_loss(0.2, 1.0, 0.5, 10.0) == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(stage1_loss(0.0, 0.0, 0.0) == 0.0);
  CHECK(stage1_loss(0.2, 1.0, 0.5) == doctest::Approx(3.5));
  Tape tape;
  const Var v = stage1_loss(tape.constant(Matrix::Constant(1, 1, 0.2)), tape.constant(Matrix::Constant(1, 1, 1.0)),
                            tape.constant(Matrix::Constant(1, 1, 0.5)), 10.0);
  CHECK(v.scalar() == doctest::Approx(3.5).epsilon(1e-15));
  for (double l1 : {8.0, 9.0, 11.0, 12.0}) CHECK(stage1_loss(0.2, 1.0, 0.5, l1) == doctest::Approx(l1 * 0.2 + 1.5));
}

TEST_CASE("loss gradients match central differences with the winner fixed") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 25; ++trial) {
    const int M = 2 + trial % 5;
    const int T = 2 + trial % 6;
    const Matrix mu = random_matrix(rng, M * T, 2, -5, 5);
    const Matrix b = random_matrix(rng, M * T, 2, 0.2, 3.0);
    const Matrix logits = random_matrix(rng, 1, M);
    const Matrix Y = random_matrix(rng, T, 2, -5, 5);
    const int winner = wta_mode(mu, Y, M);
    const auto targets = soft_targets(mu, Y, M);
    const double reg_err = testing::max_relative_error(
        [&](Tape&, const std::vector<Var>& v) { return wta_regression_loss(from_vars(v, M), Y, winner); },
        {mu, b, logits});
    const double cls_err = testing::max_relative_error(
        [&](Tape&, const std::vector<Var>& v) { return classification_loss(from_vars(v, M).log_pi, targets); },
        {mu, b, logits});
    CHECK(reg_err < 1e-3);
    CHECK(cls_err < 1e-3);
  }
}

TEST_CASE("decoder gradients match central differences") {
  ModelConfig cfg;
  cfg.hidden = 4;
  cfg.modes = 3;
  cfg.future_steps = 4;
  nn::ParamStore store;
  std::mt19937_64 rng(11);
  const MdnDecoder dec(store, "dec", cfg, rng);
  const Matrix h = random_matrix(rng, 1, 4);
  const Matrix a = random_matrix(rng, 1, 4);
  const Matrix z = random_matrix(rng, 1, 2);
  const Matrix Y = random_matrix(rng, 4, 2, -3, 3);
  int winner = 0;
  std::vector<double> targets;
  {
    Tape tape;
    const MixturePrediction p = dec.decode(tape, tape.constant(h), tape.constant(a), tape.constant(z));
    winner = wta_mode(p.mu.value(), Y, 3);
    targets = soft_targets(p.mu.value(), Y, 3);
  }
  const double err = testing::max_param_relative_error(store, [&](Tape& tape) {
    const MixturePrediction p = dec.decode(tape, tape.constant(h), tape.constant(a), tape.constant(z));
    return ad::add(wta_regression_loss(p, Y, winner), classification_loss(p.log_pi, targets));
  });
  CHECK(err < 1e-3);
}
