#pragma once

// Layers built on the autodiff tape. Parameters are owned by a ParamStore and
// addressed by slash-separated paths ("encoder/agent_gru/w_x"), which is also
// how checkpoints key them.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "laformer/autograd.hpp"

namespace laformer::nn {

using ad::Matrix;
using ad::Parameter;
using ad::RowMask;
using ad::Tape;
using ad::Var;

class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  /// Glorot-uniform initialised matrix; throws if the path already exists.
  Parameter* create(const std::string& path, int rows, int cols, std::mt19937_64& rng);
  Parameter* create_zero(const std::string& path, int rows, int cols);

  Parameter& at(const std::string& path);
  const Parameter& at(const std::string& path) const;
  bool contains(const std::string& path) const { return params_.count(path) > 0; }

  std::map<std::string, Parameter>& all() { return params_; }
  const std::map<std::string, Parameter>& all() const { return params_; }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::map<std::string, Parameter> params_;
};

/// y = x W + b
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& path, int in, int out, std::mt19937_64& rng, bool zero_init = false);
  Var operator()(Tape& tape, const Var& x) const;
  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  int in_ = 0;
  int out_ = 0;
};

/// Linear -> ReLU -> Linear.
class Mlp2 {
 public:
  Mlp2() = default;
  Mlp2(ParamStore& store, const std::string& path, int in, int hidden, int out, std::mt19937_64& rng,
       bool zero_last = false);
  Var operator()(Tape& tape, const Var& x) const;

 private:
  Linear l1_;
  Linear l2_;
};

/// GRU cell with the reset gate applied to the projected hidden state.
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamStore& store, const std::string& path, int in, int hidden, std::mt19937_64& rng);

  /// One step for a batch of rows. `step_mask` (n x 1, 0/1) keeps the old state where 0; may be invalid.
  Var step(Tape& tape, const Var& x, const Var& h, const Var* step_mask = nullptr) const;
  /// Runs over `inputs` starting from zeros and returns the final state (n x hidden).
  Var run(Tape& tape, const std::vector<Var>& inputs, const std::vector<Var>& step_masks) const;
  int hidden() const { return hidden_; }

 private:
  Parameter* w_x_ = nullptr;  // in x 3H   (reset | update | candidate)
  Parameter* w_h_ = nullptr;  // H x 3H
  Parameter* b_x_ = nullptr;
  Parameter* b_h_ = nullptr;
  int hidden_ = 0;
};

struct AttentionOutput {
  Var out;                        // nq x d_model
  std::vector<Matrix> weights;    // per head, nq x nk (rows sum to 1 over valid keys)
};

/// Scaled dot-product attention with linear query/key/value projections and
/// `heads` equal slices of the model width. No output projection.
class Attention {
 public:
  Attention() = default;
  Attention(ParamStore& store, const std::string& path, int query_in, int kv_in, int d_model, int heads,
            std::mt19937_64& rng);
  /// Keys with key_mask[j] == false get weight 0; a query with no valid key yields zeros.
  AttentionOutput operator()(Tape& tape, const Var& queries, const Var& keys_values, const RowMask& key_mask) const;
  int d_model() const { return d_model_; }

 private:
  Linear q_;
  Linear k_;
  Linear v_;
  int d_model_ = 0;
  int heads_ = 1;
};

}  // namespace laformer::nn
