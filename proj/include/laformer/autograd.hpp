#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Values are Eigen
// matrices; vectors are 1 x n rows and scalars are 1 x 1. Parameters live
// outside the tape and receive accumulated gradients on Tape::backward().

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace laformer::ad {

using Matrix = Eigen::MatrixXd;
using RowMask = std::vector<bool>;

/// Trainable matrix with its gradient accumulator.
struct Parameter {
  Matrix value;
  Matrix grad;

  Parameter() = default;
  explicit Parameter(Matrix v) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  /// Gradient after Tape::backward(); zero matrix when the node was not reached.
  Matrix grad() const;
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that never needs a gradient.
  Var constant(Matrix value);
  /// Input whose gradient is wanted (read via Var::grad()).
  Var variable(Matrix value);
  /// Parameter leaf; repeated calls with the same parameter reuse one node.
  Var param(Parameter& p);

  /// Seeds d(out)/d(out) = 1 for a 1 x 1 output and propagates to every input.
  /// Parameter gradients are added into Parameter::grad.
  void backward(const Var& out);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;
  Var push(Matrix value, bool requires_grad, BackwardFn fn);
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  void accumulate(const Var& v, const Matrix& g);
  const Matrix& value_of(int id) const { return nodes_[id].value; }
  Matrix grad_of(int id) const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// ---- elementwise / linear algebra ----
Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Adds a 1 x c row to every row of a.
Var add_row(const Var& a, const Var& row);
/// Hadamard product.
Var mul(const Var& a, const Var& b);
/// Elementwise a / b.
Var div(const Var& a, const Var& b);
/// Multiplies every row i of a by the scalar in column vector s (n x 1).
Var mul_col(const Var& a, const Var& s);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var cos(const Var& a);

// ---- softmax family; masked entries get probability exactly 0 ----
/// Row-wise softmax over the columns allowed by col_mask (empty mask = all).
/// Rows with no valid column produce all zeros.
Var softmax_rows(const Var& a, const RowMask& col_mask = {});
/// Row-wise log-softmax; masked columns are set to 0 and receive no gradient.
Var log_softmax_rows(const Var& a, const RowMask& col_mask = {});

// ---- shape ops ----
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols);
Var row(const Var& a, Eigen::Index r);
Var gather_rows(const Var& a, const std::vector<int>& index);
/// Stacks n copies of a vertically.
Var tile_rows(const Var& a, int n);
/// Row-major reshape.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);

// ---- reductions ----
Var sum(const Var& a);
Var mean(const Var& a);
/// n x c -> n x 1
Var row_sum(const Var& a);
/// n x 2 (any width) -> n x 1 Euclidean norms; gradient is 0 at the origin.
Var row_norm(const Var& a);
/// Element (r, c) as a 1 x 1 node.
Var at(const Var& a, Eigen::Index r, Eigen::Index c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace laformer::ad
