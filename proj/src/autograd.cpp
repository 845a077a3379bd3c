#include "laformer/autograd.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace laformer::ad {

const Matrix& Var::value() const { return tape_->value_of(id_); }
Matrix Var::grad() const { return tape_->grad_of(id_); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Var v = push(p.value, true, nullptr);
  nodes_[v.id()].param = &p;
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::push(Matrix value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

Matrix Tape::grad_of(int id) const {
  const Node& n = nodes_[id];
  if (!n.has_grad || n.grad.size() != n.value.size()) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& out) {
  if (out.rows() != 1 || out.cols() != 1) throw std::invalid_argument("backward() needs a scalar output");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(out, Matrix::Ones(1, 1));
  for (int i = out.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.param != nullptr) n.param->grad += n.grad;
    if (n.backward) {
      // Intermediate gradients are consumed here and not kept.
      const Matrix g = std::move(n.grad);
      n.grad.resize(0, 0);
      n.backward(*this, g);
    }
  }
}

namespace {

Tape& tape_of(const Var& a) { return *a.tape(); }

bool any_grad(const Var& a) { return a.tape()->requires_grad(a); }
bool any_grad(const Var& a, const Var& b) { return any_grad(a) || any_grad(b); }

template <typename F>
Var unary(const Var& a, Matrix value, F&& local_grad) {
  Tape& t = tape_of(a);
  return t.push(std::move(value), any_grad(a),
                [a, lg = std::forward<F>(local_grad)](Tape& tp, const Matrix& g) { tp.accumulate(a, lg(g)); });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  assert(a.cols() == b.rows());
  Tape& t = tape_of(a);
  return t.push(a.value() * b.value(), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  assert(a.cols() == b.cols());
  Tape& t = tape_of(a);
  return t.push(a.value() * b.value().transpose(), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.value());
    if (tp.requires_grad(b)) tp.accumulate(b, g.transpose() * a.value());
  });
}

Var add(const Var& a, const Var& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Tape& t = tape_of(a);
  return t.push(a.value() + b.value(), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Tape& t = tape_of(a);
  return t.push(a.value() - b.value(), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, -g);
  });
}

Var add_row(const Var& a, const Var& row_v) {
  assert(row_v.rows() == 1 && row_v.cols() == a.cols());
  Tape& t = tape_of(a);
  Matrix v = a.value();
  v.rowwise() += row_v.value().row(0);
  return t.push(std::move(v), any_grad(a, row_v), [a, row_v](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(row_v)) tp.accumulate(row_v, g.colwise().sum());
  });
}

Var mul(const Var& a, const Var& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Tape& t = tape_of(a);
  return t.push(a.value().cwiseProduct(b.value()), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var div(const Var& a, const Var& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Tape& t = tape_of(a);
  return t.push(a.value().cwiseQuotient(b.value()), any_grad(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseQuotient(b.value()));
    if (tp.requires_grad(b)) {
      const Matrix& bv = b.value();
      tp.accumulate(b, -g.cwiseProduct(a.value()).cwiseQuotient(bv.cwiseProduct(bv)));
    }
  });
}

Var mul_col(const Var& a, const Var& s) {
  assert(s.cols() == 1 && s.rows() == a.rows());
  Tape& t = tape_of(a);
  Matrix v = a.value().array().colwise() * s.value().col(0).array();
  return t.push(std::move(v), any_grad(a, s), [a, s](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, (g.array().colwise() * s.value().col(0).array()).matrix());
    if (tp.requires_grad(s)) tp.accumulate(s, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

Var scale(const Var& a, double s) {
  return unary(a, a.value() * s, [s](const Matrix& g) { return Matrix(g * s); });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, (a.value().array() + s).matrix(), [](const Matrix& g) { return g; });
}

Var tanh(const Var& a) {
  Matrix y = a.value().array().tanh().matrix();
  return unary(a, y, [y](const Matrix& g) { return Matrix(g.array() * (1.0 - y.array().square())); });
}

Var sigmoid(const Var& a) {
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return unary(a, y, [y](const Matrix& g) { return Matrix(g.array() * y.array() * (1.0 - y.array())); });
}

Var relu(const Var& a) {
  Matrix x = a.value();
  Matrix y = x.cwiseMax(0.0);
  return unary(a, y, [x](const Matrix& g) { return Matrix((x.array() > 0.0).select(g.array(), 0.0)); });
}

Var softplus(const Var& a) {
  const Matrix& x = a.value();
  // log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
  Matrix y = x.unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  Matrix sig = (1.0 / (1.0 + (-x.array()).exp())).matrix();
  return unary(a, y, [sig](const Matrix& g) { return Matrix(g.cwiseProduct(sig)); });
}

Var exp(const Var& a) {
  Matrix y = a.value().array().exp().matrix();
  return unary(a, y, [y](const Matrix& g) { return Matrix(g.cwiseProduct(y)); });
}

Var log(const Var& a) {
  Matrix x = a.value();
  return unary(a, x.array().log().matrix(), [x](const Matrix& g) { return Matrix(g.cwiseQuotient(x)); });
}

Var abs(const Var& a) {
  Matrix x = a.value();
  return unary(a, x.cwiseAbs(), [x](const Matrix& g) {
    return Matrix(g.array() * x.array().unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }));
  });
}

Var cos(const Var& a) {
  Matrix x = a.value();
  return unary(a, x.array().cos().matrix(), [x](const Matrix& g) { return Matrix(-g.array() * x.array().sin()); });
}

namespace {

bool col_valid(const RowMask& mask, Eigen::Index c) { return mask.empty() || mask[static_cast<std::size_t>(c)]; }

}  // namespace

Var softmax_rows(const Var& a, const RowMask& col_mask) {
  const Matrix& x = a.value();
  assert(col_mask.empty() || static_cast<Eigen::Index>(col_mask.size()) == x.cols());
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (col_valid(col_mask, c)) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (col_valid(col_mask, c)) {
        y(r, c) = std::exp(x(r, c) - mx);
        z += y(r, c);
      }
    y.row(r) /= z;
  }
  return unary(a, y, [y](const Matrix& g) {
    // dx = y * (g - sum(g * y))
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(g);
    dx -= (y.array().colwise() * dot.array()).matrix();
    return dx;
  });
}

Var log_softmax_rows(const Var& a, const RowMask& col_mask) {
  const Matrix& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  Matrix p = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (col_valid(col_mask, c)) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (col_valid(col_mask, c)) z += std::exp(x(r, c) - mx);
    const double lse = mx + std::log(z);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (col_valid(col_mask, c)) {
        y(r, c) = x(r, c) - lse;
        p(r, c) = std::exp(y(r, c));
      }
  }
  return unary(a, y, [p, col_mask](const Matrix& g) {
    // dx_c = g_c - p_c * sum(g) over valid columns
    Matrix dx = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      double gs = 0.0;
      for (Eigen::Index c = 0; c < g.cols(); ++c)
        if (col_valid(col_mask, c)) gs += g(r, c);
      for (Eigen::Index c = 0; c < g.cols(); ++c)
        if (col_valid(col_mask, c)) dx(r, c) = g(r, c) - p(r, c) * gs;
    }
    return dx;
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  assert(!parts.empty());
  Tape& t = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    assert(p.rows() == rows);
    cols += p.cols();
    rg = rg || any_grad(p);
  }
  Matrix v(rows, cols);
  Eigen::Index c0 = 0;
  for (const auto& p : parts) {
    v.middleCols(c0, p.cols()) = p.value();
    c0 += p.cols();
  }
  return t.push(std::move(v), rg, [parts](Tape& tp, const Matrix& g) {
    Eigen::Index c = 0;
    for (const auto& p : parts) {
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  assert(!parts.empty());
  Tape& t = tape_of(parts.front());
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    assert(p.cols() == cols);
    rows += p.rows();
    rg = rg || any_grad(p);
  }
  Matrix v(rows, cols);
  Eigen::Index r0 = 0;
  for (const auto& p : parts) {
    v.middleRows(r0, p.rows()) = p.value();
    r0 += p.rows();
  }
  return t.push(std::move(v), rg, [parts](Tape& tp, const Matrix& g) {
    Eigen::Index r = 0;
    for (const auto& p : parts) {
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

Var slice(const Var& a, Eigen::Index r, Eigen::Index c, Eigen::Index nr, Eigen::Index nc) {
  const Eigen::Index ar = a.rows(), ac = a.cols();
  return unary(a, a.value().block(r, c, nr, nc), [=](const Matrix& g) {
    Matrix dx = Matrix::Zero(ar, ac);
    dx.block(r, c, nr, nc) = g;
    return dx;
  });
}

Var row(const Var& a, Eigen::Index r) { return slice(a, r, 0, 1, a.cols()); }

Var gather_rows(const Var& a, const std::vector<int>& index) {
  Matrix v(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  const Eigen::Index ar = a.rows(), ac = a.cols();
  return unary(a, std::move(v), [index, ar, ac](const Matrix& g) {
    Matrix dx = Matrix::Zero(ar, ac);
    for (std::size_t i = 0; i < index.size(); ++i) dx.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    return dx;
  });
}

Var tile_rows(const Var& a, int n) {
  const Eigen::Index ar = a.rows();
  Matrix v = a.value().replicate(n, 1);
  return unary(a, std::move(v), [ar, n](const Matrix& g) {
    Matrix dx = g.topRows(ar);
    for (int i = 1; i < n; ++i) dx += g.middleRows(i * ar, ar);
    return dx;
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  assert(rows * cols == a.value().size());
  const Eigen::Index ar = a.rows(), ac = a.cols();
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor src = a.value();
  Matrix v = Eigen::Map<RowMajor>(src.data(), rows, cols);
  return unary(a, std::move(v), [ar, ac](const Matrix& g) {
    RowMajor gs = g;
    return Matrix(Eigen::Map<RowMajor>(gs.data(), ar, ac));
  });
}

Var sum(const Var& a) {
  const Eigen::Index ar = a.rows(), ac = a.cols();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return unary(a, std::move(v), [ar, ac](const Matrix& g) { return Matrix(Matrix::Constant(ar, ac, g(0, 0))); });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sum(const Var& a) {
  const Eigen::Index ac = a.cols();
  return unary(a, a.value().rowwise().sum(), [ac](const Matrix& g) { return Matrix(g.replicate(1, ac)); });
}

Var row_norm(const Var& a) {
  Matrix x = a.value();
  Matrix n = x.rowwise().norm();
  return unary(a, n, [x, n](const Matrix& g) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      if (n(r, 0) > 0.0) dx.row(r) = x.row(r) * (g(r, 0) / n(r, 0));
    return dx;
  });
}

Var at(const Var& a, Eigen::Index r, Eigen::Index c) { return slice(a, r, c, 1, 1); }

}  // namespace laformer::ad
