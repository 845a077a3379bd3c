#include "laformer/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace laformer::nn {

Parameter* ParamStore::create(const std::string& path, int rows, int cols, std::mt19937_64& rng) {
  if (params_.count(path)) throw std::logic_error("duplicate parameter " + path);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = u(rng);
  auto [it, _] = params_.emplace(path, Parameter(std::move(m)));
  return &it->second;
}

Parameter* ParamStore::create_zero(const std::string& path, int rows, int cols) {
  if (params_.count(path)) throw std::logic_error("duplicate parameter " + path);
  auto [it, _] = params_.emplace(path, Parameter(Matrix::Zero(rows, cols)));
  return &it->second;
}

Parameter& ParamStore::at(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end()) throw std::out_of_range("no parameter " + path);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw std::out_of_range("no parameter " + path);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

Linear::Linear(ParamStore& store, const std::string& path, int in, int out, std::mt19937_64& rng, bool zero_init)
    : in_(in), out_(out) {
  w_ = zero_init ? store.create_zero(path + "/w", in, out) : store.create(path + "/w", in, out, rng);
  b_ = store.create_zero(path + "/b", 1, out);
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  return ad::add_row(ad::matmul(x, tape.param(*w_)), tape.param(*b_));
}

Mlp2::Mlp2(ParamStore& store, const std::string& path, int in, int hidden, int out, std::mt19937_64& rng,
           bool zero_last)
    : l1_(store, path + "/l1", in, hidden, rng), l2_(store, path + "/l2", hidden, out, rng, zero_last) {}

Var Mlp2::operator()(Tape& tape, const Var& x) const { return l2_(tape, ad::relu(l1_(tape, x))); }

GruCell::GruCell(ParamStore& store, const std::string& path, int in, int hidden, std::mt19937_64& rng)
    : hidden_(hidden) {
  w_x_ = store.create(path + "/w_x", in, 3 * hidden, rng);
  w_h_ = store.create(path + "/w_h", hidden, 3 * hidden, rng);
  b_x_ = store.create_zero(path + "/b_x", 1, 3 * hidden);
  b_h_ = store.create_zero(path + "/b_h", 1, 3 * hidden);
}

Var GruCell::step(Tape& tape, const Var& x, const Var& h, const Var* step_mask) const {
  const int H = hidden_;
  const Eigen::Index n = x.rows();
  Var gx = ad::add_row(ad::matmul(x, tape.param(*w_x_)), tape.param(*b_x_));
  Var gh = ad::add_row(ad::matmul(h, tape.param(*w_h_)), tape.param(*b_h_));
  Var rz = ad::sigmoid(ad::add(ad::slice(gx, 0, 0, n, 2 * H), ad::slice(gh, 0, 0, n, 2 * H)));
  Var r = ad::slice(rz, 0, 0, n, H);
  Var z = ad::slice(rz, 0, H, n, H);
  Var cand = ad::tanh(ad::add(ad::slice(gx, 0, 2 * H, n, H), ad::mul(r, ad::slice(gh, 0, 2 * H, n, H))));
  // h' = cand + z * (h - cand)
  Var next = ad::add(cand, ad::mul(z, ad::sub(h, cand)));
  if (step_mask == nullptr) return next;
  // h + m * (h' - h)
  return ad::add(h, ad::mul_col(ad::sub(next, h), *step_mask));
}

Var GruCell::run(Tape& tape, const std::vector<Var>& inputs, const std::vector<Var>& step_masks) const {
  if (inputs.empty()) throw std::invalid_argument("GRU needs at least one step");
  Var h = tape.constant(Matrix::Zero(inputs.front().rows(), hidden_));
  for (std::size_t s = 0; s < inputs.size(); ++s)
    h = step(tape, inputs[s], h, step_masks.empty() ? nullptr : &step_masks[s]);
  return h;
}

Attention::Attention(ParamStore& store, const std::string& path, int query_in, int kv_in, int d_model, int heads,
                     std::mt19937_64& rng)
    : q_(store, path + "/q", query_in, d_model, rng),
      k_(store, path + "/k", kv_in, d_model, rng),
      v_(store, path + "/v", kv_in, d_model, rng),
      d_model_(d_model),
      heads_(heads) {
  if (heads < 1 || d_model % heads != 0) throw std::invalid_argument("d_model must be divisible by heads");
}

AttentionOutput Attention::operator()(Tape& tape, const Var& queries, const Var& keys_values,
                                      const RowMask& key_mask) const {
  AttentionOutput result;
  const Var q = q_(tape, queries);
  const Var k = k_(tape, keys_values);
  const Var v = v_(tape, keys_values);
  const int dh = d_model_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> head_out;
  for (int hd = 0; hd < heads_; ++hd) {
    Var qh = heads_ == 1 ? q : ad::slice(q, 0, hd * dh, q.rows(), dh);
    Var kh = heads_ == 1 ? k : ad::slice(k, 0, hd * dh, k.rows(), dh);
    Var vh = heads_ == 1 ? v : ad::slice(v, 0, hd * dh, v.rows(), dh);
    Var w = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt), key_mask);
    result.weights.push_back(w.value());
    head_out.push_back(ad::matmul(w, vh));
  }
  result.out = heads_ == 1 ? head_out.front() : ad::concat_cols(head_out);
  return result;
}

}  // namespace laformer::nn
