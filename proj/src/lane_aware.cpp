#include "laformer/lane_aware.hpp"

#include <algorithm>
#include <numeric>

#include "laformer/errors.hpp"

namespace laformer {

using ad::Matrix;
using ad::Tape;
using ad::Var;

std::vector<std::vector<int>> top_k_indices(const Matrix& scores, const ad::RowMask& lane_mask, int k) {
  std::vector<std::vector<int>> out;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    std::vector<int> idx;
    for (int j = 0; j < static_cast<int>(scores.cols()); ++j)
      if (lane_mask.empty() || lane_mask[static_cast<std::size_t>(j)]) idx.push_back(j);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), [&](int a, int b) {
      if (scores(r, a) != scores(r, b)) return scores(r, a) > scores(r, b);
      return a < b;
    });
    idx.resize(take);
    idx.resize(static_cast<std::size_t>(k), -1);
    out.push_back(std::move(idx));
  }
  return out;
}

Var lane_loss(const LaneScores& scores, const std::vector<int>& labels) {
  const Matrix& lp = scores.log_probs.value();
  if (static_cast<Eigen::Index>(labels.size()) != lp.rows())
    throw Error(ErrorKind::kInvalidLabel, "one label per scored step is required");
  std::vector<int> flat;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int j = labels[r];
    if (j < 0 || j >= lp.cols() || (!scores.lane_mask.empty() && !scores.lane_mask[static_cast<std::size_t>(j)]))
      throw Error(ErrorKind::kInvalidLabel, "label " + std::to_string(j) + " is not a valid lane");
    flat.push_back(static_cast<int>(r) * static_cast<int>(lp.cols()) + j);
  }
  Var column = ad::reshape(scores.log_probs, lp.size(), 1);
  return ad::scale(ad::sum(ad::gather_rows(column, flat)), -1.0);
}

LaneAware::LaneAware(nn::ParamStore& store, const std::string& prefix, const ModelConfig& config,
                     std::mt19937_64& rng)
    : hidden_(config.hidden),
      future_steps_(config.future_steps),
      score_att_(store, prefix + "/score_att", config.hidden, config.hidden, config.hidden, config.heads, rng),
      phi_(store, prefix + "/phi", 3 * config.hidden, config.hidden, 1, rng),
      fuse_att_(store, prefix + "/fuse_att", config.hidden, config.hidden + 1, config.hidden, config.heads, rng) {
  step_embedding_ = store.create(prefix + "/step_embedding", config.future_steps, config.hidden, rng);
}

LaneScores LaneAware::score_lanes(Tape& tape, const Var& h_target, const Var& H, const ad::RowMask& agent_mask,
                                  const Var& C, const ad::RowMask& lane_mask, const std::vector<int>& steps) const {
  if (!C.valid() || std::none_of(lane_mask.begin(), lane_mask.end(), [](bool b) { return b; }))
    throw Error(ErrorKind::kNoLanes, "lane scoring needs at least one valid lane");
  const int n_lanes = static_cast<int>(C.rows());
  const int T = static_cast<int>(steps.size());

  // Row t * N + j holds lane j at scored step t.
  std::vector<int> step_rows;
  step_rows.reserve(static_cast<std::size_t>(T * n_lanes));
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < n_lanes; ++j) step_rows.push_back(steps[static_cast<std::size_t>(t)]);
  Var query = ad::add(ad::tile_rows(C, T), ad::gather_rows(tape.param(*step_embedding_), step_rows));
  Var attended = score_att_(tape, query, H, agent_mask).out;
  Var phi_in = ad::concat_cols({ad::tile_rows(h_target, T * n_lanes), query, attended});
  Var logits = ad::reshape(phi_(tape, phi_in), T, n_lanes);

  LaneScores s;
  s.logits = logits;
  s.log_probs = ad::log_softmax_rows(logits, lane_mask);
  s.probs = ad::softmax_rows(logits, lane_mask);
  s.steps = steps;
  s.lane_mask = lane_mask;
  return s;
}

CandidateSet LaneAware::select_top_k(Tape& /*tape*/, const LaneScores& scores, const Var& C, int k) const {
  const Matrix& p = scores.probs.value();
  const auto top = top_k_indices(p, scores.lane_mask, k);
  int fallback = 0;
  while (!scores.lane_mask[static_cast<std::size_t>(fallback)]) ++fallback;

  CandidateSet cand;
  std::vector<int> lane_rows, score_rows;
  for (std::size_t r = 0; r < top.size(); ++r) {
    std::vector<int> idx;
    std::vector<double> sc;
    for (int j : top[r]) {
      const bool pad = j < 0;
      const int lane = pad ? fallback : j;
      idx.push_back(j);
      sc.push_back(pad ? 0.0 : p(static_cast<Eigen::Index>(r), lane));
      lane_rows.push_back(lane);
      score_rows.push_back(static_cast<int>(r) * static_cast<int>(p.cols()) + lane);
      cand.entry_mask.push_back(!pad);
    }
    cand.indices.push_back(std::move(idx));
    cand.scores.push_back(std::move(sc));
  }
  Var flat_scores = ad::reshape(scores.probs, p.size(), 1);
  cand.entries = ad::concat_cols({ad::gather_rows(C, lane_rows), ad::gather_rows(flat_scores, score_rows)});
  return cand;
}

Var LaneAware::fuse_candidates(Tape& tape, const Var& h_target, const CandidateSet& candidates,
                               std::vector<Matrix>* weights) const {
  auto att = fuse_att_(tape, h_target, candidates.entries, candidates.entry_mask);
  if (weights != nullptr) *weights = std::move(att.weights);
  return att.out;
}

}  // namespace laformer
