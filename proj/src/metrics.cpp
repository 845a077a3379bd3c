#include "laformer/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#include "laformer/errors.hpp"

namespace laformer {

using ad::Matrix;
using json = nlohmann::json;

json MetricsReport::to_json() const {
  return json{{"minADE", min_ade}, {"minFDE", min_fde}, {"MR", miss_rate}, {"K", K}, {"n_scenes", n_scenes}};
}

std::vector<int> top_modes(const std::vector<double>& probs, int K) {
  if (K < 1 || K > static_cast<int>(probs.size()))
    throw Error(ErrorKind::kConfig, "K=" + std::to_string(K) + " must be in [1, M=" + std::to_string(probs.size()) + "]");
  std::vector<int> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  idx.resize(static_cast<std::size_t>(K));
  return idx;
}

SceneErrors scene_errors(const Matrix& trajectories, const Matrix& Y, const std::vector<int>& modes) {
  const Eigen::Index T = Y.rows();
  SceneErrors best{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (int m : modes) {
    const Matrix diff = trajectories.middleRows(m * T, T) - Y;
    const double ade = diff.rowwise().norm().mean();
    const double fde = diff.row(T - 1).norm();
    best.ade = std::min(best.ade, ade);
    best.fde = std::min(best.fde, fde);
  }
  return best;
}

MetricsReport aggregate(const std::vector<SceneErrors>& errors, int K) {
  MetricsReport r;
  r.K = K;
  r.n_scenes = static_cast<int>(errors.size());
  if (errors.empty()) return r;
  int misses = 0;
  for (const SceneErrors& e : errors) {
    r.min_ade += e.ade;
    r.min_fde += e.fde;
    if (e.fde > kMissThreshold) ++misses;
  }
  const double n = static_cast<double>(errors.size());
  r.min_ade /= n;
  r.min_fde /= n;
  r.miss_rate = misses / n;
  return r;
}

MetricsReport compute_metrics(const std::vector<Matrix>& trajectories, const std::vector<std::vector<double>>& probs,
                              const std::vector<Matrix>& futures, int K) {
  if (trajectories.size() != probs.size() || trajectories.size() != futures.size())
    throw Error(ErrorKind::kData, "metric inputs disagree on the number of scenes");
  std::vector<SceneErrors> errors;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    if (trajectories[i].rows() != static_cast<Eigen::Index>(probs[i].size()) * futures[i].rows())
      throw Error(ErrorKind::kData, "trajectory rows do not match M * t_f");
    errors.push_back(scene_errors(trajectories[i], futures[i], top_modes(probs[i], K)));
  }
  return aggregate(errors, K);
}

ScenePrediction predict_normalized(const LaformerModel& model, const ProcessedScene& scene, int stage, int k) {
  ad::Tape tape;
  const ForwardResult r = model.forward(tape, scene, stage, k);
  ScenePrediction p;
  p.trajectories = r.trajectories().value();
  p.anchors = r.mixture.mu.value();
  const Matrix& pi = r.mixture.pi.value();
  p.probs.assign(pi.data(), pi.data() + pi.size());
  if (r.candidates) {
    p.candidates = r.candidates->indices;
    p.candidate_scores = r.candidates->scores;
    p.scored_steps = r.scores->steps;
  }
  return p;
}

namespace {

template <typename Fn>
void for_each_scene(std::size_t n, int threads, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> failures(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace

MetricsReport evaluate(const LaformerModel& model, const std::vector<ProcessedScene>& scenes, int stage, int k, int K,
                       int threads) {
  if (K < 1 || K > model.config().modes)
    throw Error(ErrorKind::kConfig, "K=" + std::to_string(K) + " exceeds the model's M=" +
                                        std::to_string(model.config().modes));
  std::vector<SceneErrors> errors(scenes.size());
  for_each_scene(scenes.size(), threads, [&](std::size_t i) {
    const ScenePrediction p = predict_normalized(model, scenes[i], stage, k);
    errors[i] = scene_errors(p.trajectories, scenes[i].future, top_modes(p.probs, K));
  });
  return aggregate(errors, K);
}

MetricsReport evaluate(const Checkpoint& ckpt, const std::vector<ProcessedScene>& scenes, int K) {
  if (!ckpt.model) throw Error(ErrorKind::kConfig, "checkpoint has no model");
  int threads = 1;
  if (!ckpt.config.deterministic)
    threads = ckpt.config.threads > 0 ? ckpt.config.threads : static_cast<int>(std::thread::hardware_concurrency());
  return evaluate(*ckpt.model, scenes, std::max(ckpt.trained_stage(), 1), ckpt.k(), K, threads);
}

double candidate_recall(const LaformerModel& model, const std::vector<ProcessedScene>& scenes, int stage, int k) {
  long hits = 0;
  long total = 0;
  for (const ProcessedScene& s : scenes) {
    const ScenePrediction p = predict_normalized(model, s, stage, k);
    for (std::size_t r = 0; r < p.scored_steps.size(); ++r) {
      const int label = s.labels.gt_segment_index.at(static_cast<std::size_t>(p.scored_steps[r]));
      const auto& c = p.candidates[r];
      hits += std::find(c.begin(), c.end(), label) != c.end() ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace laformer
