#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "grad_check.hpp"
#include "oracles.hpp"
#include "laformer/errors.hpp"
#include "laformer/export.hpp"
#include "laformer/harness.hpp"
#include "laformer/metrics.hpp"
#include "laformer/scenario_gen.hpp"
#include "laformer/sweep.hpp"

using namespace laformer;
using ad::Matrix;
using testing::random_matrix;
using namespace testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("laformer_harness_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  return p;
}

struct Data {
  std::vector<Scene> raw;
  std::vector<ProcessedScene> train;
  std::vector<ProcessedScene> val;
};

const Data& data() {
  static const Data d = [] {
    Data out;
    gen::GenConfig gc;
    gc.seed = 5;
    for (int i = 0; i < 70; ++i) out.raw.push_back(gen::generate_scene(gc, i));
    PreprocessOptions opt;
    opt.rotate_to_heading = true;
    for (int i = 0; i < 70; ++i) (i < 50 ? out.train : out.val).push_back(preprocess(out.raw[static_cast<std::size_t>(i)], opt, i));
    return out;
  }();
  return d;
}

TrainConfig tiny_config(Variant v = Variant::kFull) {
  TrainConfig c;
  c.variant = v;
  c.epochs = 1;
  c.batch_size = 8;
  c.hidden = 8;
  c.modes = 3;
  c.learning_rate = 3e-3;
  c.rotate_to_heading = true;
  return c;
}

ErrorKind error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kIo;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("training config JSON round trip and validation") {
  TrainConfig c = tiny_config(Variant::kSpatial);
  c.lambda1 = 8.0;
  c.seed = 77;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(TrainConfig{}.lambda1 == 10.0);
  CHECK(TrainConfig{}.lambda2 == 5.0);
  CHECK(TrainConfig{}.lambda3 == 2.0);

  CHECK(error_kind([] { TrainConfig::from_json({{"lr", 0.1}}); }) == ErrorKind::kConfig);
  CHECK(error_kind([] { TrainConfig::from_json({{"variant", "wide"}}); }) == ErrorKind::kConfig);
  CHECK(error_kind([] {
          TrainConfig t;
          t.stage = 3;
          t.validate();
        }) == ErrorKind::kConfig);
  CHECK(error_kind([] {
          TrainConfig t;
          t.stage = 2;
          t.variant = Variant::kTemporal;
          t.validate();
        }) == ErrorKind::kConfig);
}

TEST_CASE("variant switches") {
  CHECK_FALSE(uses_lanes(Variant::kBaseline));
  CHECK_FALSE(uses_lanes(Variant::kBaselineS2));
  CHECK(uses_lanes(Variant::kSpatial));
  CHECK(uses_lanes(Variant::kTemporal));
  CHECK(uses_lanes(Variant::kFull));
  CHECK(has_refinement(Variant::kFull));
  CHECK(has_refinement(Variant::kBaselineS2));
  CHECK_FALSE(has_refinement(Variant::kTemporal));

  ModelConfig mc;
  mc.variant = Variant::kSpatial;
  CHECK(LaformerModel(mc, 0).scored_steps() == std::vector<int>{mc.future_steps - 1});
  mc.variant = Variant::kTemporal;
  CHECK(LaformerModel(mc, 0).scored_steps().size() == static_cast<std::size_t>(mc.future_steps));
}

TEST_CASE("stage 2 needs a matching stage-1 checkpoint") {
  TrainConfig c = tiny_config();
  c.stage = 2;
  CHECK(error_kind([&] { run_training(c, data().train); }) == ErrorKind::kConfig);

  TrainConfig s1 = tiny_config(Variant::kBaselineS2);
  s1.max_train_scenes = 8;
  const Checkpoint init = run_training(s1, data().train);
  CHECK(error_kind([&] { run_training(c, data().train, &init); }) == ErrorKind::kConfig);

  TrainConfig other = s1;
  other.stage = 2;
  other.hidden = 16;
  CHECK(error_kind([&] { run_training(other, data().train, &init); }) == ErrorKind::kConfig);
  other = s1;
  other.stage = 2;
  other.rotate_to_heading = false;
  CHECK(error_kind([&] { run_training(other, data().train, &init); }) == ErrorKind::kConfig);
}

TEST_CASE("one-epoch smoke run on 50 scenes is finite and two-stage provenance is recorded") {
  std::vector<EpochLog> logs;
  const Checkpoint s1 = run_training(tiny_config(), data().train, nullptr, [&](const EpochLog& l) { logs.push_back(l); });
  REQUIRE(logs.size() == 1);
  CHECK(std::isfinite(logs[0].loss));
  CHECK(std::isfinite(logs[0].lane));
  CHECK(s1.trained_stage() == 1);
  REQUIRE(s1.provenance.size() == 1);
  CHECK(s1.provenance[0]["stage"] == 1);
  CHECK(s1.provenance[0]["n_train"] == 50);

  TrainConfig c2 = tiny_config();
  c2.stage = 2;
  const Checkpoint s2 = run_training(c2, data().train, &s1);
  CHECK(s2.trained_stage() == 2);
  REQUIRE(s2.provenance.size() == 2);
  CHECK(s2.provenance[1]["stage"] == 2);
  CHECK(s2.provenance[1]["variant"] == "full");

  const MetricsReport r = evaluate(s2, data().val, 3);
  CHECK(std::isfinite(r.min_fde));
  CHECK(r.miss_rate >= 0.0);
  CHECK(r.miss_rate <= 1.0);
  CHECK(r.n_scenes == 20);
}

TEST_CASE("stage 1 leaves refiner parameters untouched") {
  const Checkpoint s1 = run_training(tiny_config(), data().train);
  const LaformerModel fresh(s1.model->config(), s1.config.seed);
  for (const auto& [path, p] : s1.model->params().all()) {
    if (path.rfind("refiner/", 0) == 0) CHECK(p.value == fresh.params().at(path).value);
  }
}

TEST_CASE("deterministic training reproduces metrics bit for bit") {
  TrainConfig c = tiny_config(Variant::kTemporal);
  c.seed = 3;
  const Checkpoint a = run_training(c, data().train);
  const Checkpoint b = run_training(c, data().train);
  for (const auto& [path, p] : a.model->params().all()) CHECK(p.value == b.model->params().at(path).value);
  const MetricsReport ra = evaluate(a, data().val, 3);
  const MetricsReport rb = evaluate(b, data().val, 3);
  CHECK(ra.min_ade == rb.min_ade);
  CHECK(ra.min_fde == rb.min_fde);
  CHECK(ra.miss_rate == rb.miss_rate);

  c.seed = 4;
  const Checkpoint d = run_training(c, data().train);
  CHECK(evaluate(d, data().val, 3).min_fde != ra.min_fde);
}

TEST_CASE("checkpoint round trip preserves evaluation exactly") {
  const Checkpoint s1 = run_training(tiny_config(), data().train);
  const fs::path path = scratch("ckpt.json");
  save_checkpoint(s1, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config.to_json() == s1.config.to_json());
  CHECK(back.provenance == s1.provenance);
  const MetricsReport a = evaluate(s1, data().val, 3);
  const MetricsReport b = evaluate(back, data().val, 3);
  CHECK(a.min_ade == b.min_ade);
  CHECK(a.min_fde == b.min_fde);
  CHECK(a.miss_rate == b.miss_rate);

  CHECK(error_kind([&] { load_checkpoint(path.parent_path() / "missing.json"); }) == ErrorKind::kIo);
  std::ofstream(path.parent_path() / "junk.json") << "{\"format\": \"something-else\"}";
  CHECK(error_kind([&] { load_checkpoint(path.parent_path() / "junk.json"); }) == ErrorKind::kData);
  std::ofstream(path.parent_path() / "trunc.json") << slurp(path).substr(0, 200);
  CHECK(error_kind([&] { load_checkpoint(path.parent_path() / "trunc.json"); }) == ErrorKind::kData);
}

TEST_CASE("baseline predictions ignore lane geometry") {
  ModelConfig mc;
  mc.hidden = 8;
  mc.variant = Variant::kBaseline;
  const LaformerModel model(mc, 2);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-40, 40);
  for (int i = 0; i < 10; ++i) {
    Scene scrambled = data().raw[static_cast<std::size_t>(i)];
    for (auto& seg : scrambled.lanes) {
      for (auto& v : seg.vectors) {
        v.start = Vec2(u(rng), u(rng));
        v.end = Vec2(u(rng), u(rng));
        v.predecessor = Vec2(u(rng), u(rng));
      }
    }
    scrambled.lanes.resize(scrambled.lanes.size() / 2 + 1);
    const ProcessedScene a = preprocess(data().raw[static_cast<std::size_t>(i)]);
    const ProcessedScene b = preprocess(scrambled);
    const ScenePrediction pa = predict_normalized(model, a, 1, 2);
    const ScenePrediction pb = predict_normalized(model, b, 1, 2);
    CHECK(pa.trajectories == pb.trajectories);
    CHECK(pa.probs == pb.probs);
  }
}

TEST_CASE("metrics equal a brute-force loop over scenes, modes and steps") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int M = 1 + trial % 6;
    const int T = 1 + trial % 12;
    const int n = 1 + trial % 9;
    std::vector<Matrix> trajs, futures;
    std::vector<std::vector<double>> probs;
    for (int s = 0; s < n; ++s) {
      trajs.push_back(random_matrix(rng, M * T, 2, -4, 4));
      futures.push_back(random_matrix(rng, T, 2, -4, 4));
      const Matrix p = random_matrix(rng, 1, M, 0, 1);
      probs.emplace_back(p.data(), p.data() + M);
    }
    for (int K = 1; K <= M; ++K) {
      const MetricsReport got = compute_metrics(trajs, probs, futures, K);
      const MetricsReport want = brute_force_metrics(trajs, probs, futures, K);
      CHECK(std::abs(got.min_ade - want.min_ade) <= 1e-9);
      CHECK(std::abs(got.min_fde - want.min_fde) <= 1e-9);
      CHECK(got.miss_rate == want.miss_rate);
      CHECK(got.K == K);
      CHECK(got.n_scenes == n);
    }
    CHECK(error_kind([&] { compute_metrics(trajs, probs, futures, M + 1); }) == ErrorKind::kConfig);
  }
}

TEST_CASE("single-mode minADE is the plain mean displacement") {
  Matrix traj(3, 2), Y(3, 2);
  traj << 0, 0, 1, 0, 2, 0;
  Y << 0, 1, 1, 2, 5, 4;
  const MetricsReport r = compute_metrics({traj}, {{1.0}}, {Y}, 1);
  CHECK(r.min_ade == doctest::Approx((1.0 + 2.0 + 5.0) / 3.0));
  CHECK(r.min_fde == doctest::Approx(5.0));
  CHECK(r.miss_rate == 1.0);
}

TEST_CASE("miss-rate threshold at 2.0 m") {
  Matrix Y = Matrix::Zero(2, 2);
  Matrix miss = Matrix::Zero(2, 2);
  miss(1, 0) = 2.01;
  Matrix hit = Matrix::Zero(2, 2);
  hit(1, 0) = 1.99;
  Matrix exact = Matrix::Zero(2, 2);
  exact(1, 0) = 2.0;
  CHECK(compute_metrics({miss}, {{1.0}}, {Y}, 1).miss_rate == 1.0);
  CHECK(compute_metrics({hit}, {{1.0}}, {Y}, 1).miss_rate == 0.0);
  CHECK(compute_metrics({exact}, {{1.0}}, {Y}, 1).miss_rate == 0.0);
  CHECK(compute_metrics({miss, hit, hit, hit}, {{1.0}, {1.0}, {1.0}, {1.0}}, {Y, Y, Y, Y}, 1).miss_rate == 0.25);
}

TEST_CASE("top modes follow probability with index tie-break") {
  CHECK(top_modes({0.1, 0.4, 0.1, 0.4}, 3) == std::vector<int>{1, 3, 0});
  CHECK(top_modes({0.5, 0.5}, 2) == std::vector<int>{0, 1});
  CHECK(error_kind([] { top_modes({0.5, 0.5}, 3); }) == ErrorKind::kConfig);
  CHECK(error_kind([] { top_modes({0.5, 0.5}, 0); }) == ErrorKind::kConfig);
}

TEST_CASE("evaluation with K larger than M is a config error") {
  ModelConfig mc;
  mc.hidden = 8;
  mc.modes = 3;
  const LaformerModel model(mc, 0);
  CHECK(error_kind([&] { evaluate(model, data().val, 1, 2, 4); }) == ErrorKind::kConfig);
}

TEST_CASE("sharded evaluation equals single-threaded evaluation") {
  ModelConfig mc;
  mc.hidden = 8;
  const LaformerModel model(mc, 1);
  const MetricsReport a = evaluate(model, data().val, 1, 2, 6, 1);
  const MetricsReport b = evaluate(model, data().val, 1, 2, 6, 3);
  CHECK(a.min_ade == b.min_ade);
  CHECK(a.min_fde == b.min_fde);
  CHECK(a.miss_rate == b.miss_rate);
}

TEST_CASE("prediction records: shape, raw frame and candidates") {
  ModelConfig mc;
  mc.hidden = 8;
  const LaformerModel model(mc, 3);
  for (int i = 0; i < 5; ++i) {
    // Translation-only preprocessing, so raw = normalized + origin exactly.
    const ProcessedScene scene = preprocess(data().raw[static_cast<std::size_t>(i)], {}, i);
    const json rec = prediction_record(model, scene, 1, 2, 4);
    REQUIRE(rec["modes"].size() == 4);
    const ScenePrediction p = predict_normalized(model, scene, 1, 2);
    const auto order = top_modes(p.probs, 4);
    const Vec2 origin = scene.normalized.origin;
    for (std::size_t r = 0; r < 4; ++r) {
      const json& mode = rec["modes"][r];
      CHECK(mode["mode"] == order[r]);
      REQUIRE(mode["trajectory"].size() == 12);
      for (int t = 0; t < 12; ++t) {
        const Eigen::Index row = order[r] * 12 + t;
        CHECK(mode["trajectory"][static_cast<std::size_t>(t)][0].get<double>() == p.trajectories(row, 0) + origin.x());
        CHECK(mode["trajectory"][static_cast<std::size_t>(t)][1].get<double>() == p.trajectories(row, 1) + origin.y());
      }
    }
    // Recompute the candidate sets from the model's lane scores.
    ad::Tape tape;
    const ForwardResult fr = model.forward(tape, scene, 1, 2, Matrix::Zero(1, mc.latent_dim));
    const auto top = top_k_indices(fr.scores->value(), fr.scores->lane_mask, 2);
    REQUIRE(rec["candidates"].size() == 12);
    for (std::size_t r = 0; r < 12; ++r) {
      CHECK(rec["candidates"][r]["step"] == static_cast<int>(r) + 1);
      CHECK(rec["candidates"][r]["indices"].get<std::vector<int>>() == top[r]);
    }
  }
  ProcessedScene wrong = preprocess(data().raw[0]);
  wrong.future = Matrix::Zero(6, 2);
  CHECK(error_kind([&] { prediction_record(model, wrong, 1, 2, 4); }) == ErrorKind::kConfig);
}

TEST_CASE("rotated records map back to the raw frame") {
  ModelConfig mc;
  mc.hidden = 8;
  const LaformerModel model(mc, 3);
  const ProcessedScene scene = data().val[0];
  const json rec = prediction_record(model, scene, 1, 2, 2);
  const ScenePrediction p = predict_normalized(model, scene, 1, 2);
  const int m = rec["modes"][0]["mode"];
  for (int t = 0; t < 12; ++t) {
    const Vec2 raw = scene.normalized.to_raw(p.trajectories.row(m * 12 + t).transpose());
    CHECK(rec["modes"][0]["trajectory"][static_cast<std::size_t>(t)][0].get<double>() == raw.x());
  }
  // The ground truth itself survives normalize -> to_raw.
  const auto fut = target_future(data().raw[50]);
  for (int t = 0; t < 12; ++t) {
    CHECK((scene.normalized.to_raw(scene.future.row(t).transpose()) - fut[static_cast<std::size_t>(t)]).norm() < 1e-9);
  }
}

TEST_CASE("scene plot shows K modes and k candidates per step") {
  ModelConfig mc;
  mc.hidden = 8;
  const LaformerModel model(mc, 3);
  const ProcessedScene scene = preprocess(data().raw[2], {}, 2);
  for (int K : {1, 3, 6}) {
    for (int k : {1, 2, 3}) {
      const json rec = prediction_record(model, scene, 1, k, K);
      const fs::path out = scratch("plot_" + std::to_string(K) + "_" + std::to_string(k) + ".svg");
      plot_scene(data().raw[2], rec, out);
      const std::string svg = slurp(out);
      REQUIRE(!svg.empty());
      CHECK(count_occurrences(svg, "class=\"legend-mode\"") == static_cast<std::size_t>(K));
      CHECK(count_occurrences(svg, "class=\"mode\"") == static_cast<std::size_t>(K));
      const std::regex group("<g class=\"candidates\" data-step=\"\\d+\">([\\s\\S]*?)</g>");
      int groups = 0;
      for (auto it = std::sregex_iterator(svg.begin(), svg.end(), group); it != std::sregex_iterator(); ++it) {
        ++groups;
        CHECK(count_occurrences((*it)[1].str(), "class=\"candidate\"") == static_cast<std::size_t>(k));
      }
      CHECK(groups == 12);
    }
  }
  const json rec = prediction_record(model, scene, 1, 2, 2);
  const fs::path blocker = scratch("blocker");
  std::ofstream(blocker) << "x";
  CHECK(error_kind([&] { plot_scene(data().raw[2], rec, blocker / "p.svg"); }) == ErrorKind::kIo);
}

TEST_CASE("mean and sample standard deviation") {
  const MeanStd a = mean_std({1.0, 2.0, 3.0, 4.0});
  CHECK(a.mean == doctest::Approx(2.5));
  CHECK(a.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(mean_std({7.0}).std == 0.0);
}

TEST_CASE("k sweep produces one sorted row per value with mean and std") {
  TrainConfig base = tiny_config(Variant::kTemporal);
  base.max_train_scenes = 12;
  SweepOptions opt;
  opt.seeds = {0, 1};
  opt.K = 3;
  const std::vector<ProcessedScene> val(data().val.begin(), data().val.begin() + 6);
  const auto rows = run_sweep(SweepAxis::kK, {4, 2, 3, 1}, base, data().train, val, opt);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rows[i].value == static_cast<double>(i + 1));
    REQUIRE(rows[i].per_seed.size() == 2);
    std::vector<double> fde;
    for (const auto& r : rows[i].per_seed) fde.push_back(r.min_fde);
    CHECK(rows[i].min_fde.mean == doctest::Approx(mean_std(fde).mean));
    CHECK(rows[i].min_fde.std == doctest::Approx(mean_std(fde).std));
  }
  const std::string table = format_sweep_table(SweepAxis::kK, rows, 3);
  CHECK(count_occurrences(table, "±") == 12);
  CHECK(count_occurrences(table, "\n") == 6);

  CHECK(sweep_axis_from_string("lambda1") == SweepAxis::kLambda1);
  CHECK(sweep_axis_from_string("λ3") == SweepAxis::kLambda3);
  CHECK(error_kind([] { sweep_axis_from_string("lambda4"); }) == ErrorKind::kConfig);
}

TEST_CASE("Adam step, gradient clipping and cosine schedule") {
  nn::ParamStore store;
  ad::Parameter* p = store.create_zero("w", 1, 2);
  p->value << 1.0, -2.0;
  p->grad << 0.5, -4.0;
  Adam adam;
  adam.step(store, 0.1, {});
  // First bias-corrected step moves each entry by lr * sign(g) (up to eps).
  CHECK(p->value(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p->value(0, 1) == doctest::Approx(-1.9).epsilon(1e-7));

  p->grad << 3.0, 4.0;
  CHECK(clip_gradients(store, 1.0) == doctest::Approx(5.0));
  CHECK(p->grad.norm() == doctest::Approx(1.0));
  p->grad << 0.3, 0.4;
  clip_gradients(store, 1.0);
  CHECK(p->grad(0, 0) == doctest::Approx(0.3));

  TrainConfig c;
  c.learning_rate = 2.0;
  CHECK(scheduled_lr(c, 0, 100) == doctest::Approx(2.0));
  CHECK(scheduled_lr(c, 50, 100) == doctest::Approx(1.0));
  CHECK(scheduled_lr(c, 100, 100) == doctest::Approx(0.0));
  c.cosine_decay = false;
  CHECK(scheduled_lr(c, 50, 100) == 2.0);
}

TEST_CASE("datasets load from a generated directory") {
  gen::GenConfig gc;
  gc.n_scenes = 10;
  const fs::path dir = scratch("dataset");
  const gen::DatasetSummary s = gen::generate_dataset(gc, dir);
  const Dataset d = load_dataset(dir);
  CHECK(d.scenes.size() == 10);
  CHECK(d.train.size() == static_cast<std::size_t>(s.n_train));
  CHECK(d.val.size() == static_cast<std::size_t>(s.n_val));
  const auto processed = preprocess_all(d.scenes, d.val, {});
  CHECK(processed.size() == d.val.size());
  CHECK(processed[0].scene_index == d.val[0]);
  CHECK(error_kind([&] { load_dataset(dir / "missing"); }) != ErrorKind::kConfig);
  fs::remove_all(dir.parent_path());
}
