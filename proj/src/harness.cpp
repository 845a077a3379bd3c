#include "laformer/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "laformer/errors.hpp"
#include "laformer/scene_io.hpp"

namespace laformer {

using ad::Matrix;
using json = nlohmann::json;

LossWeights TrainConfig::loss_weights() const {
  LossWeights w;
  w.lambda1 = lambda1;
  w.lambda2 = lambda2;
  w.lambda3 = lambda3;
  w.tau = tau;
  w.use_offset = use_offset_loss;
  w.use_angle = use_angle_loss;
  w.wta_on_refined = wta_on_refined;
  return w;
}

PreprocessOptions TrainConfig::preprocess_options() const {
  PreprocessOptions o;
  o.lane_radius = lane_radius;
  o.rotate_to_heading = rotate_to_heading;
  return o;
}

ModelConfig TrainConfig::model_config(int history_steps, int future_steps) const {
  ModelConfig m;
  m.hidden = hidden;
  m.modes = modes;
  m.heads = heads;
  m.latent_dim = latent_dim;
  m.top_k = k_stage1;
  m.variant = variant;
  m.history_steps = history_steps;
  m.future_steps = future_steps;
  return m;
}

json TrainConfig::to_json() const {
  return json{{"stage", stage},
              {"epochs", epochs},
              {"learning_rate", learning_rate},
              {"cosine_decay", cosine_decay},
              {"batch_size", batch_size},
              {"seed", seed},
              {"D", hidden},
              {"M", modes},
              {"heads", heads},
              {"latent_dim", latent_dim},
              {"k_stage1", k_stage1},
              {"k_stage2", k_stage2},
              {"lambda1", lambda1},
              {"lambda2", lambda2},
              {"lambda3", lambda3},
              {"tau", tau},
              {"variant", to_string(variant)},
              {"lane_radius", lane_radius},
              {"rotate_to_heading", rotate_to_heading},
              {"use_latent", use_latent},
              {"use_offset_loss", use_offset_loss},
              {"use_angle_loss", use_angle_loss},
              {"wta_on_refined", wta_on_refined},
              {"grad_clip", grad_clip},
              {"deterministic", deterministic},
              {"threads", threads},
              {"max_train_scenes", max_train_scenes}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "training config must be a JSON object");
  const json known = TrainConfig{}.to_json();
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw Error(ErrorKind::kConfig, "unknown training config key '" + key + "'");
  TrainConfig c;
  try {
    c.stage = j.value("stage", c.stage);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.cosine_decay = j.value("cosine_decay", c.cosine_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.hidden = j.value("D", c.hidden);
    c.modes = j.value("M", c.modes);
    c.heads = j.value("heads", c.heads);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.k_stage1 = j.value("k_stage1", c.k_stage1);
    c.k_stage2 = j.value("k_stage2", c.k_stage2);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.lambda3 = j.value("lambda3", c.lambda3);
    c.tau = j.value("tau", c.tau);
    c.variant = variant_from_string(j.value("variant", std::string(to_string(c.variant))));
    c.lane_radius = j.value("lane_radius", c.lane_radius);
    c.rotate_to_heading = j.value("rotate_to_heading", c.rotate_to_heading);
    c.use_latent = j.value("use_latent", c.use_latent);
    c.use_offset_loss = j.value("use_offset_loss", c.use_offset_loss);
    c.use_angle_loss = j.value("use_angle_loss", c.use_angle_loss);
    c.wta_on_refined = j.value("wta_on_refined", c.wta_on_refined);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.threads = j.value("threads", c.threads);
    c.max_train_scenes = j.value("max_train_scenes", c.max_train_scenes);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kConfig, msg); };
  if (stage != 1 && stage != 2) fail("stage must be 1 or 2");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (hidden < 1 || modes < 1 || heads < 1 || hidden % heads != 0) fail("invalid D / M / heads");
  if (latent_dim < 0) fail("latent_dim must be >= 0");
  if (k_stage1 < 1 || k_stage2 < 1) fail("k must be >= 1");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(lane_radius > 0.0)) fail("lane_radius must be positive");
  if (threads < 0) fail("threads must be >= 0");
  if (stage == 2 && !has_refinement(variant))
    fail(std::string("variant ") + to_string(variant) + " has no second stage");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.scenes = read_scenes(dir / "scenes.jsonl");
  auto read_split = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw Error(ErrorKind::kIo, "cannot read " + (dir / name).string());
    std::vector<int> idx;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      int i = -1;
      try {
        i = std::stoi(line);
      } catch (const std::exception&) {
        throw Error(ErrorKind::kData, std::string(name) + ": bad index '" + line + "'");
      }
      if (i < 0 || i >= static_cast<int>(d.scenes.size()))
        throw Error(ErrorKind::kData, std::string(name) + ": index " + line + " out of range");
      idx.push_back(i);
    }
    return idx;
  };
  d.train = read_split("train.txt");
  d.val = read_split("val.txt");
  return d;
}

std::vector<ProcessedScene> preprocess_all(const std::vector<Scene>& scenes, const std::vector<int>& indices,
                                           const PreprocessOptions& options) {
  std::vector<ProcessedScene> out;
  out.reserve(indices.size());
  for (int i : indices) {
    try {
      out.push_back(preprocess(scenes.at(static_cast<std::size_t>(i)), options, i));
    } catch (const Error& e) {
      throw Error(ErrorKind::kData, "scene " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

void Adam::step(nn::ParamStore& store, double lr, const std::function<bool(const std::string&)>& trainable) {
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (auto& [path, p] : store.all()) {
    if (trainable && !trainable(path)) continue;
    auto [it, fresh] = state_.try_emplace(path);
    if (fresh) {
      it->second.m = Matrix::Zero(p.value.rows(), p.value.cols());
      it->second.v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    Matrix& m = it->second.m;
    Matrix& v = it->second.v;
    m = beta1_ * m + (1.0 - beta1_) * p.grad;
    v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

double clip_gradients(nn::ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [path, p] : store.all()) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [path, p] : store.all()) p.grad *= s;
  }
  return norm;
}

double scheduled_lr(const TrainConfig& config, long step, long total) {
  if (!config.cosine_decay || total <= 1) return config.learning_rate;
  const double progress = static_cast<double>(step) / static_cast<double>(total);
  return config.learning_rate * 0.5 * (1.0 + std::cos(M_PI * progress));
}

json EpochLog::to_json() const {
  return json{{"stage", stage}, {"epoch", epoch}, {"loss", loss},   {"lane", lane},       {"reg", reg},
              {"cls", cls},     {"off", off},     {"angle", angle}, {"lr", lr}, {"seconds", seconds}};
}

int Checkpoint::trained_stage() const {
  int s = 0;
  for (const auto& entry : provenance) s = std::max(s, entry.value("stage", 0));
  return s;
}

Checkpoint Checkpoint::clone() const {
  Checkpoint c;
  c.config = config;
  c.provenance = provenance;
  if (model) {
    c.model = std::make_unique<LaformerModel>(model->config(), 0);
    for (auto& [path, p] : c.model->params().all()) p.value = model->params().at(path).value;
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (!ckpt.model) throw Error(ErrorKind::kConfig, "checkpoint has no model");
  json params = json::object();
  for (const auto& [name, p] : ckpt.model->params().all()) {
    std::vector<double> data(p.value.data(), p.value.data() + p.value.size());
    params[name] = json{{"shape", {p.value.rows(), p.value.cols()}}, {"data", data}};
  }
  const json doc{{"format", kCheckpointFormat},
                 {"model_config", ckpt.model->config().to_json()},
                 {"train_config", ckpt.config.to_json()},
                 {"provenance", ckpt.provenance},
                 {"params", params}};
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kData, "checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (doc.value("format", std::string()) != kCheckpointFormat)
    throw Error(ErrorKind::kData, "checkpoint " + path.string() + " is not " + kCheckpointFormat);
  Checkpoint c;
  try {
    c.config = TrainConfig::from_json(doc.at("train_config"));
    c.provenance = doc.at("provenance");
    c.model = std::make_unique<LaformerModel>(ModelConfig::from_json(doc.at("model_config")), 0);
    const json& params = doc.at("params");
    for (auto& [name, p] : c.model->params().all()) {
      if (!params.contains(name)) throw Error(ErrorKind::kData, "checkpoint is missing parameter " + name);
      const json& entry = params.at(name);
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      const auto data = entry.at("data").get<std::vector<double>>();
      if (rows != p.value.rows() || cols != p.value.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw Error(ErrorKind::kData, "checkpoint parameter " + name + " has the wrong shape");
      p.value = Eigen::Map<const Matrix>(data.data(), rows, cols);
      p.zero_grad();
    }
    if (params.size() != c.model->params().all().size())
      throw Error(ErrorKind::kData, "checkpoint has parameters the model does not define");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kData, "malformed checkpoint " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw Error(ErrorKind::kData, std::string("checkpoint: ") + e.what());
    throw;
  }
  return c;
}

namespace {

void check_stage2_init(const TrainConfig& config, const Checkpoint* init) {
  if (init == nullptr || !init->model)
    throw Error(ErrorKind::kConfig, "stage 2 needs a stage-1 checkpoint to resume from");
  if (init->trained_stage() != 1)
    throw Error(ErrorKind::kConfig, "stage 2 must resume from a checkpoint whose last stage is 1");
  const ModelConfig& m = init->model->config();
  if (m.variant != config.variant)
    throw Error(ErrorKind::kConfig, std::string("stage-1 checkpoint is variant ") + to_string(m.variant) +
                                        ", not " + to_string(config.variant));
  if (m.hidden != config.hidden || m.modes != config.modes || m.heads != config.heads ||
      m.latent_dim != config.latent_dim)
    throw Error(ErrorKind::kConfig, "stage-1 checkpoint dimensions differ from the training config");
  if (init->config.lane_radius != config.lane_radius || init->config.rotate_to_heading != config.rotate_to_heading)
    throw Error(ErrorKind::kConfig, "stage-1 checkpoint used different scene preprocessing");
}

}  // namespace

Checkpoint run_training(const TrainConfig& config, const std::vector<ProcessedScene>& train_all, const Checkpoint* init,
                        const EpochCallback& on_epoch) {
  config.validate();
  if (train_all.empty()) throw Error(ErrorKind::kData, "no training scenes");
  std::vector<const ProcessedScene*> train;
  for (const auto& s : train_all) {
    if (config.max_train_scenes >= 0 && static_cast<int>(train.size()) >= config.max_train_scenes) break;
    train.push_back(&s);
  }

  Checkpoint ckpt;
  if (config.stage == 2) {
    check_stage2_init(config, init);
    ckpt = init->clone();
  } else {
    ckpt.model = std::make_unique<LaformerModel>(
        config.model_config(static_cast<int>(train_all.front().history.rows()),
                            static_cast<int>(train_all.front().future.rows())),
        config.seed);
  }
  ckpt.config = config;
  LaformerModel& model = *ckpt.model;
  const ModelConfig& mc = model.config();
  for (const ProcessedScene* s : train)
    if (s->history.rows() != mc.history_steps || s->future.rows() != mc.future_steps)
      throw Error(ErrorKind::kConfig, "training scene horizon does not match the model");

  const int stage = config.stage;
  const int k = config.k_for_stage(stage);
  const LossWeights weights = config.loss_weights();
  // Stage 1 leaves the refiner untouched.
  const auto trainable = [stage](const std::string& path) { return stage == 2 || path.rfind("refiner/", 0) != 0; };

  std::mt19937_64 order_rng(config.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(stage));
  std::mt19937_64 latent_rng(config.seed ^ (0xD1B54A32D192ED03ULL + static_cast<std::uint64_t>(stage)));
  std::normal_distribution<double> normal(0.0, 1.0);

  const long n = static_cast<long>(train.size());
  const long batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const long total_steps = batches_per_epoch * config.epochs;
  long step = 0;
  Adam adam;
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  EpochLog last;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochLog log;
    log.stage = stage;
    log.epoch = epoch + 1;
    for (long b = 0; b < batches_per_epoch; ++b) {
      const long begin = b * config.batch_size;
      const long end = std::min(n, begin + config.batch_size);
      model.params().zero_grad();
      for (long i = begin; i < end; ++i) {
        const ProcessedScene& scene = *train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        Matrix z = Matrix::Zero(1, mc.latent_dim);
        if (config.use_latent)
          for (Eigen::Index c = 0; c < z.cols(); ++c) z(0, c) = normal(latent_rng);
        ad::Tape tape;
        const ForwardResult r = model.forward(tape, scene, stage, k, z);
        const LossBreakdown l = model.loss(tape, r, scene, weights, stage);
        const double total = l.total.scalar();
        if (!std::isfinite(total))
          throw Error(ErrorKind::kData, "non-finite loss on scene " + std::to_string(scene.scene_index) +
                                            " in epoch " + std::to_string(epoch + 1));
        tape.backward(l.total);
        log.loss += total;
        log.lane += l.lane;
        log.reg += l.reg;
        log.cls += l.cls;
        log.off += l.off;
        log.angle += l.angle;
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (auto& [path, p] : model.params().all()) p.grad *= inv;
      clip_gradients(model.params(), config.grad_clip);
      log.lr = scheduled_lr(config, step, total_steps);
      adam.step(model.params(), log.lr, trainable);
      ++step;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    log.loss *= inv_n;
    log.lane *= inv_n;
    log.reg *= inv_n;
    log.cls *= inv_n;
    log.off *= inv_n;
    log.angle *= inv_n;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    last = log;
    if (on_epoch) on_epoch(log);
  }
  model.params().zero_grad();

  ckpt.provenance.push_back(json{{"stage", stage},
                                 {"variant", to_string(config.variant)},
                                 {"epochs", config.epochs},
                                 {"seed", config.seed},
                                 {"learning_rate", config.learning_rate},
                                 {"batch_size", config.batch_size},
                                 {"k", k},
                                 {"n_train", n},
                                 {"final_epoch_loss", last.loss}});
  return ckpt;
}

}  // namespace laformer
