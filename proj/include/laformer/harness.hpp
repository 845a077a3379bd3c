#pragma once

// Training configuration, dataset loading, the Adam optimizer, checkpoints and
// the two-stage training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "laformer/model.hpp"

namespace laformer {

inline constexpr const char* kCheckpointFormat = "laformer-ckpt/1";

struct TrainConfig {
  int stage = 1;
  int epochs = 30;
  double learning_rate = 1e-3;
  bool cosine_decay = true;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int hidden = 32;  // D
  int modes = 6;    // M
  int heads = 1;
  int latent_dim = 2;
  int k_stage1 = 2;
  int k_stage2 = 2;
  double lambda1 = 10.0;
  double lambda2 = 5.0;
  double lambda3 = 2.0;
  double tau = 1.0;
  Variant variant = Variant::kFull;
  double lane_radius = 50.0;
  bool rotate_to_heading = false;
  bool use_latent = true;
  bool use_offset_loss = true;
  bool use_angle_loss = true;
  bool wta_on_refined = true;
  double grad_clip = 0.0;  // global L2 norm cap; <= 0 disables clipping
  bool deterministic = true;
  int threads = 0;            // evaluation workers in fast mode; 0 = hardware concurrency
  int max_train_scenes = -1;  // -1 = all

  int k_for_stage(int s) const { return s == 2 ? k_stage2 : k_stage1; }
  LossWeights loss_weights() const;
  PreprocessOptions preprocess_options() const;
  ModelConfig model_config(int history_steps, int future_steps) const;

  nlohmann::json to_json() const;
  /// Unknown keys and out-of-range values are Error(kConfig).
  static TrainConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<int> train;
  std::vector<int> val;
};

/// Reads scenes.jsonl, train.txt and val.txt from a generated dataset directory.
Dataset load_dataset(const std::filesystem::path& dir);
/// Preprocesses the given scene indices; failures are Error(kData) naming the scene.
std::vector<ProcessedScene> preprocess_all(const std::vector<Scene>& scenes, const std::vector<int>& indices,
                                           const PreprocessOptions& options);

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  /// One update of every parameter whose path passes `trainable`.
  void step(nn::ParamStore& store, double lr, const std::function<bool(const std::string&)>& trainable);

 private:
  struct Moments {
    ad::Matrix m;
    ad::Matrix v;
  };
  double beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::map<std::string, Moments> state_;
};

/// Scales all gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_gradients(nn::ParamStore& store, double max_norm);

/// Learning rate at optimizer step `step` of `total`.
double scheduled_lr(const TrainConfig& config, long step, long total);

struct EpochLog {
  int stage = 1;
  int epoch = 0;
  double loss = 0.0;
  double lane = 0.0;
  double reg = 0.0;
  double cls = 0.0;
  double off = 0.0;
  double angle = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  nlohmann::json to_json() const;
};

struct Checkpoint {
  TrainConfig config;     // configuration of the most recent stage
  nlohmann::json provenance = nlohmann::json::array();  // one entry per completed stage
  std::unique_ptr<LaformerModel> model;

  int trained_stage() const;
  /// Candidate count used when running this checkpoint.
  int k() const { return config.k_for_stage(trained_stage()); }
  Checkpoint clone() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws Error(kIo) when unreadable, Error(kData) on format problems.
Checkpoint load_checkpoint(const std::filesystem::path& path);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Stage 1 trains a fresh model. Stage 2 continues `init`, which must be a stage-1
/// checkpoint of the same variant; otherwise Error(kConfig).
Checkpoint run_training(const TrainConfig& config, const std::vector<ProcessedScene>& train,
                        const Checkpoint* init = nullptr, const EpochCallback& on_epoch = {});

}  // namespace laformer
