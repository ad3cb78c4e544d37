#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mopro/datagen.hpp"
#include "mopro/model.hpp"

namespace mopro::trainer {

struct OptimConfig {
  /// Total epochs, warm-up included.
  std::size_t epochs = 60;
  std::size_t warmup_epochs = 10;
  std::size_t batch_size = 64;
  double lr = 0.01;
  /// Epoch indices (0-based) at which the rate is multiplied by lr_decay.
  /// Empty means the defaults: round(2/3 E) and round(8/9 E).
  std::vector<std::size_t> lr_milestones;
  double lr_decay = 0.1;
  double sgd_momentum = 0.9;
  double weight_decay = 2e-2;
};

struct MoproConfig {
  double tau = 0.1;
  double alpha = 0.5;
  double threshold = 0.8;
  double proto_momentum = 0.999;
  double encoder_momentum = 0.999;
  std::size_t queue_size = 1024;
  double lambda_pro = 1.0;
  double lambda_ins = 1.0;
  bool renormalize_prototypes = true;
  // Ablations.
  bool disable_pro = false;
  bool disable_ins = false;
  /// Correction uses the classifier alone (alpha = 1).
  bool force_alpha_1 = false;
  /// false keeps the original labels past warm-up (plain CE training).
  bool correction = true;
};

struct FinetuneConfig {
  bool enabled = true;
  std::size_t epochs = 15;
  double lr = 0.01;
  std::vector<std::size_t> lr_milestones = {5, 10};
  double lr_decay = 0.1;
  std::size_t batch_size = 64;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  /// false draws uniformly instead of by square-root class mass.
  bool sqrt_sampling = true;
};

struct EvalConfig {
  /// Probe and calibration pass every N epochs (and always on the last).
  std::size_t every = 5;
  std::size_t knn_k = 5;
  std::size_t calib_bins = 15;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  datagen::DataConfig data;
  model::NetworkShape model;
  datagen::AugmentPair augment;
  OptimConfig optim;
  MoproConfig mopro;
  FinetuneConfig finetune;
  EvalConfig eval;
  /// Ablation tag recorded in manifests ("" when none).
  std::string ablation;

  friend bool operator==(const TrainConfig&, const TrainConfig&);
};

/// Throws ConfigError naming the field and its valid range.
void validate(const TrainConfig& config);

/// Parses INI text ([section] key = value). Unknown sections or keys and
/// malformed values raise ConfigError with the line number.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
/// Every field, defaults included, in a form parse_config reads back
/// exactly.
std::string render_config(const TrainConfig& config);

/// wo_pro, wo_ins, wo_s or ce_only. ConfigError for anything else.
void apply_ablation(TrainConfig& config, const std::string& name);

/// Resolved decay milestones for the main schedule.
std::vector<std::size_t> lr_milestones(const OptimConfig& optim);
double learning_rate(const OptimConfig& optim, std::size_t epoch);

}  // namespace mopro::trainer
