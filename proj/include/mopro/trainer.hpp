#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mopro/config.hpp"
#include "mopro/datagen.hpp"
#include "mopro/evalkit.hpp"
#include "mopro/memory.hpp"
#include "mopro/model.hpp"
#include "mopro/noise.hpp"
#include "mopro/numkit/rng.hpp"

namespace mopro::trainer {

using numkit::Tensor;

struct TrainState {
  TrainConfig config;
  model::OnlineNetwork net;
  model::MomentumTwin twin;
  memory::PrototypeBank bank;
  memory::EmbeddingQueue queue;
  /// One SGD momentum buffer per entry of model::parameters(net).
  std::vector<Tensor> velocity;
  numkit::Rng rng;
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;
  bool warmup_done = false;
  std::vector<evalkit::EpochMetrics> history;

  /// Not persisted. When set, every batch appends its op sequence.
  std::vector<std::string>* trace = nullptr;

  friend bool operator==(const TrainState& a, const TrainState& b);
};

/// Fresh state for `dataset` (validated config, network from config.seed).
/// StructuralError when the dataset's K or d_x disagree with the config.
TrainState init_state(const TrainConfig& config, const datagen::NoisyDataset& dataset);

/// Held-out data for the periodic probe and calibration pass.
struct EvalData {
  const datagen::NoisyDataset* test = nullptr;
};

/// Runs warmup_epochs epochs on the original labels, then initializes the
/// prototypes from class means over one full pass. With warmup_epochs = 0
/// only the initialization runs.
void warmup(TrainState& state, const datagen::NoisyDataset& dataset, const EvalData& eval = {});

/// One main-phase epoch. StateError before warm-up has completed.
evalkit::EpochMetrics train_epoch(TrainState& state, const datagen::NoisyDataset& dataset,
                                  const EvalData& eval = {});

/// Called after every completed epoch (checkpoint and CSV hooks).
using EpochCallback = std::function<void(const TrainState&, const evalkit::EpochMetrics&)>;

/// Runs (or resumes) up to config.optim.epochs total epochs, warm-up
/// included. `stop_after` > 0 stops once that many epochs are complete.
void train(TrainState& state, const datagen::NoisyDataset& dataset, const EvalData& eval = {},
           const EpochCallback& on_epoch = {}, std::size_t stop_after = 0);

/// Pseudo-labels for every sample from the current model on un-augmented
/// features, with the configured correction rule (or original labels when
/// correction is off or the bank is uninitialized).
std::vector<noise::PseudoLabel> correction_pass(const TrainState& state,
                                                const datagen::NoisyDataset& dataset);

struct ProbeResult {
  double knn_acc = 0.0;
  double linear_acc = 0.0;
  double test_acc = 0.0;
  evalkit::CalibrationReport calibration;
};

/// k-NN and linear probes on encoder outputs of the held-out set (first
/// half fits, second half scores), plus classifier accuracy and calibration
/// on the whole set.
ProbeResult probe(const TrainState& state, const datagen::NoisyDataset& test,
                  bool with_linear = true);

struct FinetuneOptions {
  std::size_t epochs = 15;
  double lr = 0.01;
  std::vector<std::size_t> lr_milestones = {5, 10};
  double lr_decay = 0.1;
  std::size_t batch_size = 64;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  bool sqrt_sampling = true;
  std::uint64_t seed = 0;
};

/// Retrains `head` with cross-entropy on fixed features. Each epoch draws
/// features.rows() samples from the square-root sampler (or uniformly).
void finetune_classifier(model::ClassifierHead& head, const Tensor& features,
                         std::span<const std::size_t> labels, const FinetuneOptions& options);

struct FinetuneReport {
  std::size_t kept = 0;
  std::size_t dropped_ood = 0;
  std::string frozen_hash_before;
  std::string frozen_hash_after;
};

/// Cleans labels with one frozen correction pass, drops OOD samples, and
/// retrains the classifier alone. StateError if every sample is OOD or a
/// frozen parameter changed.
FinetuneReport rebalance_finetune(TrainState& state, const datagen::NoisyDataset& dataset);

/// SHA-256 (hex) over encoder, projection, twin and prototypes.
std::string frozen_hash(const TrainState& state);

/// Binary format "MPCK" (see README).
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(std::span<const std::uint8_t> bytes);

/// StructuralError naming the first disagreement between a state and a
/// dataset (K, then d_x).
void check_compatible(const TrainState& state, const datagen::NoisyDataset& dataset);

/// SHA-256 (hex) of arbitrary bytes.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace mopro::trainer
