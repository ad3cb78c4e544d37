#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mopro/numkit/rng.hpp"
#include "mopro/numkit/tensor.hpp"

namespace mopro::datagen {

using numkit::Tensor;

/// true_label marker for out-of-distribution samples (also the on-disk value).
inline constexpr std::uint32_t kOodLabel = 0xFFFFFFFFu;

enum class NoiseMode : std::uint8_t {
  Uniform,   // corrupted labels drawn uniformly among the wrong classes
  Pairwise,  // corrupted label k -> (k + 1) mod K
};

struct DataConfig {
  std::size_t num_classes = 10;
  std::size_t input_dim = 32;
  /// In-distribution samples per class; the OOD count is derived so that
  /// OOD samples make up `ood_rate` of the total.
  std::size_t n_per_class = 450;
  /// Per-coordinate standard deviation of each class cluster.
  double cluster_spread = 1.0;
  /// Minimum Euclidean distance between any two class centroids.
  double min_separation = 8.0;
  /// OOD cloud std = ood_spread_factor * cluster_spread, centered at the
  /// grand mean of the centroids.
  double ood_spread_factor = 4.0;
  double noise_rate = 0.4;
  double ood_rate = 0.1;
  NoiseMode noise_mode = NoiseMode::Uniform;
  std::uint64_t seed = 0;
  /// Clean held-out samples per class for probes and calibration.
  std::size_t test_per_class = 100;
};

/// Samples with ground truth. Labels are 0-based.
struct NoisyDataset {
  std::size_t num_classes = 0;
  std::size_t input_dim = 0;
  double noise_rate = 0.0;
  double ood_rate = 0.0;
  std::uint64_t seed = 0;
  Tensor features;                        // n x d_x
  std::vector<std::uint32_t> noisy_label;  // what the learner sees, always < K
  std::vector<std::uint32_t> true_label;   // < K, or kOodLabel
  std::vector<std::uint8_t> is_ood;

  std::size_t size() const noexcept { return noisy_label.size(); }
  bool corrupted(std::size_t i) const {
    return !is_ood[i] && noisy_label[i] != true_label[i];
  }

  friend bool operator==(const NoisyDataset&, const NoisyDataset&) = default;
};

struct GeneratedData {
  NoisyDataset train;
  /// Same centroids, no label noise, no OOD.
  NoisyDataset test;
  Tensor centroids;  // K x d_x
};

/// Throws ConfigError naming the offending field and its valid range.
void validate(const DataConfig& config);

/// Pure function of the config (bitwise reproducible).
GeneratedData generate(const DataConfig& config);

enum class AugmentKind : std::uint8_t { Weak, Strong };

struct AugmentPolicy {
  AugmentKind kind = AugmentKind::Weak;
  double sigma = 0.0;
  /// Strong only: per-coordinate zeroing probability.
  double dropout = 0.0;
  /// Strong only: per-coordinate multiplicative factor ~ U[scale_lo, scale_hi].
  double scale_lo = 1.0;
  double scale_hi = 1.0;
};

struct AugmentPair {
  AugmentPolicy weak{AugmentKind::Weak, 1.0};
  AugmentPolicy strong{AugmentKind::Strong, 2.0, 0.1, 0.8, 1.2};
};

/// Throws ConfigError unless sigma_weak < sigma_strong and the ranges are
/// valid.
void validate(const AugmentPair& pair);

/// Weak: x + N(0, sigma^2). Strong: per coordinate, scale, add noise, then
/// zero with probability `dropout`. E[out] = (1 - dropout) * mean_scale * x.
void augment(std::span<const double> x, std::span<double> out, const AugmentPolicy& policy,
             numkit::Rng& rng);
Tensor augment(const Tensor& x, const AugmentPolicy& policy, numkit::Rng& rng);

/// Endless index stream where sample i is drawn with weight 1/sqrt(n_c(i)),
/// so class c receives total mass proportional to sqrt(n_c).
class SqrtSampler {
 public:
  /// `labels` are class indices; classes absent from the list get no mass.
  SqrtSampler(std::span<const std::size_t> labels, std::uint64_t seed);

  std::size_t next();
  /// Probability that a draw lands in class k.
  double class_probability(std::size_t k) const;

 private:
  std::vector<double> cumulative_;
  std::vector<double> class_mass_;
  numkit::Rng rng_;
};

/// Binary format "MPDS" v1, little-endian (see README).
void save(const NoisyDataset& ds, const std::filesystem::path& path);
NoisyDataset load(const std::filesystem::path& path);
std::vector<std::uint8_t> encode(const NoisyDataset& ds);
NoisyDataset decode(std::span<const std::uint8_t> bytes);

}  // namespace mopro::datagen
