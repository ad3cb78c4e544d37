#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mopro/datagen.hpp"
#include "mopro/noise.hpp"
#include "mopro/numkit/tensor.hpp"

namespace mopro::evalkit {

using numkit::Tensor;

/// A ratio whose denominator may be zero. Undefined rates carry NaN.
struct Rate {
  double value = 0.0;
  bool defined = false;
  std::uint64_t num = 0;
  std::uint64_t den = 0;

  static Rate of(std::uint64_t num, std::uint64_t den);
};

struct CorrectionReport {
  std::uint64_t n = 0;
  std::uint64_t n_in_dist = 0;
  std::uint64_t n_corrupted = 0;
  /// In-distribution samples whose pseudo-label equals the true label (an
  /// OOD verdict counts as wrong).
  Rate pseudo_acc;
  /// Of the in-distribution samples relabelled away from their noisy label,
  /// the fraction relabelled to the true class.
  Rate correction_precision;
  /// Of the corrupted samples, the fraction whose pseudo-label is the true
  /// class.
  Rate correction_recall;
  Rate ood_precision;
  Rate ood_recall;
  std::uint64_t n_argmax = 0;
  std::uint64_t n_kept = 0;
  std::uint64_t n_ood = 0;
  std::uint64_t n_passthrough = 0;
};

/// DimensionError when the arrays disagree in length.
CorrectionReport score_corrections(std::span<const noise::PseudoLabel> labels,
                                   const datagen::NoisyDataset& ds);

/// Cosine k-NN vote; ties go to the lowest class index. StateError on an
/// empty train set, ConfigError unless k is odd and positive.
double knn_probe(const Tensor& train, std::span<const std::size_t> train_labels,
                 const Tensor& test, std::span<const std::size_t> test_labels, std::size_t k);

struct LinearProbeOptions {
  std::size_t epochs = 50;
  double lr = 0.1;
  std::size_t batch_size = 64;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

/// Multinomial logistic regression on frozen features (zero init, seeded
/// minibatch SGD). Returns test accuracy.
double linear_probe(const Tensor& train, std::span<const std::size_t> train_labels,
                    const Tensor& test, std::span<const std::size_t> test_labels,
                    std::size_t num_classes, const LinearProbeOptions& options);

struct CalibrationBin {
  double conf_mean = 0.0;
  double accuracy = 0.0;
  std::uint64_t count = 0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double error = 0.0;
};

/// Equal-width bins on [0, 1], bin b = ((b-1)/B, b/B] with 0 going to the
/// first bin. error = sqrt(sum_b (n_b / N) (conf_b - acc_b)^2).
CalibrationReport calibration_error(std::span<const double> confidences,
                                    std::span<const std::uint8_t> correct, std::size_t bins = 15);

/// One row of the metrics file. Probe columns are NaN on epochs without an
/// evaluation pass.
struct EpochMetrics {
  std::uint64_t epoch = 0;  // 1-based
  double l_ce = 0.0;
  double l_pro = 0.0;
  double l_ins = 0.0;
  double total = 0.0;
  double pseudo_acc = 0.0;
  double ood_recall = 0.0;
  double ood_precision = 0.0;
  double knn_acc = 0.0;
  double calib_err = 0.0;
  double corr_recall = 0.0;
  std::uint64_t n_argmax = 0;
  std::uint64_t n_kept = 0;
  std::uint64_t n_ood = 0;
  std::string phase;  // "warmup" or "main"
  double lr = 0.0;

  /// NaN-aware bitwise comparison.
  friend bool operator==(const EpochMetrics& a, const EpochMetrics& b);
};

enum class MetricsFormat { Csv, Json };

/// Numbers use 17 significant digits; NaN is written as "nan" (CSV) or null
/// (JSON). IoError when the path cannot be written.
void emit_metrics(std::span<const EpochMetrics> records, const std::filesystem::path& path,
                  MetricsFormat format);
std::string render_metrics(std::span<const EpochMetrics> records, MetricsFormat format);
/// ParseError with the byte offset of the first bad field; a missing
/// required column is named in the message.
std::vector<EpochMetrics> parse_metrics(const std::string& text, MetricsFormat format);
std::vector<EpochMetrics> read_metrics(const std::filesystem::path& path);

/// Required CSV columns, in file order.
const std::vector<std::string>& metrics_columns();

}  // namespace mopro::evalkit
