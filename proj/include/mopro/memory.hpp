#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mopro/numkit/tensor.hpp"

namespace mopro::memory {

using numkit::Tensor;

/// Tolerance on ||z|| - 1 for vectors entering either store.
inline constexpr double kUnitNormTolerance = 1e-6;

/// FIFO ring of unit-norm momentum embeddings. Once `capacity` entries are
/// stored, each push evicts the oldest one.
class EmbeddingQueue {
 public:
  EmbeddingQueue() = default;
  EmbeddingQueue(std::size_t capacity, std::size_t dim);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return size_; }
  bool full() const noexcept { return size_ == capacity_; }
  /// Slot the next push writes to.
  std::size_t cursor() const noexcept { return cursor_; }

  /// Pushes every row of z (b x dim), in row order. Rows must be unit-norm
  /// within kUnitNormTolerance (ContractViolation otherwise); nothing is
  /// written when any row fails.
  void enqueue(const Tensor& z);

  /// Stored vectors, oldest first.
  Tensor contents() const;
  /// Raw ring storage (capacity x dim); only the first size() slots written
  /// since the last wrap are meaningful before the queue fills.
  const Tensor& storage() const noexcept { return buffer_; }

  /// Rebuilds a queue from persisted ring state.
  static EmbeddingQueue restore(std::size_t capacity, std::size_t dim, std::size_t size,
                                std::size_t cursor, std::vector<double> buffer);

  friend bool operator==(const EmbeddingQueue&, const EmbeddingQueue&) = default;

 private:
  std::size_t capacity_ = 0;
  std::size_t dim_ = 0;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  Tensor buffer_;
};

/// K x d_p matrix of momentum prototypes.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  /// `renormalize` re-projects each prototype to the unit sphere after every
  /// update (the default). With false, update() applies the bare EMA.
  PrototypeBank(std::size_t num_classes, std::size_t dim, double momentum,
                bool renormalize = true);

  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t dim() const noexcept { return dim_; }
  double momentum() const noexcept { return momentum_; }
  bool renormalize() const noexcept { return renormalize_; }
  bool initialized(std::size_t k) const { return initialized_.at(k) != 0; }
  bool all_initialized() const;
  const Tensor& prototypes() const noexcept { return protos_; }
  std::span<const double> prototype(std::size_t k) const { return protos_.row(k); }

  /// c_k = normalize(mean of rows of z with labels == k). Every class must
  /// have at least one sample and a nonzero mean (DegenerateInputError
  /// naming the class otherwise).
  void init(const Tensor& z, std::span<const std::size_t> labels);

  /// c_k <- normalize(m c_k + (1 - m) z). StateError if class k has not been
  /// initialized.
  void update(std::size_t k, std::span<const double> z);

  /// softmax_k(z . c_k / tau). ConfigError for tau <= 0, StateError when any
  /// prototype is uninitialized.
  std::vector<double> scores(std::span<const double> z, double tau) const;
  /// Row-wise scores for a batch (b x d_p) -> b x K.
  Tensor scores(const Tensor& z, double tau) const;

  /// Overwrites prototype k directly; used when restoring persisted state and
  /// in tests that need a known configuration.
  void set_prototype(std::size_t k, std::span<const double> c);

  friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;

 private:
  std::size_t num_classes_ = 0;
  std::size_t dim_ = 0;
  double momentum_ = 0.999;
  bool renormalize_ = true;
  Tensor protos_;
  std::vector<unsigned char> initialized_;
};

}  // namespace mopro::memory
