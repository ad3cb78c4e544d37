#include "mopro/memory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mopro/error.hpp"
#include "mopro/numkit/ops.hpp"

namespace mopro::memory {
namespace {

void require_unit(std::span<const double> z, const char* where) {
  const double n = numkit::norm(z);
  if (!(std::abs(n - 1.0) <= kUnitNormTolerance)) {
    throw ContractViolation(std::string(where) + ": expected a unit-norm vector, got norm " +
                            std::to_string(n));
  }
}

void normalize_into(std::span<double> dst, const char* where, std::size_t k) {
  const double n = numkit::norm(dst);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw DegenerateInputError(std::string(where) + ": prototype for class " + std::to_string(k) +
                               " has zero norm");
  }
  for (auto& v : dst) v /= n;
}

}  // namespace

EmbeddingQueue::EmbeddingQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), buffer_(Tensor::matrix(capacity, dim)) {
  if (capacity == 0 || dim == 0) throw ConfigError("queue capacity and width must be positive");
}

void EmbeddingQueue::enqueue(const Tensor& z) {
  if (z.cols() != dim_) {
    throw DimensionError("queue width " + std::to_string(dim_) + ", got batch shape " +
                         numkit::shape_string(z.shape()));
  }
  for (std::size_t r = 0; r < z.rows(); ++r) require_unit(z.row(r), "enqueue");
  for (std::size_t r = 0; r < z.rows(); ++r) {
    std::copy_n(z.row(r).begin(), dim_, buffer_.row(cursor_).begin());
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }
}

Tensor EmbeddingQueue::contents() const {
  Tensor out = Tensor::matrix(size_, dim_);
  const std::size_t oldest = (cursor_ + capacity_ - size_) % capacity_;
  for (std::size_t i = 0; i < size_; ++i) {
    std::copy_n(buffer_.row((oldest + i) % capacity_).begin(), dim_, out.row(i).begin());
  }
  return out;
}

EmbeddingQueue EmbeddingQueue::restore(std::size_t capacity, std::size_t dim, std::size_t size,
                                       std::size_t cursor, std::vector<double> buffer) {
  if (size > capacity || cursor >= capacity || buffer.size() != capacity * dim) {
    throw StructuralError("inconsistent queue state");
  }
  EmbeddingQueue q(capacity, dim);
  q.size_ = size;
  q.cursor_ = cursor;
  q.buffer_ = Tensor({capacity, dim}, std::move(buffer));
  return q;
}

PrototypeBank::PrototypeBank(std::size_t num_classes, std::size_t dim, double momentum,
                             bool renormalize)
    : num_classes_(num_classes),
      dim_(dim),
      momentum_(momentum),
      renormalize_(renormalize),
      protos_(Tensor::matrix(num_classes, dim)),
      initialized_(num_classes, 0) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("prototype momentum must lie in [0, 1), got " + std::to_string(momentum));
  }
}

bool PrototypeBank::all_initialized() const {
  return std::all_of(initialized_.begin(), initialized_.end(), [](auto f) { return f != 0; });
}

void PrototypeBank::init(const Tensor& z, std::span<const std::size_t> labels) {
  if (z.rows() != labels.size() || z.cols() != dim_) {
    throw DimensionError("init_prototypes: embeddings " + numkit::shape_string(z.shape()) +
                         " with " + std::to_string(labels.size()) + " labels");
  }
  Tensor sums = Tensor::matrix(num_classes_, dim_);
  std::vector<std::size_t> counts(num_classes_, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t k = labels[i];
    if (k >= num_classes_) throw DimensionError("init_prototypes: label out of range");
    auto dst = sums.row(k);
    const auto src = z.row(i);
    for (std::size_t j = 0; j < dim_; ++j) dst[j] += src[j];
    ++counts[k];
  }
  for (std::size_t k = 0; k < num_classes_; ++k) {
    if (counts[k] == 0) {
      throw DegenerateInputError("init_prototypes: class " + std::to_string(k) +
                                 " has no samples");
    }
    auto row = sums.row(k);
    for (auto& v : row) v /= static_cast<double>(counts[k]);
    if (numkit::norm(row) < 1e-12) {
      throw DegenerateInputError("init_prototypes: class " + std::to_string(k) +
                                 " has a zero mean embedding");
    }
    normalize_into(row, "init_prototypes", k);
  }
  protos_ = std::move(sums);
  std::fill(initialized_.begin(), initialized_.end(), 1);
}

void PrototypeBank::update(std::size_t k, std::span<const double> z) {
  if (k >= num_classes_) throw DimensionError("update_prototype: class out of range");
  if (!initialized_[k]) {
    throw StateError("update_prototype: class " + std::to_string(k) +
                     " is not initialized (warm-up has not completed)");
  }
  if (z.size() != dim_) throw DimensionError("update_prototype: width mismatch");
  require_unit(z, "update_prototype");
  auto c = protos_.row(k);
  for (std::size_t j = 0; j < dim_; ++j) c[j] = momentum_ * c[j] + (1.0 - momentum_) * z[j];
  if (renormalize_) normalize_into(c, "update_prototype", k);
}

std::vector<double> PrototypeBank::scores(std::span<const double> z, double tau) const {
  Tensor batch({1, z.size()}, std::vector<double>(z.begin(), z.end()));
  const Tensor s = scores(batch, tau);
  return {s.data().begin(), s.data().end()};
}

Tensor PrototypeBank::scores(const Tensor& z, double tau) const {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive, got " + std::to_string(tau));
  if (!all_initialized()) throw StateError("prototype_scores: prototypes are not initialized");
  if (z.cols() != dim_) {
    throw DimensionError("prototype_scores: width " + std::to_string(dim_) + ", got " +
                         numkit::shape_string(z.shape()));
  }
  Tensor logits = numkit::matmul_nt(z, protos_);
  for (auto& v : logits.data()) v /= tau;
  return numkit::softmax_rows(logits);
}

void PrototypeBank::set_prototype(std::size_t k, std::span<const double> c) {
  if (k >= num_classes_ || c.size() != dim_) throw DimensionError("set_prototype: bad shape");
  std::copy(c.begin(), c.end(), protos_.row(k).begin());
  initialized_[k] = 1;
}

}  // namespace mopro::memory
