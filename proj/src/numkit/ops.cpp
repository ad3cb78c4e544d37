#include "mopro/numkit/ops.hpp"

#include <algorithm>
#include <cmath>

#include "mopro/error.hpp"
#include "mopro/numkit/kernels.hpp"
#include "mopro/numkit/parallel.hpp"

namespace mopro::numkit {
namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

// Rows per worker below which threading costs more than it saves.
constexpr std::size_t kMinRows = 16;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c = Tensor::matrix(m, n);
  const auto& kt = kernels::active();
  parallel_rows(m, kMinRows, [&](std::size_t r0, std::size_t r1) {
    kt.gemm_nn(a.data().data(), b.data().data(), c.data().data(), m, k, n, r0, r1, false);
  });
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) mismatch("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor c = Tensor::matrix(m, n);
  const auto& kt = kernels::active();
  parallel_rows(m, kMinRows, [&](std::size_t r0, std::size_t r1) {
    kt.gemm_nt(a.data().data(), b.data().data(), c.data().data(), m, k, n, r0, r1, false);
  });
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.rows() != b.rows()) mismatch("matmul_tn", a, b);
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Tensor c = Tensor::matrix(m, n);
  const auto& kt = kernels::active();
  parallel_rows(m, kMinRows, [&](std::size_t r0, std::size_t r1) {
    kt.gemm_tn(a.data().data(), b.data().data(), c.data().data(), m, k, n, r0, r1, false);
  });
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  return kernels::active().dot(a.data(), b.data(), a.size());
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Tensor l2_normalize_rows(const Tensor& x) {
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    const double nrm = norm(row);
    if (!(nrm > 0.0) || !std::isfinite(nrm)) {
      throw DegenerateInputError("l2_normalize: row " + std::to_string(r) +
                                 " has norm " + std::to_string(nrm));
    }
    for (auto& v : row) v /= nrm;
  }
  return y;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor y = logits;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    double mx = -INFINITY;
    for (double v : row) {
      if (std::isnan(v)) throw NumericError("softmax_rows: NaN in row " + std::to_string(r));
      mx = std::max(mx, v);
    }
    double total = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (auto& v : row) v /= total;
  }
  return y;
}

void add_bias_inplace(Tensor& x, const Tensor& bias) {
  if (bias.size() != x.cols()) mismatch("add_bias", x, bias);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
}

void relu_inplace(Tensor& x) {
  for (auto& v : x.data()) v = v > 0.0 ? v : 0.0;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  Tensor out = Tensor::matrix(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x.row(idx[i]).begin(), x.cols(), out.row(i).begin());
  }
  return out;
}

}  // namespace mopro::numkit
