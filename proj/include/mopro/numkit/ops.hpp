#pragma once

#include "mopro/numkit/tensor.hpp"

namespace mopro::numkit {

// Tape-free forward operations. The differentiable versions live in
// autograd.hpp and call straight into these.

/// a[m x k] * b[k x n]; DimensionError names both shapes on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[m x k] * b[n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a[k x m]^T * b[k x n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);

/// Row-wise unit Euclidean norm. Throws DegenerateInputError on a zero row.
Tensor l2_normalize_rows(const Tensor& x);

/// Row-wise softmax with max subtraction. Throws NumericError on NaN input.
Tensor softmax_rows(const Tensor& logits);

/// x[r, :] += bias for every row; bias is 1 x cols.
void add_bias_inplace(Tensor& x, const Tensor& bias);
void relu_inplace(Tensor& x);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// Gathers rows by index into a new |idx| x cols tensor.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx);

}  // namespace mopro::numkit
