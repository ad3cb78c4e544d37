// Reference kernels. These define the accumulation order the vector variants
// must reproduce bit for bit.

#include <vector>

#include "kernels_impl.hpp"

namespace mopro::numkit::kernels::scalar {
namespace {

void gemm_nn(const double* a, const double* b, double* c, std::size_t /*m*/, std::size_t k,
             std::size_t n, std::size_t r0, std::size_t r1, bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = r0; i < r1; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const double* arow = a + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      const double* brow = b + t * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] = acc[j] + av * brow[j];
    }
    double* crow = c + i * n;
    if (accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + acc[j];
    } else {
      for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
    }
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
  std::size_t t = 0;
  for (; t + 4 <= n; t += 4) {
    p0 = p0 + a[t] * b[t];
    p1 = p1 + a[t + 1] * b[t + 1];
    p2 = p2 + a[t + 2] * b[t + 2];
    p3 = p3 + a[t + 3] * b[t + 3];
  }
  double s = (p0 + p1) + (p2 + p3);
  for (; t < n; ++t) s = s + a[t] * b[t];
  return s;
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t /*m*/, std::size_t k,
             std::size_t n, std::size_t r0, std::size_t r1, bool accumulate) {
  for (std::size_t i = r0; i < r1; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, std::size_t r0, std::size_t r1, bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = r0; i < r1; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[t * m + i];
      const double* brow = b + t * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] = acc[j] + av * brow[j];
    }
    double* crow = c + i * n;
    if (accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + acc[j];
    } else {
      for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
    }
  }
}

void axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = beta * y[i] + alpha * x[i];
}

void sgd_momentum(double* param, double* velocity, const double* grad, std::size_t n, double lr,
                  double mu, double weight_decay) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i] + weight_decay * param[i];
    velocity[i] = mu * velocity[i] + g;
    param[i] = param[i] - lr * velocity[i];
  }
}

}  // namespace

const KernelTable table{Isa::Scalar, gemm_nn, gemm_nt, gemm_tn, dot, axpby, sgd_momentum};

}  // namespace mopro::numkit::kernels::scalar
