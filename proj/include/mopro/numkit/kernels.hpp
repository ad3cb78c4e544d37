#pragma once

#include <cstddef>
#include <string_view>

namespace mopro::numkit::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

// Every kernel fixes its per-element accumulation order, so the scalar and
// vector variants of one entry produce bitwise-identical results:
//   gemm_nn / gemm_tn  sum over the shared index in ascending order from 0.0;
//   gemm_nt / dot      use four striped partial sums combined as
//                      (p0 + p1) + (p2 + p3), then add the tail in order.
// The row range [r0, r1) selects which output rows to compute so callers can
// split work across threads without changing any result.
struct KernelTable {
  Isa isa;

  /// C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, std::size_t r0, std::size_t r1, bool accumulate);
  /// C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, std::size_t r0, std::size_t r1, bool accumulate);
  /// C[m x n] (+)= A[k x m]^T * B[k x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, std::size_t r0, std::size_t r1, bool accumulate);
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y <- beta * y + alpha * x
  void (*axpby)(double alpha, const double* x, double beta, double* y, std::size_t n);
  /// Heavy-ball SGD with L2 weight decay:
  ///   v <- mu * v + (g + wd * p);  p <- p - lr * v
  void (*sgd_momentum)(double* param, double* velocity, const double* grad, std::size_t n,
                       double lr, double mu, double weight_decay);
};

const KernelTable& scalar_table();

/// Null when the AVX2 variants were not compiled in or the CPU lacks AVX2.
const KernelTable* avx2_table();

bool cpu_supports_avx2();

/// Table used by every numkit operation. Defaults to the widest ISA the CPU
/// supports unless MOPRO_SIMD=scalar is set in the environment.
const KernelTable& active();

/// Throws StateError when the requested ISA is unavailable.
void select(Isa isa);

}  // namespace mopro::numkit::kernels
