// AVX2 variants. Compiled with -mavx2 but without -mfma: a fused
// multiply-add rounds once where the reference rounds twice, and these
// kernels must match the scalar table exactly.

#include <immintrin.h>

#include "kernels_impl.hpp"

namespace mopro::numkit::kernels::avx2 {
namespace {

inline __m256d madd(__m256d acc, __m256d x, __m256d y) {
  return _mm256_add_pd(acc, _mm256_mul_pd(x, y));
}

inline void store_row(double* dst, __m256d v, bool accumulate) {
  if (accumulate) v = _mm256_add_pd(_mm256_loadu_pd(dst), v);
  _mm256_storeu_pd(dst, v);
}

// Shared by NN and TN: the only difference is where A[i, t] lives.
template <bool Transposed>
void gemm_rows(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, std::size_t r0, std::size_t r1, bool accumulate) {
  auto a_at = [&](std::size_t i, std::size_t t) {
    return Transposed ? a[t * m + i] : a[i * k + t];
  };
  std::size_t i = r0;
  // 4 rows x 8 columns per block: 8 accumulators, B loads shared by 4 rows.
  for (; i + 4 <= r1; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t t = 0; t < k; ++t) {
        const __m256d b0 = _mm256_loadu_pd(b + t * n + j);
        const __m256d b1 = _mm256_loadu_pd(b + t * n + j + 4);
        __m256d av = _mm256_set1_pd(a_at(i, t));
        c00 = madd(c00, av, b0);
        c01 = madd(c01, av, b1);
        av = _mm256_set1_pd(a_at(i + 1, t));
        c10 = madd(c10, av, b0);
        c11 = madd(c11, av, b1);
        av = _mm256_set1_pd(a_at(i + 2, t));
        c20 = madd(c20, av, b0);
        c21 = madd(c21, av, b1);
        av = _mm256_set1_pd(a_at(i + 3, t));
        c30 = madd(c30, av, b0);
        c31 = madd(c31, av, b1);
      }
      store_row(c + i * n + j, c00, accumulate);
      store_row(c + i * n + j + 4, c01, accumulate);
      store_row(c + (i + 1) * n + j, c10, accumulate);
      store_row(c + (i + 1) * n + j + 4, c11, accumulate);
      store_row(c + (i + 2) * n + j, c20, accumulate);
      store_row(c + (i + 2) * n + j + 4, c21, accumulate);
      store_row(c + (i + 3) * n + j, c30, accumulate);
      store_row(c + (i + 3) * n + j + 4, c31, accumulate);
    }
    for (std::size_t r = i; r < i + 4; ++r) {
      for (std::size_t jj = j; jj < n; ++jj) {
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s = s + a_at(r, t) * b[t * n + jj];
        c[r * n + jj] = accumulate ? c[r * n + jj] + s : s;
      }
    }
  }
  for (; i < r1; ++i) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t t = 0; t < k; ++t) {
        acc = madd(acc, _mm256_set1_pd(a_at(i, t)), _mm256_loadu_pd(b + t * n + j));
      }
      store_row(c + i * n + j, acc, accumulate);
    }
    for (; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s = s + a_at(i, t) * b[t * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, std::size_t r0, std::size_t r1, bool accumulate) {
  gemm_rows<false>(a, b, c, m, k, n, r0, r1, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, std::size_t r0, std::size_t r1, bool accumulate) {
  gemm_rows<true>(a, b, c, m, k, n, r0, r1, accumulate);
}

inline double finish_dot(__m256d acc, const double* a, const double* b, std::size_t t,
                         std::size_t n) {
  alignas(32) double p[4];
  _mm256_store_pd(p, acc);
  double s = (p[0] + p[1]) + (p[2] + p[3]);
  for (; t < n; ++t) s = s + a[t] * b[t];
  return s;
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t t = 0;
  for (; t + 4 <= n; t += 4) acc = madd(acc, _mm256_loadu_pd(a + t), _mm256_loadu_pd(b + t));
  return finish_dot(acc, a, b, t, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t /*m*/, std::size_t k,
             std::size_t n, std::size_t r0, std::size_t r1, bool accumulate) {
  const std::size_t k4 = k & ~std::size_t{3};
  for (std::size_t i = r0; i < r1; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      for (std::size_t t = 0; t < k4; t += 4) {
        const __m256d av = _mm256_loadu_pd(arow + t);
        s0 = madd(s0, av, _mm256_loadu_pd(b0 + t));
        s1 = madd(s1, av, _mm256_loadu_pd(b1 + t));
        s2 = madd(s2, av, _mm256_loadu_pd(b2 + t));
        s3 = madd(s3, av, _mm256_loadu_pd(b3 + t));
      }
      const double d[4] = {finish_dot(s0, arow, b0, k4, k), finish_dot(s1, arow, b1, k4, k),
                           finish_dot(s2, arow, b2, k4, k), finish_dot(s3, arow, b3, k4, k)};
      for (int q = 0; q < 4; ++q) crow[j + q] = accumulate ? crow[j + q] + d[q] : d[q];
    }
    for (; j < n; ++j) {
      const double s = dot(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void axpby(double alpha, const double* x, double beta, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d yv = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(yv, _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) y[i] = beta * y[i] + alpha * x[i];
}

void sgd_momentum(double* param, double* velocity, const double* grad, std::size_t n, double lr,
                  double mu, double weight_decay) {
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d vmu = _mm256_set1_pd(mu);
  const __m256d vwd = _mm256_set1_pd(weight_decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_loadu_pd(param + i);
    const __m256d g = _mm256_add_pd(_mm256_loadu_pd(grad + i), _mm256_mul_pd(vwd, p));
    const __m256d v = _mm256_add_pd(_mm256_mul_pd(vmu, _mm256_loadu_pd(velocity + i)), g);
    _mm256_storeu_pd(velocity + i, v);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(p, _mm256_mul_pd(vlr, v)));
  }
  for (; i < n; ++i) {
    const double g = grad[i] + weight_decay * param[i];
    velocity[i] = mu * velocity[i] + g;
    param[i] = param[i] - lr * velocity[i];
  }
}

}  // namespace

const KernelTable table{Isa::Avx2, gemm_nn, gemm_nt, gemm_tn, dot, axpby, sgd_momentum};

}  // namespace mopro::numkit::kernels::avx2
