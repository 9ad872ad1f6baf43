// Compiled with -mavx2 only for this translation unit; callers reach it
// through the dispatch table after a CPUID check.
#include "tcm/kernels/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace tcm::kernels {
namespace {

// Register tile of 4 rows x 8 columns. The accumulation over p runs in the
// same order as the scalar reference and uses mul+add (not fmadd), so every
// output element is bitwise identical to the reference.
template <bool TransA>
inline double a_at(const double* a, std::size_t lda, std::size_t i,
                   std::size_t p) {
  return TransA ? a[p * lda + i] : a[i * lda + p];
}

template <bool TransA>
void gemm_impl(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc) {
  const std::size_t n8 = n - n % 8;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j < n8; j += 8) {
      __m256d acc[4][2];
      for (int r = 0; r < 4; ++r) {
        acc[r][0] = _mm256_loadu_pd(c + (i + r) * ldc + j);
        acc[r][1] = _mm256_loadu_pd(c + (i + r) * ldc + j + 4);
      }
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * ldb + j);
        const __m256d b1 = _mm256_loadu_pd(b + p * ldb + j + 4);
        for (int r = 0; r < 4; ++r) {
          const __m256d av = _mm256_set1_pd(a_at<TransA>(a, lda, i + r, p));
          acc[r][0] = _mm256_add_pd(acc[r][0], _mm256_mul_pd(av, b0));
          acc[r][1] = _mm256_add_pd(acc[r][1], _mm256_mul_pd(av, b1));
        }
      }
      for (int r = 0; r < 4; ++r) {
        _mm256_storeu_pd(c + (i + r) * ldc + j, acc[r][0]);
        _mm256_storeu_pd(c + (i + r) * ldc + j + 4, acc[r][1]);
      }
    }
    for (; j < n; ++j) {
      for (int r = 0; r < 4; ++r) {
        double s = c[(i + r) * ldc + j];
        for (std::size_t p = 0; p < k; ++p)
          s += a_at<TransA>(a, lda, i + r, p) * b[p * ldb + j];
        c[(i + r) * ldc + j] = s;
      }
    }
  }
  for (; i < m; ++i) {
    std::size_t j = 0;
    for (; j < n8; j += 8) {
      __m256d acc0 = _mm256_loadu_pd(c + i * ldc + j);
      __m256d acc1 = _mm256_loadu_pd(c + i * ldc + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(a_at<TransA>(a, lda, i, p));
        acc0 = _mm256_add_pd(acc0,
                             _mm256_mul_pd(av, _mm256_loadu_pd(b + p * ldb + j)));
        acc1 = _mm256_add_pd(
            acc1, _mm256_mul_pd(av, _mm256_loadu_pd(b + p * ldb + j + 4)));
      }
      _mm256_storeu_pd(c + i * ldc + j, acc0);
      _mm256_storeu_pd(c + i * ldc + j + 4, acc1);
    }
    for (; j < n; ++j) {
      double s = c[i * ldc + j];
      for (std::size_t p = 0; p < k; ++p)
        s += a_at<TransA>(a, lda, i, p) * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
  }
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc) {
  gemm_impl<false>(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc) {
  gemm_impl<true>(m, n, k, a, lda, b, ldb, c, ldc);
}

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(
        acc0, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(x + i + 4),
                                             _mm256_loadu_pd(y + i + 4)));
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * ldc + j] += dot(k, a + i * lda, b + j * ldb);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i),
                                          _mm256_mul_pd(av, _mm256_loadu_pd(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void relu(std::size_t n, const double* x, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // Keeps +0.0 for non-positive inputs, matching the scalar ternary.
    _mm256_storeu_pd(out + i, _mm256_and_pd(v, _mm256_cmp_pd(v, zero, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

constexpr KernelTable kAvx2{"avx2", gemm, gemm_tn, gemm_nt, dot,
                            axpy,   add,  mul,     scale,   relu};

}  // namespace

const KernelTable* avx2_table_if_compiled() { return &kAvx2; }

}  // namespace tcm::kernels

#else

namespace tcm::kernels {
const KernelTable* avx2_table_if_compiled() { return nullptr; }
}  // namespace tcm::kernels

#endif
