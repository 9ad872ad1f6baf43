#pragma once

// Dense double-precision inner loops used by the autograd ops.
//
// Two implementations exist: a portable scalar reference and an AVX2 variant
// (x86-64 only). The variant is picked once at startup from the CPU feature
// flags and can be overridden with the TCM_KERNELS environment variable
// ("scalar" or "avx2").
//
// gemm/gemm_tn/axpy/add/mul/scale/relu keep the per-element summation order of
// the scalar reference and never contract to FMA, so both variants produce
// bitwise-identical results. dot and gemm_nt reduce in SIMD lanes and agree
// with the reference only up to rounding.

#include <cstddef>
#include <string_view>

namespace tcm::kernels {

struct KernelTable {
  const char* name;

  // C[m,n] += A[m,k] * B[k,n]            (row-major, leading dimensions given)
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);

  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  void (*scale)(std::size_t n, double alpha, const double* x, double* out);
  void (*relu)(std::size_t n, const double* x, double* out);
};

const KernelTable& scalar_table();

// nullptr when the build or the running CPU lacks AVX2.
const KernelTable* avx2_table();

// Table selected for this process.
const KernelTable& active();

// Overrides the selection ("scalar", "avx2"); returns false if unavailable.
bool select(std::string_view name);

}  // namespace tcm::kernels
