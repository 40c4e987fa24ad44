#pragma once

#include <cstddef>

namespace rhm::kern {

/// Table of dense-arithmetic primitives. Two implementations exist: a scalar
/// reference and an AVX2+FMA variant. The active table is resolved once per
/// process: RHM_KERNELS=scalar|avx2|auto (default auto = best supported).
/// Everything above this layer (eig, manifolds, solvers) is backend-agnostic.
struct Kernels {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sumsq)(const double* a, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x *= alpha
  void (*scal)(double alpha, double* x, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*div)(const double* a, const double* b, double* out, std::size_t n);
  // Plane rotation (BLAS drot convention): x <- c*x + s*y, y <- c*y - s*x.
  void (*rot)(double* x, double* y, double c, double s, std::size_t n);
  // Row-major matrix products, C overwritten.
  // gemm_nn: C(m,n) = A(m,k) * B(k,n)
  void (*gemm_nn)(const double* a, const double* b, double* c, int m, int k, int n);
  // gemm_tn: C(m,n) = A(k,m)^T * B(k,n)
  void (*gemm_tn)(const double* a, const double* b, double* c, int m, int k, int n);
  // gemm_nt: C(m,n) = A(m,k) * B(n,k)^T
  void (*gemm_nt)(const double* a, const double* b, double* c, int m, int k, int n);
};

/// Active table, selected on first use.
const Kernels& active();

/// Scalar reference implementation (always available).
const Kernels& scalar_kernels();

/// AVX2 implementation, or nullptr when the build or CPU lacks it.
const Kernels* avx2_kernels();

/// True when the running CPU supports the AVX2 table.
bool avx2_supported();

}  // namespace rhm::kern
