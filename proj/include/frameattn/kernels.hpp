// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision inner loops used by the tensor layer.
//
// Every kernel has a portable scalar reference in kernels/scalar.cpp. On x86-64
// an AVX2+FMA variant is compiled separately and chosen at runtime when the
// CPU supports it. Set FRAMEATTN_KERNELS=scalar (or call set_backend) to force
// the reference path. The two backends agree exactly on elementwise kernels
// and to a few ulps on reductions (dot, gemm), where summation order differs.
#pragma once

#include <cstddef>
#include <string_view>

namespace frameattn::kernels {

enum class Backend { kScalar, kAvx2 };

// All matrices are row-major with explicit leading dimensions.
struct KernelTable {
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = a + b, out = a * b, out = alpha * a  (out may alias an input)
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(double alpha, const double* a, double* out, std::size_t n);
  // out = max(a, 0);  gin += gout * (a > 0)
  void (*relu)(const double* a, double* out, std::size_t n);
  void (*relu_backward)(const double* a, const double* gout, double* gin, std::size_t n);
  double (*sum)(const double* a, std::size_t n);

  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled in.
const KernelTable* avx2_table();

bool available(Backend b);
const KernelTable& table(Backend b);

// Active backend; defaults to the best available one unless overridden by the
// FRAMEATTN_KERNELS environment variable ("scalar" or "avx2").
const KernelTable& active();
Backend active_backend();
// Throws ConfigError if the backend is unavailable on this build/CPU.
void set_backend(Backend b);

std::string_view backend_name(Backend b);

}  // namespace frameattn::kernels
