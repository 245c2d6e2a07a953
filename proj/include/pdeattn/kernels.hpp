// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops behind the grid, pde and attention modules.
//
// Every routine has a portable scalar reference and, on x86-64, an AVX2
// variant. The variant is chosen once at runtime from CPUID and can be pinned
// with PDEATTN_SIMD=scalar|avx2 or force_backend(). Elementwise kernels are
// bit-identical across backends (same operation order, no FMA contraction);
// reductions and GEMM may differ in the last bits.

#include <cstddef>
#include <string_view>

namespace pdeattn::kernels {

enum class Backend { scalar, avx2 };

struct KernelSet {
  Backend backend;
  std::string_view name;

  /// out[j] = (in[j-1] - 2 in[j]) + in[j+1]; periodic wrap or mirrored ends.
  /// n >= 2.
  void (*laplacian_row)(const double* in, double* out, std::size_t n, bool periodic);

  /// out[j] = in[j] + coeff * laplacian(in)[j], same operation order as
  /// laplacian_row followed by an elementwise update.
  void (*diffusion_row)(const double* in, double* out, std::size_t n, bool periodic,
                        double coeff);

  /// y[i] += s * x[i]
  void (*axpy)(double s, const double* x, double* y, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);

  /// c[m x n] += a[m x k] * b[k x n], all row-major, contiguous.
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  /// c[m x n] += a[m x k] * b[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  /// c[m x n] += a[k x m]^T * b[k x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
};

const KernelSet& scalar_kernels();

/// nullptr when AVX2 was not compiled in or the CPU lacks it.
const KernelSet* avx2_kernels();

const KernelSet& active();

void force_backend(Backend b);

}  // namespace pdeattn::kernels
