// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace pdeattn::kernels {

namespace scalar {
void laplacian_row(const double* in, double* out, std::size_t n, bool periodic);
void diffusion_row(const double* in, double* out, std::size_t n, bool periodic,
                   double coeff);
void axpy(double s, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
}  // namespace scalar

#if defined(PDEATTN_HAVE_AVX2)
namespace avx2 {
void laplacian_row(const double* in, double* out, std::size_t n, bool periodic);
void diffusion_row(const double* in, double* out, std::size_t n, bool periodic,
                   double coeff);
void axpy(double s, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
}  // namespace avx2
#endif

}  // namespace pdeattn::kernels
