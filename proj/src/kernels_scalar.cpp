// SPDX-License-Identifier: Apache-2.0
#include "kernels_impl.hpp"

namespace pdeattn::kernels::scalar {

void laplacian_row(const double* in, double* out, std::size_t n, bool periodic) {
  const double first_left = periodic ? in[n - 1] : in[0];
  const double last_right = periodic ? in[0] : in[n - 1];
  out[0] = (first_left - 2.0 * in[0]) + in[1];
  for (std::size_t j = 1; j + 1 < n; ++j) out[j] = (in[j - 1] - 2.0 * in[j]) + in[j + 1];
  out[n - 1] = (in[n - 2] - 2.0 * in[n - 1]) + last_right;
}

void diffusion_row(const double* in, double* out, std::size_t n, bool periodic,
                   double coeff) {
  const double first_left = periodic ? in[n - 1] : in[0];
  const double last_right = periodic ? in[0] : in[n - 1];
  // in and out must not overlap.
  out[0] = in[0] + coeff * ((first_left - 2.0 * in[0]) + in[1]);
  for (std::size_t j = 1; j + 1 < n; ++j)
    out[j] = in[j] + coeff * ((in[j - 1] - 2.0 * in[j]) + in[j + 1]);
  out[n - 1] = in[n - 1] + coeff * ((in[n - 2] - 2.0 * in[n - 1]) + last_right);
}

void axpy(double s, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[p * m + i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace pdeattn::kernels::scalar
