// SPDX-License-Identifier: Apache-2.0
#include "kernels_impl.hpp"

#if defined(PDEATTN_HAVE_AVX2)

#include <immintrin.h>

// Elementwise kernels are compiled for plain AVX2 so the compiler cannot fuse
// multiply/add pairs; they must match the scalar reference bit for bit.
#define PDEATTN_AVX2 __attribute__((target("avx2")))
#define PDEATTN_AVX2_FMA __attribute__((target("avx2,fma")))

namespace pdeattn::kernels::avx2 {

namespace {

PDEATTN_AVX2_FMA inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

PDEATTN_AVX2 void laplacian_row(const double* in, double* out, std::size_t n,
                                bool periodic) {
  const double first_left = periodic ? in[n - 1] : in[0];
  const double last_right = periodic ? in[0] : in[n - 1];
  out[0] = (first_left - 2.0 * in[0]) + in[1];
  const __m256d two = _mm256_set1_pd(2.0);
  std::size_t j = 1;
  for (; j + 4 < n; j += 4) {
    __m256d l = _mm256_loadu_pd(in + j - 1);
    __m256d c = _mm256_loadu_pd(in + j);
    __m256d r = _mm256_loadu_pd(in + j + 1);
    _mm256_storeu_pd(out + j, _mm256_add_pd(_mm256_sub_pd(l, _mm256_mul_pd(two, c)), r));
  }
  for (; j + 1 < n; ++j) out[j] = (in[j - 1] - 2.0 * in[j]) + in[j + 1];
  out[n - 1] = (in[n - 2] - 2.0 * in[n - 1]) + last_right;
}

PDEATTN_AVX2 void diffusion_row(const double* in, double* out, std::size_t n,
                                bool periodic, double coeff) {
  const double first_left = periodic ? in[n - 1] : in[0];
  const double last_right = periodic ? in[0] : in[n - 1];
  out[0] = in[0] + coeff * ((first_left - 2.0 * in[0]) + in[1]);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d k = _mm256_set1_pd(coeff);
  std::size_t j = 1;
  for (; j + 4 < n; j += 4) {
    __m256d l = _mm256_loadu_pd(in + j - 1);
    __m256d c = _mm256_loadu_pd(in + j);
    __m256d r = _mm256_loadu_pd(in + j + 1);
    __m256d lap = _mm256_add_pd(_mm256_sub_pd(l, _mm256_mul_pd(two, c)), r);
    _mm256_storeu_pd(out + j, _mm256_add_pd(c, _mm256_mul_pd(k, lap)));
  }
  for (; j + 1 < n; ++j) out[j] = in[j] + coeff * ((in[j - 1] - 2.0 * in[j]) + in[j + 1]);
  out[n - 1] = in[n - 1] + coeff * ((in[n - 2] - 2.0 * in[n - 1]) + last_right);
}

PDEATTN_AVX2 void axpy(double s, const double* x, double* y, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(yv, _mm256_mul_pd(sv, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) y[i] += s * x[i];
}

PDEATTN_AVX2_FMA double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

namespace {

// c_row[0:n] += av * b_row[0:n]
PDEATTN_AVX2_FMA inline void row_fma(double av, const double* b_row, double* c_row,
                                     std::size_t n) {
  const __m256d s = _mm256_set1_pd(av);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4)
    _mm256_storeu_pd(c_row + j,
                     _mm256_fmadd_pd(s, _mm256_loadu_pd(b_row + j), _mm256_loadu_pd(c_row + j)));
  for (; j < n; ++j) c_row[j] += av * b_row[j];
}

}  // namespace

PDEATTN_AVX2_FMA void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
                              std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) row_fma(a[i * k + p], b + p * n, ci, n);
  }
}

PDEATTN_AVX2_FMA void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
                              std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
}

PDEATTN_AVX2_FMA void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
                              std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) row_fma(a[p * m + i], bp, c + i * n, n);
  }
}

}  // namespace pdeattn::kernels::avx2

#endif  // PDEATTN_HAVE_AVX2
