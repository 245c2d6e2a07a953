// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pdeattn/kernels.hpp"
#include "test_util.hpp"

using namespace pdeattn;
using namespace pdeattn::testing;

namespace {

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    simd_ = kernels::avx2_kernels();
    if (simd_ == nullptr) GTEST_SKIP() << "AVX2 not available on this machine";
  }
  const kernels::KernelSet& ref_ = kernels::scalar_kernels();
  const kernels::KernelSet* simd_ = nullptr;
};

}  // namespace

TEST_F(KernelEquivalence, LaplacianRowBitExact) {
  Rng rng(11);
  for (std::size_t n = 2; n <= 67; ++n) {
    for (bool periodic : {true, false}) {
      const auto in = random_vector(rng, n);
      std::vector<double> a(n), b(n);
      ref_.laplacian_row(in.data(), a.data(), n, periodic);
      simd_->laplacian_row(in.data(), b.data(), n, periodic);
      EXPECT_EQ(a, b) << "n=" << n << " periodic=" << periodic;
    }
  }
}

TEST_F(KernelEquivalence, DiffusionRowBitExact) {
  Rng rng(12);
  for (std::size_t n = 2; n <= 67; ++n) {
    const double coeff = random_real(rng, 0.0, 0.5);
    for (bool periodic : {true, false}) {
      const auto in = random_vector(rng, n, 0.0, 1.0);
      std::vector<double> a(n), b(n);
      ref_.diffusion_row(in.data(), a.data(), n, periodic, coeff);
      simd_->diffusion_row(in.data(), b.data(), n, periodic, coeff);
      EXPECT_EQ(a, b) << "n=" << n;
    }
  }
}

TEST_F(KernelEquivalence, AxpyBitExact) {
  Rng rng(13);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 17u, 128u}) {
    const auto x = random_vector(rng, n);
    auto y1 = random_vector(rng, n);
    auto y2 = y1;
    ref_.axpy(0.37, x.data(), y1.data(), n);
    simd_->axpy(0.37, x.data(), y2.data(), n);
    EXPECT_EQ(y1, y2);
  }
}

TEST_F(KernelEquivalence, ReductionsAgreeToRoundoff) {
  Rng rng(14);
  for (std::size_t n : {1u, 7u, 8u, 9u, 33u, 257u}) {
    const auto a = random_vector(rng, n);
    const auto b = random_vector(rng, n);
    const double r = ref_.dot(a.data(), b.data(), n);
    const double s = simd_->dot(a.data(), b.data(), n);
    EXPECT_NEAR(r, s, 1e-13 * static_cast<double>(n));
  }
}

TEST_F(KernelEquivalence, GemmVariantsAgreeToRoundoff) {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = random_size(rng, 1, 19);
    const std::size_t k = random_size(rng, 1, 19);
    const std::size_t n = random_size(rng, 1, 19);
    const auto a = random_vector(rng, m * k);
    const auto b_nn = random_vector(rng, k * n);
    const auto b_nt = random_vector(rng, n * k);
    const auto a_tn = random_vector(rng, k * m);
    std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
    ref_.gemm_nn(a.data(), b_nn.data(), c1.data(), m, k, n);
    simd_->gemm_nn(a.data(), b_nn.data(), c2.data(), m, k, n);
    for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_NEAR(c1[i], c2[i], 1e-13);
    std::fill(c1.begin(), c1.end(), 0.0);
    std::fill(c2.begin(), c2.end(), 0.0);
    ref_.gemm_nt(a.data(), b_nt.data(), c1.data(), m, k, n);
    simd_->gemm_nt(a.data(), b_nt.data(), c2.data(), m, k, n);
    for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_NEAR(c1[i], c2[i], 1e-13);
    std::fill(c1.begin(), c1.end(), 0.0);
    std::fill(c2.begin(), c2.end(), 0.0);
    ref_.gemm_tn(a_tn.data(), b_nn.data(), c1.data(), m, k, n);
    simd_->gemm_tn(a_tn.data(), b_nn.data(), c2.data(), m, k, n);
    for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_NEAR(c1[i], c2[i], 1e-13);
  }
}

TEST(KernelReference, GemmMatchesNaiveTripleLoop) {
  Rng rng(16);
  const std::size_t m = 5, k = 7, n = 3;
  const auto a = random_vector(rng, m * k);
  const auto b = random_vector(rng, k * n);
  std::vector<double> c(m * n, 0.0);
  kernels::scalar_kernels().gemm_nn(a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], acc, 1e-14);
    }
}

TEST(KernelDispatch, ForceBackendSwitchesActiveSet) {
  kernels::force_backend(kernels::Backend::scalar);
  EXPECT_EQ(kernels::active().backend, kernels::Backend::scalar);
  kernels::force_backend(kernels::Backend::avx2);
  if (kernels::avx2_kernels() != nullptr)
    EXPECT_EQ(kernels::active().backend, kernels::Backend::avx2);
  else
    EXPECT_EQ(kernels::active().backend, kernels::Backend::scalar);
}
