// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"
#include "pdeattn/kernels.hpp"

namespace pdeattn::kernels {

namespace {

const KernelSet kScalar{
    Backend::scalar,    "scalar",         &scalar::laplacian_row, &scalar::diffusion_row,
    &scalar::axpy,      &scalar::dot,     &scalar::gemm_nn,       &scalar::gemm_nt,
    &scalar::gemm_tn,
};

#if defined(PDEATTN_HAVE_AVX2)
const KernelSet kAvx2{
    Backend::avx2,    "avx2",         &avx2::laplacian_row, &avx2::diffusion_row,
    &avx2::axpy,      &avx2::dot,     &avx2::gemm_nn,       &avx2::gemm_nt,
    &avx2::gemm_tn,
};
#endif

bool cpu_has_avx2() {
#if defined(PDEATTN_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelSet* select_default() {
  const char* env = std::getenv("PDEATTN_SIMD");
  if (env != nullptr && std::string_view(env) == "scalar") return &kScalar;
  if (const KernelSet* k = avx2_kernels()) return k;
  return &kScalar;
}

std::atomic<const KernelSet*>& current() {
  static std::atomic<const KernelSet*> ptr{select_default()};
  return ptr;
}

}  // namespace

const KernelSet& scalar_kernels() { return kScalar; }

const KernelSet* avx2_kernels() {
#if defined(PDEATTN_HAVE_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelSet& active() { return *current().load(std::memory_order_acquire); }

void force_backend(Backend b) {
  const KernelSet* k = &kScalar;
  if (b == Backend::avx2) {
    if (const KernelSet* a = avx2_kernels()) k = a;
  }
  current().store(k, std::memory_order_release);
}

}  // namespace pdeattn::kernels
