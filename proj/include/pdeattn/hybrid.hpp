// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sliding-window attention with global tokens, refined by PDE evolution.

#include <complex>
#include <cstddef>
#include <ostream>
#include <vector>

#include "pdeattn/attention.hpp"
#include "pdeattn/field.hpp"
#include "pdeattn/matrix.hpp"
#include "pdeattn/pde.hpp"

namespace pdeattn::hybrid {

struct SparsePattern {
  std::size_t window = 64;  // half-width
  std::vector<std::size_t> global_indices{0, 1};

  /// Throws InvalidConfig unless 1 <= window < t and every global index is < t.
  void validate(std::size_t t) const;
  attention::AttentionMask mask() const;
};

AttentionField sparse_init(const Matrix& q, const Matrix& k, const SparsePattern& pattern,
                           BoundaryCondition bc = BoundaryCondition::periodic);

/// evolve(sparse_init(q, k), cfg) applied to v.
Matrix hybrid_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const SparsePattern& pattern, const PdeConfig& cfg);

struct HybridErrorReport {
  double epsilon_0 = 0.0;
  std::vector<double> frobenius_error;  // n_steps + 1 entries
  // mode_magnitude[n][k]: root-sum-square over rows of |DFT_k(E(n) row)|, k <= T/2.
  std::vector<std::vector<double>> mode_magnitude;

  bool target_stationary = false;  // A_true row-uniform
  bool recursion_checked = false;  // periodic per-row diffusion with a stationary target
  double max_recursion_error = 0.0;

  double fitted_decay_rate = 0.0;    // -slope of log mode-1 magnitude, NaN if unavailable
  double expected_decay_rate = 0.0;  // -log(1 - alpha dt lambda_min)
  double contraction = 0.0;          // max_{k != 0} |1 - alpha dt lambda_k|
  double bound = 0.0;                // epsilon_0 contraction^N + 1e-9
  bool bound_holds = false;
};

HybridErrorReport hybrid_error_experiment(const Matrix& q, const Matrix& k,
                                          const SparsePattern& pattern, const PdeConfig& cfg);

/// One row per (step, mode): step,frobenius_error,mode_k,coefficient_magnitude
void write_hybrid_error_csv(std::ostream& os, const HybridErrorReport& report);

}  // namespace pdeattn::hybrid
