// SPDX-License-Identifier: Apache-2.0
#pragma once

// Verification suites for the discrete dynamics: each returns a report of
// measured values against expectations instead of throwing on failure.

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdeattn/field.hpp"
#include "pdeattn/hybrid.hpp"
#include "pdeattn/pde.hpp"

namespace pdeattn::metrics {

enum class Relation { within, at_most, at_least };

struct Check {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  Relation relation = Relation::within;

  bool pass() const;
};

struct VerificationReport {
  std::string name;
  std::vector<Check> checks;
  std::vector<std::string> notes;
  std::map<std::string, std::vector<double>> series;  // curves behind the checks

  /// True iff there is at least one check and every check passes.
  bool pass() const;
  void add(std::string check_name, double measured, double expected, double tolerance,
           Relation relation = Relation::within);
};

nlohmann::ordered_json to_json(const VerificationReport& report);
void write_table(std::ostream& os, const VerificationReport& report);

/// Per-row DFT coefficients after n periodic diffusion steps against
/// (1 - alpha dt lambda_k)^n c_k(0); relative error floor is the row's largest
/// initial coefficient.
VerificationReport verify_mode_decay(const Matrix& a0, double alpha, double dt, std::size_t n_steps);

/// One-hot 1 x T row under periodic diffusion; log R against log t over
/// 3 <= R <= T/2 must have slope in [0.4, 0.6] and correlation >= 0.99.
VerificationReport verify_propagation_speed(std::size_t t, double alpha, double dt,
                                            std::size_t n_steps, double mass = 0.9);

/// S nonincreasing, S(n) <= S(0) rho^{2n} (1 + 1e-9), C nonincreasing.
/// With guard off an unstable dt is evolved anyway (negative control).
VerificationReport verify_smoothness_decay(const AttentionField& a0, double alpha, double dt,
                                           std::size_t n_steps, bool stability_guard = true);
VerificationReport verify_smoothness_decay(std::size_t t, double alpha, double dt,
                                           std::size_t n_steps, std::uint64_t seed = 7,
                                           bool stability_guard = true);

/// Discrete periodic diffusion against the exact heat-kernel solution.
/// Successive error ratios must match the dt ratios within 20%.
VerificationReport verify_multilayer_error(std::size_t t, double alpha, double total_time,
                                           const std::vector<double>& dt_list, std::uint64_t seed = 7);

VerificationReport verify_hybrid_bound(const Matrix& q, const Matrix& k,
                                       const hybrid::SparsePattern& pattern, const PdeConfig& cfg);
/// Row-uniform target (zero q, k).
VerificationReport verify_hybrid_bound(std::size_t t, const hybrid::SparsePattern& pattern,
                                       const PdeConfig& cfg);

/// Gradient descent on 0.5 |theta - theta*|^2 with one diffusion step of the
/// gradient as preconditioner; each step must shrink the loss geometrically.
VerificationReport verify_pl_smoke(std::size_t n, double alpha, double dt, double lr,
                                   std::size_t n_steps, std::uint64_t seed = 7);

}  // namespace pdeattn::metrics
