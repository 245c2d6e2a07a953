// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pdeattn/errors.hpp"
#include "pdeattn/grid.hpp"

namespace pdeattn::hybrid {

void SparsePattern::validate(std::size_t t) const {
  if (window < 1 || window >= t)
    throw InvalidConfig("sparse pattern: window " + std::to_string(window) + " outside [1, " +
                        std::to_string(t) + ")");
  for (std::size_t g : global_indices)
    if (g >= t) throw InvalidConfig("sparse pattern: global index " + std::to_string(g) + " out of range");
}

attention::AttentionMask SparsePattern::mask() const {
  return {.causal = false, .window = window, .global_indices = global_indices};
}

AttentionField sparse_init(const Matrix& q, const Matrix& k, const SparsePattern& pattern,
                           BoundaryCondition bc) {
  pattern.validate(k.rows());
  return attention::attention_init(q, k, pattern.mask(), bc);
}

Matrix hybrid_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const SparsePattern& pattern, const PdeConfig& cfg) {
  if (v.rows() != k.rows()) throw InvalidInput("hybrid_attention: v rows must match k rows");
  const auto a = evolve_final(sparse_init(q, k, pattern, cfg.bc), cfg);
  return matmul(a.values, v);
}

namespace {

bool row_uniform(const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    const double first = r[0];
    for (double x : r)
      if (std::abs(x - first) > 64 * std::numeric_limits<double>::epsilon()) return false;
  }
  return true;
}

std::vector<std::vector<std::complex<double>>> row_spectra(const Matrix& e) {
  std::vector<std::vector<std::complex<double>>> out(e.rows());
  for (std::size_t i = 0; i < e.rows(); ++i) out[i] = grid::dft_row(e.row(i)).coefficients;
  return out;
}

}  // namespace

HybridErrorReport hybrid_error_experiment(const Matrix& q, const Matrix& k,
                                          const SparsePattern& pattern, const PdeConfig& cfg) {
  cfg.validate();
  const auto dense = attention::attention_init(q, k, {}, cfg.bc);
  const auto a0 = sparse_init(q, k, pattern, cfg.bc);
  const std::size_t t = a0.cols();

  EvolveOptions opts;
  opts.record_metrics = false;
  const auto traj = evolve(a0, cfg, opts);

  HybridErrorReport rep;
  rep.target_stationary = row_uniform(dense.values);
  rep.recursion_checked = rep.target_stationary && cfg.kind == PdeKind::diffusion &&
                          cfg.bc == BoundaryCondition::periodic &&
                          cfg.axis == AxisMode::per_row_1d;
  const auto lambda = grid::laplacian_eigenvalues(t, BoundaryCondition::periodic);
  const double ad = cfg.alpha * cfg.dt;

  std::vector<std::vector<std::complex<double>>> first, prev;
  for (std::size_t n = 0; n < traj.snapshots.size(); ++n) {
    Matrix e = traj.snapshots[n].values;
    axpy(-1.0, dense.values, e);
    rep.frobenius_error.push_back(frobenius_norm(e));
    auto spec = row_spectra(e);
    std::vector<double> mag(t / 2 + 1, 0.0);
    for (const auto& row : spec)
      for (std::size_t m = 0; m < mag.size(); ++m) mag[m] += std::norm(row[m]);
    for (double& x : mag) x = std::sqrt(x);
    rep.mode_magnitude.push_back(std::move(mag));

    if (rep.recursion_checked && n > 0) {
      // Modes that start at zero only carry roundoff, so scale by the row's largest initial mode.
      for (std::size_t i = 0; i < spec.size(); ++i) {
        double row_scale = 1e-300;
        for (const auto& c : first[i]) row_scale = std::max(row_scale, std::abs(c));
        for (std::size_t m = 0; m < t; ++m) {
          const auto want = (1.0 - ad * lambda[m]) * prev[i][m];
          const double denom = std::max(std::abs(prev[i][m]), row_scale);
          rep.max_recursion_error = std::max(rep.max_recursion_error, std::abs(spec[i][m] - want) / denom);
        }
      }
    }
    if (n == 0) first = spec;
    prev = std::move(spec);
  }
  rep.epsilon_0 = rep.frobenius_error.front();

  rep.contraction = grid::diffusion_contraction(t, cfg.bc, ad);
  rep.expected_decay_rate = -std::log(1.0 - ad * grid::lambda_min(t, cfg.bc));
  rep.bound = rep.epsilon_0 * std::pow(rep.contraction, static_cast<double>(cfg.n_steps)) + 1e-9;
  rep.bound_holds = rep.frobenius_error.back() <= rep.bound;

  // Least-squares slope of log |mode 1| against the step index.
  rep.fitted_decay_rate = std::numeric_limits<double>::quiet_NaN();
  if (t >= 2 && rep.mode_magnitude.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t cnt = 0;
    for (std::size_t n = 0; n < rep.mode_magnitude.size(); ++n) {
      const double m1 = rep.mode_magnitude[n][1];
      if (!(m1 > 0.0)) break;
      const double x = static_cast<double>(n), y = std::log(m1);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
      ++cnt;
    }
    if (cnt >= 2) {
      const double c = static_cast<double>(cnt);
      rep.fitted_decay_rate = -(c * sxy - sx * sy) / (c * sxx - sx * sx);
    }
  }
  return rep;
}

void write_hybrid_error_csv(std::ostream& os, const HybridErrorReport& report) {
  os << "step,frobenius_error,mode_k,coefficient_magnitude\n";
  for (std::size_t n = 0; n < report.mode_magnitude.size(); ++n)
    for (std::size_t m = 0; m < report.mode_magnitude[n].size(); ++m)
      os << n << ',' << format_double(report.frobenius_error[n]) << ',' << m << ','
         << format_double(report.mode_magnitude[n][m]) << '\n';
}

}  // namespace pdeattn::hybrid
