// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pdeattn/grid.hpp"

namespace pdeattn::metrics {

double smoothness(const AttentionField& a, AxisMode mode) {
  const Matrix lap = grid::laplacian_apply(a, mode);
  return dot(lap, lap);
}

double consistency(const Matrix& a) {
  if (a.empty()) return 0.0;
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.flat().begin(), a.flat().end(), 0.0) / n;
  double acc = 0.0;
  for (double v : a.flat()) acc += (v - mean) * (v - mean);
  return acc / n;
}

std::size_t row_effective_range(std::span<const double> row, bool periodic, double mass) {
  const std::size_t n = row.size();
  if (n == 0) throw InvalidInput("effective_range: empty row");
  if (!(mass > 0.0 && mass <= 1.0)) throw InvalidInput("effective_range: mass not in (0, 1]");
  double total = 0.0;
  for (double v : row) {
    if (v < 0.0) throw InvalidInput("effective_range: negative entry");
    total += v;
  }
  if (!(total > 0.0)) throw InvalidInput("effective_range: non-positive row");
  // Relative slack absorbs rounding in the running sums.
  const double target = mass * total * (1.0 - 1e-12);

  // Two pointers over the (optionally doubled) row; windows never exceed n.
  const std::size_t span_len = periodic ? 2 * n : n;
  std::size_t best = n;
  double window = 0.0;
  std::size_t left = 0;
  for (std::size_t right = 0; right < span_len; ++right) {
    window += row[right % n];
    while (right - left + 1 > n) window -= row[left++ % n];
    while (left < right && window - row[left % n] >= target) window -= row[left++ % n];
    if (window >= target) best = std::min(best, right - left + 1);
  }
  return best;
}

double effective_range(const AttentionField& a, double mass) {
  if (a.rows() == 0) throw InvalidInput("effective_range: empty field");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const std::size_t n = a.support(i);
    const bool periodic = !a.causal && a.bc == BoundaryCondition::periodic;
    acc += static_cast<double>(row_effective_range(a.values.row(i).subspan(0, n), periodic, mass));
  }
  return acc / static_cast<double>(a.rows());
}

double mean_cross_entropy(const Matrix& logits, std::span<const int> targets) {
  if (targets.empty()) throw InvalidInput("cross-entropy: empty sequence");
  if (logits.rows() != targets.size()) throw InvalidInput("cross-entropy: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= row.size())
      throw InvalidInput("cross-entropy: target out of range");
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - m);
    acc += (m + std::log(z)) - row[static_cast<std::size_t>(t)];
  }
  return acc / static_cast<double>(logits.rows());
}

double perplexity(const Matrix& logits, std::span<const int> targets) {
  return std::exp(mean_cross_entropy(logits, targets));
}

}  // namespace pdeattn::metrics
