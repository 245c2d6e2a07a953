// SPDX-License-Identifier: Apache-2.0
#pragma once

// Attention-dynamics metrics and perplexity.

#include <cstddef>
#include <span>

#include "pdeattn/field.hpp"
#include "pdeattn/matrix.hpp"

namespace pdeattn::metrics {

/// S = squared Frobenius norm of the Laplacian image.
double smoothness(const AttentionField& a, AxisMode mode = AxisMode::per_row_1d);

/// C = population variance over all entries.
double consistency(const Matrix& a);
inline double consistency(const AttentionField& a) { return consistency(a.values); }

/// Width of the shortest contiguous window (cyclic when `periodic`) holding
/// at least `mass` of the row total. Throws InvalidInput on a negative entry
/// or a non-positive total.
std::size_t row_effective_range(std::span<const double> row, bool periodic, double mass = 0.9);

/// R = row_effective_range averaged over rows. Causal rows are measured on
/// their prefix without wrap.
double effective_range(const AttentionField& a, double mass = 0.9);

/// exp of the mean token cross-entropy; logits is (tokens x vocab).
double perplexity(const Matrix& logits, std::span<const int> targets);

/// Mean of -log softmax(logits[i])[targets[i]], stabilized with log-sum-exp.
double mean_cross_entropy(const Matrix& logits, std::span<const int> targets);

}  // namespace pdeattn::metrics
