// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "pdeattn/matrix.hpp"

namespace pdeattn {

enum class BoundaryCondition { periodic, zero_flux };

enum class AxisMode { per_row_1d, full_2d };

/// Attention weights over (query, key) positions, evolved in pseudo-time.
///
/// Rows are queries, columns are keys. When `causal` is set the field is
/// square and row i lives on keys [0, i]; the Laplacian acts on that prefix
/// with zero-flux ends, so no mass ever reaches future keys.
struct AttentionField {
  Matrix values;
  BoundaryCondition bc = BoundaryCondition::periodic;
  bool causal = false;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }

  /// Number of leading keys row i may touch.
  std::size_t support(std::size_t i) const noexcept { return causal ? i + 1 : values.cols(); }

  /// Boundary used on row i; causal rows are always zero-flux at the frontier.
  BoundaryCondition row_bc() const noexcept {
    return causal ? BoundaryCondition::zero_flux : bc;
  }
};

const char* to_string(BoundaryCondition bc);
const char* to_string(AxisMode mode);
BoundaryCondition parse_boundary(const char* name);
AxisMode parse_axis(const char* name);

}  // namespace pdeattn
