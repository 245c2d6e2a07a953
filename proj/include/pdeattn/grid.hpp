// SPDX-License-Identifier: Apache-2.0
#pragma once

// Discrete operators over token positions with unit spacing.

#include <complex>
#include <span>
#include <vector>

#include "pdeattn/field.hpp"
#include "pdeattn/matrix.hpp"

namespace pdeattn::grid {

enum class GradientScheme { central, upwind };

struct Spectrum {
  std::vector<std::complex<double>> coefficients;  // index k = 0..T-1
  std::vector<double> mode_eigenvalues;            // 2 - 2 cos(2 pi k / T)
};

/// Three-point second difference. Periodic rows wrap; zero-flux rows mirror
/// the boundary cell so the end stencils become (-1, +1). Rows of the
/// operator sum to zero under both conditions.
std::vector<double> laplacian_1d(std::span<const double> row, BoundaryCondition bc);
void laplacian_1d(std::span<const double> row, std::span<double> out, BoundaryCondition bc);

/// Transpose of laplacian_1d, applied by scattering each stencil row.
void laplacian_1d_adjoint(std::span<const double> row, std::span<double> out,
                          BoundaryCondition bc);

/// per_row_1d: laplacian_1d along the key axis of each row.
/// full_2d: five-point stencil over (query, key); the field must be square.
Matrix laplacian_apply(const AttentionField& field, AxisMode mode);
Matrix laplacian_apply(const Matrix& values, AxisMode mode, BoundaryCondition bc);

/// Transpose of laplacian_apply for the same field layout.
Matrix laplacian_adjoint_apply(const AttentionField& layout, const Matrix& values,
                               AxisMode mode);

/// central: (x[j+1] - x[j-1]) / 2. upwind: x[j] - x[j-1].
std::vector<double> gradient_1d(std::span<const double> row, BoundaryCondition bc,
                                GradientScheme scheme);
void gradient_1d(std::span<const double> row, std::span<double> out, BoundaryCondition bc,
                 GradientScheme scheme);
void gradient_1d_adjoint(std::span<const double> row, std::span<double> out,
                         BoundaryCondition bc, GradientScheme scheme);

/// Row-wise gradient_1d on a field (causal rows restricted to their prefix).
Matrix gradient_apply(const AttentionField& field, GradientScheme scheme);
Matrix gradient_adjoint_apply(const AttentionField& layout, const Matrix& values,
                              GradientScheme scheme);

/// Naive O(T^2) DFT, X_k = sum_j x_j exp(-2 pi i j k / T).
Spectrum dft_row(std::span<const double> row);
/// Real part of the inverse transform.
std::vector<double> inverse_dft(std::span<const std::complex<double>> coefficients);

/// Eigenvalues of -laplacian_1d. Periodic: 2 - 2 cos(2 pi k / T);
/// zero-flux: 2 - 2 cos(pi k / T).
std::vector<double> laplacian_eigenvalues(std::size_t n, BoundaryCondition bc);

/// Smallest non-zero eigenvalue of -laplacian_1d.
double lambda_min(std::size_t n, BoundaryCondition bc);

/// max over k != 0 of |1 - coeff * lambda_k|: per-step contraction of every
/// non-constant mode under explicit diffusion with coeff = alpha * dt.
double diffusion_contraction(std::size_t n, BoundaryCondition bc, double coeff);

}  // namespace pdeattn::grid
