// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pdeattn/kernels.hpp"

namespace pdeattn::grid {

namespace {

bool is_periodic(BoundaryCondition bc) { return bc == BoundaryCondition::periodic; }

std::size_t left_of(std::size_t j, std::size_t n, BoundaryCondition bc) {
  if (j > 0) return j - 1;
  return is_periodic(bc) ? n - 1 : 0;
}

std::size_t right_of(std::size_t j, std::size_t n, BoundaryCondition bc) {
  if (j + 1 < n) return j + 1;
  return is_periodic(bc) ? 0 : n - 1;
}

void check_length(std::size_t n, const char* op) {
  if (n < 2) throw InvalidInput(std::string(op) + ": row length must be at least 2");
}

// Laplacian of row i restricted to the field's support; out must be zeroed
// beyond the support by the caller.
void field_row_laplacian(const AttentionField& f, std::size_t i, std::span<double> out) {
  const std::size_t n = f.support(i);
  if (n < 2) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    return;
  }
  kernels::active().laplacian_row(f.values.row(i).data(), out.data(), n,
                                  is_periodic(f.row_bc()));
}

void check_field(const AttentionField& f, AxisMode mode) {
  if (f.values.cols() < 2) throw InvalidInput("laplacian_apply: field needs T >= 2");
  if (f.causal && f.values.rows() != f.values.cols())
    throw InvalidInput("causal field must be square");
  if (mode == AxisMode::full_2d) {
    if (f.values.rows() != f.values.cols())
      throw InvalidInput("full_2d Laplacian needs a square field");
    if (f.causal) throw InvalidInput("full_2d Laplacian is undefined on a causal field");
  }
}

// (up - 2c) + down along the query axis, added into out.
void add_query_axis(const Matrix& v, BoundaryCondition bc, Matrix& out, bool adjoint) {
  const std::size_t n = v.rows();
  if (!adjoint) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto up = v.row(left_of(i, n, bc));
      const auto c = v.row(i);
      const auto down = v.row(right_of(i, n, bc));
      auto o = out.row(i);
      for (std::size_t j = 0; j < v.cols(); ++j) o[j] += (up[j] - 2.0 * c[j]) + down[j];
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = v.row(i);
    auto up = out.row(left_of(i, n, bc));
    for (std::size_t j = 0; j < v.cols(); ++j) up[j] += y[j];
    auto c = out.row(i);
    for (std::size_t j = 0; j < v.cols(); ++j) c[j] -= 2.0 * y[j];
    auto down = out.row(right_of(i, n, bc));
    for (std::size_t j = 0; j < v.cols(); ++j) down[j] += y[j];
  }
}

}  // namespace

void laplacian_1d(std::span<const double> row, std::span<double> out, BoundaryCondition bc) {
  check_length(row.size(), "laplacian_1d");
  if (out.size() != row.size()) throw InvalidInput("laplacian_1d: output length mismatch");
  kernels::active().laplacian_row(row.data(), out.data(), row.size(), is_periodic(bc));
}

std::vector<double> laplacian_1d(std::span<const double> row, BoundaryCondition bc) {
  std::vector<double> out(row.size());
  laplacian_1d(row, out, bc);
  return out;
}

void laplacian_1d_adjoint(std::span<const double> row, std::span<double> out,
                          BoundaryCondition bc) {
  const std::size_t n = row.size();
  check_length(n, "laplacian_1d_adjoint");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    out[left_of(j, n, bc)] += row[j];
    out[j] -= 2.0 * row[j];
    out[right_of(j, n, bc)] += row[j];
  }
}

Matrix laplacian_apply(const AttentionField& field, AxisMode mode) {
  check_field(field, mode);
  Matrix out(field.rows(), field.cols());
  for (std::size_t i = 0; i < field.rows(); ++i) field_row_laplacian(field, i, out.row(i));
  if (mode == AxisMode::full_2d) add_query_axis(field.values, field.bc, out, false);
  return out;
}

Matrix laplacian_apply(const Matrix& values, AxisMode mode, BoundaryCondition bc) {
  return laplacian_apply(AttentionField{values, bc, false}, mode);
}

Matrix laplacian_adjoint_apply(const AttentionField& layout, const Matrix& values,
                               AxisMode mode) {
  check_field(layout, mode);
  if (!values.same_shape(layout.values)) throw InvalidInput("laplacian_adjoint_apply: shape");
  Matrix out(values.rows(), values.cols());
  for (std::size_t i = 0; i < values.rows(); ++i) {
    const std::size_t n = layout.support(i);
    if (n < 2) continue;
    laplacian_1d_adjoint(values.row(i).subspan(0, n), out.row(i).subspan(0, n),
                         layout.row_bc());
  }
  if (mode == AxisMode::full_2d) add_query_axis(values, layout.bc, out, true);
  return out;
}

void gradient_1d(std::span<const double> row, std::span<double> out, BoundaryCondition bc,
                 GradientScheme scheme) {
  const std::size_t n = row.size();
  check_length(n, "gradient_1d");
  for (std::size_t j = 0; j < n; ++j) {
    const double left = row[left_of(j, n, bc)];
    if (scheme == GradientScheme::upwind)
      out[j] = row[j] - left;
    else
      out[j] = (row[right_of(j, n, bc)] - left) / 2.0;
  }
}

std::vector<double> gradient_1d(std::span<const double> row, BoundaryCondition bc,
                                GradientScheme scheme) {
  std::vector<double> out(row.size());
  gradient_1d(row, out, bc, scheme);
  return out;
}

void gradient_1d_adjoint(std::span<const double> row, std::span<double> out,
                         BoundaryCondition bc, GradientScheme scheme) {
  const std::size_t n = row.size();
  check_length(n, "gradient_1d_adjoint");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (scheme == GradientScheme::upwind) {
      out[j] += row[j];
      out[left_of(j, n, bc)] -= row[j];
    } else {
      out[right_of(j, n, bc)] += row[j] / 2.0;
      out[left_of(j, n, bc)] -= row[j] / 2.0;
    }
  }
}

Matrix gradient_apply(const AttentionField& field, GradientScheme scheme) {
  check_field(field, AxisMode::per_row_1d);
  Matrix out(field.rows(), field.cols());
  for (std::size_t i = 0; i < field.rows(); ++i) {
    const std::size_t n = field.support(i);
    if (n < 2) continue;
    gradient_1d(field.values.row(i).subspan(0, n), out.row(i).subspan(0, n), field.row_bc(),
                scheme);
  }
  return out;
}

Matrix gradient_adjoint_apply(const AttentionField& layout, const Matrix& values,
                              GradientScheme scheme) {
  check_field(layout, AxisMode::per_row_1d);
  Matrix out(values.rows(), values.cols());
  for (std::size_t i = 0; i < values.rows(); ++i) {
    const std::size_t n = layout.support(i);
    if (n < 2) continue;
    gradient_1d_adjoint(values.row(i).subspan(0, n), out.row(i).subspan(0, n),
                        layout.row_bc(), scheme);
  }
  return out;
}

Spectrum dft_row(std::span<const double> row) {
  const std::size_t n = row.size();
  check_length(n, "dft_row");
  Spectrum s;
  s.coefficients.assign(n, {0.0, 0.0});
  std::vector<std::complex<double>> twiddle(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
    twiddle[m] = {std::cos(angle), std::sin(angle)};
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * twiddle[(j * k) % n];
    s.coefficients[k] = acc;
  }
  s.mode_eigenvalues = laplacian_eigenvalues(n, BoundaryCondition::periodic);
  return s;
}

std::vector<double> inverse_dft(std::span<const std::complex<double>> coefficients) {
  const std::size_t n = coefficients.size();
  check_length(n, "inverse_dft");
  std::vector<std::complex<double>> twiddle(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
    twiddle[m] = {std::cos(angle), std::sin(angle)};
  }
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) acc += coefficients[k] * twiddle[(j * k) % n];
    out[j] = acc.real() / static_cast<double>(n);
  }
  return out;
}

std::vector<double> laplacian_eigenvalues(std::size_t n, BoundaryCondition bc) {
  std::vector<double> lam(n);
  const double base = is_periodic(bc) ? 2.0 * std::numbers::pi : std::numbers::pi;
  for (std::size_t k = 0; k < n; ++k)
    lam[k] = 2.0 - 2.0 * std::cos(base * static_cast<double>(k) / static_cast<double>(n));
  lam[0] = 0.0;
  return lam;
}

double lambda_min(std::size_t n, BoundaryCondition bc) {
  check_length(n, "lambda_min");
  return laplacian_eigenvalues(n, bc)[1];
}

double diffusion_contraction(std::size_t n, BoundaryCondition bc, double coeff) {
  const auto lam = laplacian_eigenvalues(n, bc);
  double rho = 0.0;
  for (std::size_t k = 1; k < n; ++k) rho = std::max(rho, std::abs(1.0 - coeff * lam[k]));
  return rho;
}

}  // namespace pdeattn::grid
