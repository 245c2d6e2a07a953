// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/matrix.hpp"

#include <cmath>
#include <string>

#include "pdeattn/kernels.hpp"

namespace pdeattn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidInput(std::string("shape mismatch in ") + what);
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  kernels::active().gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt");
  Matrix c(a.rows(), b.rows());
  kernels::active().gemm_nt(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols());
  matmul_tn_acc(a, b, c);
  return c;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.rows() == b.rows() && c.rows() == a.cols() && c.cols() == b.cols(),
          "matmul_tn");
  kernels::active().gemm_tn(a.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols());
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void axpy(double s, const Matrix& x, Matrix& y) {
  require(x.same_shape(y), "axpy");
  kernels::active().axpy(s, x.data(), y.data(), x.size());
}

double dot(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "dot");
  return kernels::active().dot(a.data(), b.data(), a.size());
}

double frobenius_norm(const Matrix& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.flat()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  for (double v : a.flat())
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix column_block(const Matrix& a, std::size_t col0, std::size_t width) {
  require(col0 + width <= a.cols(), "column_block");
  Matrix out(a.rows(), width);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) out(i, j) = a(i, col0 + j);
  return out;
}

void set_column_block(Matrix& dst, std::size_t col0, const Matrix& src) {
  require(dst.rows() == src.rows() && col0 + src.cols() <= dst.cols(), "set_column_block");
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, col0 + j) = src(i, j);
}

}  // namespace pdeattn
