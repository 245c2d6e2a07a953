// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "pdeattn/errors.hpp"

namespace pdeattn {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
      if (r.size() != cols_) throw InvalidInput("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix row_vector(std::span<const double> values) {
    Matrix m(1, values.size());
    std::copy(values.begin(), values.end(), m.data_.begin());
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Dense linear algebra on Matrix, routed through the active kernel set.

/// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// c = a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// c = a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// c += a^T * b
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);

Matrix transpose(const Matrix& a);
/// y += s * x (same shape)
void axpy(double s, const Matrix& x, Matrix& y);
double dot(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

/// Columns [col0, col0 + width) as a new matrix.
Matrix column_block(const Matrix& a, std::size_t col0, std::size_t width);
/// dst[:, col0:col0+src.cols()] = src
void set_column_block(Matrix& dst, std::size_t col0, const Matrix& src);

}  // namespace pdeattn
