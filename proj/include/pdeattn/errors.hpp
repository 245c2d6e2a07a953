// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pdeattn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: wrong shapes, too-short rows, out-of-range ids.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A configuration value outside its admissible domain.
class InvalidConfig : public Error {
 public:
  using Error::Error;
};

/// Step size exceeds the CFL bound while the stability guard is on.
class StabilityError : public Error {
 public:
  StabilityError(const std::string& what, double dt_max)
      : Error(what), dt_max_(dt_max) {}
  double dt_max() const noexcept { return dt_max_; }

 private:
  double dt_max_;
};

/// A row lost all of its mass (sum <= 0) where a distribution is required.
class DegenerateField : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or runaway magnitude detected during pseudo-time evolution.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace pdeattn
