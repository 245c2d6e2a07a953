// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/field.hpp"

#include <string>
#include <string_view>

namespace pdeattn {

const char* to_string(BoundaryCondition bc) {
  return bc == BoundaryCondition::periodic ? "periodic" : "zero_flux";
}

const char* to_string(AxisMode mode) {
  return mode == AxisMode::per_row_1d ? "per_row_1d" : "full_2d";
}

BoundaryCondition parse_boundary(const char* name) {
  const std::string_view s(name);
  if (s == "periodic") return BoundaryCondition::periodic;
  if (s == "zero_flux") return BoundaryCondition::zero_flux;
  throw InvalidConfig("unknown boundary condition '" + std::string(s) + "'");
}

AxisMode parse_axis(const char* name) {
  const std::string_view s(name);
  if (s == "per_row_1d") return AxisMode::per_row_1d;
  if (s == "full_2d") return AxisMode::full_2d;
  throw InvalidConfig("unknown axis mode '" + std::string(s) + "'");
}

}  // namespace pdeattn
