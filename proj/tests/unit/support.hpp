#pragma once

#include "capkit/geom.hpp"
#include "capkit/shapes.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace testing {

inline capkit::geom::SupportVector shape(const std::string& spec, int n = 2, int res = 0) {
  if (res == 0) res = n == 2 ? 256 : 400;
  return capkit::geom::catalog_support(capkit::geom::parse_shape(spec),
                                       capkit::geom::make_direction_grid(n, res));
}

inline capkit::geom::SupportVector shape_on(const std::string& spec, const capkit::geom::GridPtr& g) {
  return capkit::geom::catalog_support(capkit::geom::parse_shape(spec), g);
}

inline double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

constexpr double pi = std::numbers::pi;

}  // namespace testing
