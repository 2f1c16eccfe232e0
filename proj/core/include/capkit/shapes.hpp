#pragma once

// Catalog of convex bodies given by closed-form support functions.

#include "capkit/geom.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace capkit::geom {

struct BallSpec {
  double radius = 1.0;
  Vec center = Vec::Zero();
};

/// Ellipse (n = 2, two semi-axes, optional rotation angle) or ellipsoid
/// (n = 3, three semi-axes along the coordinate axes).
struct EllipsoidSpec {
  std::vector<double> axes;
  Vec center = Vec::Zero();
  double angle = 0.0;
};

/// Planar polygon rounded by rho*ball, with its edges spread over a
/// wrapped-Gaussian window of angular width `mollify` so that the radius of
/// curvature is rho + smooth bumps (strictly convex, curvature <= 1/rho).
struct SmoothedPolygonSpec {
  std::vector<Eigen::Vector2d> vertices;  // convex, counter-clockwise
  double rho = 0.2;
  double mollify = 0.15;
};

/// Planar trigonometric support function 1 + sum_{m=1}^{degree} ... with
/// seeded coefficients, shrunk until h'' + h >= margin everywhere.
struct RandomTrigSpec {
  std::uint64_t seed = 0;
  int degree = 5;
  double margin = 0.3;
  double amplitude = 0.15;
};

using ShapeSpec = std::variant<BallSpec, EllipsoidSpec, SmoothedPolygonSpec, RandomTrigSpec>;

/// Samples the support function of `spec` on `grid` and certifies convexity.
/// Throws GeometryError when the shape is not admissible.
SupportVector catalog_support(const ShapeSpec& spec, const GridPtr& grid);

/// Accepts either a compact string ("ball(1)", "ball(2, 1, 0)",
/// "ellipse(2, 1)", "ellipsoid(1, 1.2, 0.8)", "square(1, 0.3)",
/// "random_trig(7, 5, 0.3)") or an object {"type": ..., ...}.
ShapeSpec parse_shape(const nlohmann::json& j);

nlohmann::json shape_to_json(const ShapeSpec& spec);

/// Short human-readable label.
std::string describe(const ShapeSpec& spec);

}  // namespace capkit::geom
