#pragma once

// Support-function calculus for convex bodies in R^2 and R^3.
//
// A convex body containing the origin is represented by samples of its
// support function h(v) = max{x.v : x in K} on a fixed grid of unit
// directions. Everything else (boundary points, curvature, surface measure)
// is derived from those samples through the inverse Gauss map.

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <vector>

namespace capkit::geom {

using Vec = Eigen::Vector3d;  // planar quantities keep z = 0

/// Surface measure of the unit sphere S^{n-1}: 2*pi for n = 2, 4*pi for n = 3.
double sphere_measure(int n);

/// Quasi-uniform unit directions with positive quadrature weights.
///
/// n = 2: v_i = (cos t_i, sin t_i), t_i = 2*pi*i/N, equal weights 2*pi/N.
/// n = 3: Fibonacci spiral, equal weights 4*pi/N, plus a tangent frame and a
///        neighbour list per node for local second-order fits.
class DirectionGrid {
 public:
  DirectionGrid(int dim, int resolution);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(dirs_.size()); }

  const Vec& direction(int i) const { return dirs_[i]; }
  const std::vector<Vec>& directions() const { return dirs_; }
  double weight(int i) const { return weights_[i]; }
  const std::vector<double>& weights() const { return weights_; }

  /// Polar angle of direction i (n = 2 only).
  double angle(int i) const;
  /// Grid spacing in angle (n = 2) or the mean nearest-neighbour angle (n = 3).
  double spacing() const { return spacing_; }

  /// Orthonormal tangent frame at node i (n = 3). Columns e1, e2.
  const Eigen::Matrix<double, 3, 2>& frame(int i) const { return frames_[i]; }
  /// Nearest neighbours of node i, closest first, excluding i (n = 3).
  const std::vector<int>& neighbours(int i) const { return neighbours_[i]; }

  bool compatible(const DirectionGrid& other) const {
    return dim_ == other.dim_ && size() == other.size();
  }

 private:
  int dim_;
  double spacing_ = 0.0;
  std::vector<Vec> dirs_;
  std::vector<double> weights_;
  std::vector<Eigen::Matrix<double, 3, 2>> frames_;
  std::vector<std::vector<int>> neighbours_;
};

using GridPtr = std::shared_ptr<const DirectionGrid>;

/// Builds a direction grid. Throws GeometryError for n not in {2, 3} or
/// resolution < 16.
GridPtr make_direction_grid(int n, int resolution);

/// Support-function samples on a grid.
///
/// For n = 3 the catalog may attach exact tangential gradients and tangential
/// Hessians of the 1-homogeneous extension (expressed in the grid frames).
/// When absent they are recovered by local quadratic fits.
struct SupportVector {
  GridPtr grid;
  std::vector<double> h;
  std::optional<std::vector<Eigen::Vector2d>> tangent_gradient;
  std::optional<std::vector<Eigen::Matrix2d>> tangent_hessian;

  int dim() const { return grid->dim(); }
  int size() const { return static_cast<int>(h.size()); }
};

/// Per-node radii of curvature data used by the convexity certificate.
/// n = 2: h'' + h. n = 3: smallest eigenvalue of (spherical Hessian + h I).
std::vector<double> curvature_radii_min(const SupportVector& h);

/// Throws GeometryError unless every h_i > 0 and the convexity certificate
/// holds with margin `margin`.
void certify(const SupportVector& h, double margin = 0.0);

/// Same check, returning false instead of throwing.
bool is_certified(const SupportVector& h, double margin = 0.0);

/// a*hA + b*hB; requires a, b >= 0, a + b > 0 and matching grids. The result
/// is re-certified.
SupportVector minkowski_combine(double a, const SupportVector& hA, double b,
                                const SupportVector& hB);

/// a*hA + b*hB without sign restrictions or certification. Used for signed
/// perturbation directions (e.g. translations) and flow updates.
SupportVector linear_combine(double a, const SupportVector& hA, double b,
                             const SupportVector& hB);

/// Support of the translate K + c.
SupportVector translate(const SupportVector& h, const Vec& c);

/// Support of t*K (t > 0).
SupportVector scale(const SupportVector& h, double t);

/// Rotation of a planar body by `steps` grid spacings (exact index shift).
SupportVector rotate_grid_steps(const SupportVector& h, int steps);

/// Support of the linear functional v -> c.v, i.e. the "support function"
/// of the single point c. Signed.
SupportVector point_support(const GridPtr& grid, const Vec& c);

/// Trigonometric interpolant of planar support samples.
class TrigSeries {
 public:
  TrigSeries() = default;
  explicit TrigSeries(const std::vector<double>& samples);

  double value(double theta) const;
  double d1(double theta) const;
  double d2(double theta) const;
  int size() const { return n_; }

 private:
  int n_ = 0;
  std::vector<double> a_, b_;  // cos/sin coefficients, index = frequency
};

/// Spectral first and second angular derivatives at the grid nodes.
void spectral_derivatives(const std::vector<double>& h, std::vector<double>& d1,
                          std::vector<double>& d2);

/// Convex body recovered from a certified support vector.
struct Body {
  SupportVector support;
  std::vector<Vec> sigma;         // boundary point with outward normal v_i
  std::vector<double> curvature;  // Gauss curvature G_i
  std::vector<double> area;       // surface quadrature weights s_i
  std::vector<double> radii_min;  // smallest principal radius at each node
  TrigSeries series;              // n = 2 only
  // n = 3 only: tangential gradient and radii-of-curvature matrix of the
  // homogeneous extension at each node, in the grid frames.
  std::vector<Eigen::Vector2d> tangent_gradient;
  std::vector<Eigen::Matrix2d> radii_matrix;

  int dim() const { return support.dim(); }
  int size() const { return support.size(); }
  const DirectionGrid& grid() const { return *support.grid; }
  const Vec& normal(int i) const { return support.grid->direction(i); }
};

/// Wulff shape of a certified support vector with all derived boundary data.
Body wulff_body(const SupportVector& h);

/// (1/n) * integral over the boundary of h(nu).
double volume(const Body& body);

/// (2/omega_n) * integral over the sphere of h, omega_n = |S^{n-1}|.
double mean_width(const SupportVector& h);
inline double mean_width(const Body& body) { return mean_width(body.support); }

/// Total surface measure sum_i s_i.
double surface_area(const Body& body);

/// max_i |hA_i - hB_i|.
double hausdorff_distance(const SupportVector& a, const SupportVector& b);
inline double hausdorff_distance(const Body& a, const Body& b) {
  return hausdorff_distance(a.support, b.support);
}

/// Steiner point (n/omega_n) * integral of h(v) v dv; equals c for a ball
/// centred at c.
Vec steiner_point(const SupportVector& h);

/// Radius of the largest ball centred at `center` inside the body.
double inradius(const SupportVector& h, const Vec& center);
double inradius(const Body& body);

struct BallFit {
  Vec center;
  double radius = 0.0;
  double deviation = 0.0;  // Hausdorff distance to the fitted ball
};

BallFit best_fit_ball(const Body& body);

/// Distance from `center` to the boundary along unit direction `u`.
double radial_function(const Body& body, const Vec& center, const Vec& u);

}  // namespace capkit::geom
