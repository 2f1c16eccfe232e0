#pragma once

// Fractional Laplacian numerics.
//
// Convention: (-Delta)^s f(x) = c_{n,s} PV int (f(x) - f(y)) / |x - y|^{n+2s} dy,
// with c_{n,s} fixed by requiring (-Delta)^s of the Riesz potential
// int |x - y|^{2s-n} rho(y) dy to return rho.

#include "capkit/equilibrium.hpp"
#include "capkit/geom.hpp"

#include <functional>
#include <string>
#include <vector>

namespace capkit::frac {

using geom::Vec;
using Field = std::function<double(const Vec&)>;

/// Far-field model f(y) ~ amplitude * |y - center|^(-decay) used beyond the
/// outer quadrature radius. amplitude = 0 means f vanishes there.
struct TailModel {
  double amplitude = 0.0;
  double decay = 1.0;
  Vec center = Vec::Zero();
};

struct LaplacianOptions {
  double inner_radius = 1.0;   // symmetric second-difference region
  double outer_radius = 40.0;  // explicit quadrature up to here, tail beyond
  int radial_order = 12;
  int inner_panels = 4;
  int outer_panels = 16;
  int angular = 48;  // n = 2: angles on [0, 2pi); n = 3: polar GL points (2x in azimuth)
  bool normalized = true;  // multiply by c_{n,s}
};

struct LaplacianResult {
  double value = 0.0;
  double error = 0.0;  // |value - value at halved resolution|
};

/// Pointwise fractional Laplacian by polar quadrature about x.
LaplacianResult frac_laplacian_point(const Field& f, int n, const Vec& x, double s,
                                     const LaplacianOptions& opts = {},
                                     const TailModel& tail = {});

enum class TestDensity { Bump, Polynomial };

struct CnsReport {
  int n = 2;
  double s = 0.5;
  double value = 0.0;   // mean of the ratios
  double spread = 0.0;  // (max - min) / mean
  std::vector<double> points;  // |x| of the evaluation points
  std::vector<double> ratios;  // rho(x) / L[W](x)
};

/// Self-consistency computation of c_{n,s} with the chosen unit-ball test
/// density. `resolution` scales every quadrature size.
CnsReport cns_self_consistency(int n, double s, TestDensity density = TestDensity::Bump,
                               int resolution = 1);

/// Memoised c_{n,s}. Throws SolverError when the spread check (< 1%) fails.
double cns_constant(int n, double s);

struct FracConstants {
  int n = 2;
  double s = 0.5;
  double cns = 0.0;
  double a_ns = 0.0;
  double c_s = 0.0;
  double c0 = 0.0;
  int resolution = 1;
};

/// a_{n,s} = |S^{n-2}| int_0^inf r^{n-2} (1 + r^2)^{-(n+2s)/2} dr.
double tail_integral(int n, double s, int resolution = 1);
/// c_s = int_0^1 int_r^inf (1 - r)^s (t - r)^s t^{-2s-1} dt dr, by 2D
/// quadrature after mapping the endpoint singularities away.
double proof_integral(double s, int resolution = 1);

FracConstants theorem_constants(int n, double s, int resolution = 1);

/// Per-node s-normal derivative estimates on the boundary.
struct NormalDerivativeTrace {
  double s = 0.5;
  std::vector<Vec> sigma;
  std::vector<Vec> normal;
  std::vector<double> d;         // -c from g(t) = c t^s (1 + b t); negative by convention
  std::vector<double> b;         // first-order correction
  std::vector<double> exponent;  // free-exponent diagnostic fit
  std::vector<double> residual;  // relative RMS residual of the fixed-exponent fit
  std::vector<double> t;         // offsets used at node 0
  int failed = 0;                // nodes whose residual exceeds the threshold

  int size() const { return static_cast<int>(d.size()); }
  double cv_abs() const;  // coefficient of variation of |d|
};

struct TraceFit {
  double t_min = 0.0;  // 0: derived from the boundary cell size
  double t_max = 0.0;  // 0: derived from the inradius
  int k = 6;
  double max_residual = 0.05;
};

/// Fits 1 - u(sigma_i + t nu_i) = c t^s (1 + b t) at every boundary node of
/// `body`. Throws SolverError when any g(t) <= 0 or more than 5% of the
/// nodes exceed the residual threshold.
NormalDerivativeTrace s_normal_derivative(const eq::EquilibriumSolution& sol,
                                          const geom::Body& body, double s,
                                          const TraceFit& fit = {});

/// CSV: node, sigma_x, sigma_y, sigma_z, nu_x, nu_y, nu_z, d, exponent, residual.
std::string trace_csv(const NormalDerivativeTrace& trace);

/// Residual of (-Delta)^{alpha/2} V at an exterior point, with the local
/// scale used to judge it.
struct HarmonicityProbe {
  Vec x;
  double residual = 0.0;
  double scale = 0.0;
  double error = 0.0;
};

HarmonicityProbe s_harmonicity_residual(const eq::EquilibriumSolution& sol,
                                        const geom::Body& body, const Vec& x,
                                        int resolution = 1);

}  // namespace capkit::frac
