#pragma once

// Shape derivatives of the capacity along Wulff families h_Omega + t h_L,
// compared with the boundary integral of |d^s_nu u|^2 h_L.

#include "capkit/equilibrium.hpp"
#include "capkit/fractional.hpp"
#include "capkit/geom.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace capkit::had {

struct PerturbationPair {
  std::string label;
  geom::SupportVector omega;
  geom::SupportVector direction;  // h_L
  nlohmann::json omega_spec;      // provenance only
  nlohmann::json direction_spec;
  bool allow_signed = false;  // h_L may change sign (translation tests)
};

/// Checks grids match, h_L > 0 unless signed directions are allowed, and
/// that h_Omega + t h_L is certified for every |t| <= t_max.
void validate_pair(const PerturbationPair& pair, double t_max);

struct FdOptions {
  double step_factor = 0.02;  // t1 = step_factor * inradius(Omega)
  eq::DiscretizationOptions disc;
  eq::SolverOptions solver;
  bool concurrent = true;  // run the four perturbed solves in parallel
};

struct FdDerivative {
  double value = 0.0;  // Richardson-combined central difference
  double error = 0.0;  // |D(t1) - D(t2)|
  double d1 = 0.0, d2 = 0.0;
  double t1 = 0.0;
  double capacity0 = 0.0;
  std::vector<double> t;           // -t1, -t2, 0, t2, t1
  std::vector<double> capacities;  // matching capacities
  double kink = 0.0;  // coefficient a of an a|t| term in the even part
  bool asymmetric = false;  // |kink| above the error bar
};

/// d/dt Cap_alpha(Wulff(h_Omega + t h_L)) at t = 0 from five solves with
/// identical discretization budgets.
FdDerivative capacity_fd_derivative(const PerturbationPair& pair, double alpha,
                                    const FdOptions& opts = {});

struct BoundaryIntegral {
  double raw = 0.0;     // B = sum |d_i|^2 h_L(nu_i) s_i
  double scaled = 0.0;  // c0 * B
};

/// B from a trace on the boundary nodes of `omega`.
BoundaryIntegral boundary_integral_derivative(const geom::Body& omega,
                                              const frac::NormalDerivativeTrace& trace,
                                              const geom::SupportVector& direction, double c0);

struct ClassicalVariations {
  double dV_fd = 0.0, dV_int = 0.0;
  double dM_fd = 0.0, dM_int = 0.0;
  double gauss_identity = 0.0;  // (2/omega_n) sum G_i s_i, expected 2

  double volume_error() const;      // |dV_fd - dV_int| / |dV_int|
  double mean_width_error() const;  // |dM_fd - dM_int| / |dM_int|
};

ClassicalVariations classical_first_variations(const geom::SupportVector& omega,
                                               const geom::SupportVector& direction,
                                               double step_factor = 0.02);

struct PairResult {
  std::string label;
  nlohmann::json omega_spec, direction_spec;
  FdDerivative fd;
  double B = 0.0;
  double c0_hat = 0.0;
  double trace_cv = 0.0;
  double homogeneity = 0.0;  // D_fd / Cap when L = Omega, else NaN
  ClassicalVariations classical;
};

struct ShapeDerivativeReport {
  int n = 2;
  double alpha = 1.0;
  std::vector<PairResult> pairs;
  double c0_mean = 0.0;
  double c0_cv = 0.0;
  double c0_analytic = 0.0;
  double ratio = 0.0;  // c0_mean / c0_analytic
};

struct ConsistencyOptions {
  FdOptions fd;
  frac::TraceFit fit;
  int jobs = 1;  // pairs evaluated concurrently
};

ShapeDerivativeReport consistency_report(const std::vector<PerturbationPair>& pairs, double alpha,
                                         const ConsistencyOptions& opts = {});

/// The five-pair planar suite: ball/ball, ellipse/ball, smoothed square/
/// ellipse, and two random trigonometric bodies.
std::vector<PerturbationPair> standard_suite(const geom::GridPtr& grid);

nlohmann::json to_json(const ShapeDerivativeReport& r);
std::string to_csv(const ShapeDerivativeReport& r);

}  // namespace capkit::had
