#pragma once

// Constrained capacity flows in support-function space and Brunn-Minkowski
// checks for Cap_1.

#include "capkit/equilibrium.hpp"
#include "capkit/fractional.hpp"
#include "capkit/geom.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace capkit::opt {

enum class Constraint { Volume, MeanWidth };

std::string to_string(Constraint c);
Constraint parse_constraint(const std::string& s);

struct SerrinResidual {
  Constraint mode = Constraint::Volume;
  std::vector<double> rho;  // |d|^2 or |d|^2 / G
  double cv = 0.0;
  /// Mean-width mode only: area-weighted mean of c0 |d|^2 / G times
  /// omega_n M / (2 (n - 1) Cap_1). NaN in volume mode.
  double multiplier_ratio = 0.0;
};

/// Residual of the overdetermined boundary condition on a traced body.
/// `c0` scales the multiplier ratio; pass the analytic constant or a fit.
SerrinResidual serrin_residual(const geom::Body& body, const frac::NormalDerivativeTrace& trace,
                               Constraint mode, double capacity, double c0);

struct FlowOptions {
  int max_steps = 200;
  double stall_tol = 0.01;       // stop once the residual CV drops below this
  double step_factor = 0.1;      // tau = step_factor * inradius / max|phi|
  int max_halvings = 5;
  int filter_modes = 8;          // n = 2: Fourier modes kept in phi
  int smoothing_passes = 2;      // n = 3: neighbour averages applied to phi
  int snapshot_every = 10;
  eq::DiscretizationOptions disc;
  eq::SolverOptions solver;
  frac::TraceFit fit;
};

struct FlowState {
  geom::Body body;
  int iteration = 0;
  double capacity = 0.0;
  double constraint = 0.0;  // current volume or mean width
  double target = 0.0;
  double lambda = 0.0;
  SerrinResidual residual;
  double tau = 0.0;  // step used to reach this state (0 for the start)
  double drift = 0.0;  // relative constraint drift before rescaling
  int halvings = 0;
  double speed_mean = 0.0;  // weighted mean of phi, should vanish
  std::vector<double> phi;     // speed field at this state
  std::vector<double> weights;  // equilibrium weights, reused as a warm start
};

/// Solves, traces and evaluates the speed field on a certified support.
/// target = 0 takes the current constraint value. `warm` is used only when
/// its size matches the new node set.
FlowState make_flow_state(const geom::SupportVector& h, double alpha, Constraint mode,
                          const FlowOptions& opts = {}, double target = 0.0,
                          const std::vector<double>* warm = nullptr);

/// One projected descent step of length tau (halved on certification
/// failure), followed by exact constraint renormalisation by scaling.
FlowState constrained_flow_step(const FlowState& state, double alpha, Constraint mode, double tau,
                                const FlowOptions& opts = {});

struct FlowRecord {
  int step = 0;
  double capacity = 0.0;
  double constraint = 0.0;
  double lambda = 0.0;
  double residual_cv = 0.0;
  double hausdorff_to_ball = 0.0;  // relative to the fitted radius
  double tau = 0.0;
  double drift = 0.0;
  int halvings = 0;
};

struct FlowTrace {
  Constraint mode = Constraint::Volume;
  double alpha = 1.0;
  std::vector<FlowRecord> steps;
  std::vector<std::pair<int, std::vector<double>>> snapshots;  // step, h
  bool converged = false;
  bool stalled = false;
  std::string note;
  FlowState final_state;
};

FlowTrace flow_to_stationarity(const geom::SupportVector& h0, double alpha, Constraint mode,
                               const FlowOptions& opts = {});

nlohmann::json to_json(const FlowTrace& t);
std::string to_csv(const FlowTrace& t);

/// Cold equilibrium solve; lets callers route solves through a cache.
using SolveFn = std::function<eq::EquilibriumSolution(const geom::Body&, double alpha,
                                                      const eq::DiscretizationOptions&,
                                                      const eq::SolverOptions&)>;

struct BMOptions {
  eq::DiscretizationOptions disc;
  eq::SolverOptions solver;
  double homothety_tol = 1e-3;
  SolveFn solve;  // empty: eq::solve_body
};

struct BMReport {
  double cap_omega = 0.0, cap_l = 0.0, cap_sum = 0.0;
  double deficit = 0.0;
  double relative = 0.0;  // deficit / (Cap(Omega)^p + Cap(L)^p)
  double noise = 0.0;     // discretisation and solver noise estimate
  bool homothetic = false;
};

/// Brunn-Minkowski deficit of Cap_1 with exponent 1/(n - 1). The noise is
/// the change of the deficit under halving the cell budget, floored by the
/// solver tolerance.
BMReport brunn_minkowski_check(const geom::SupportVector& omega, const geom::SupportVector& l,
                               const BMOptions& opts = {});

nlohmann::json to_json(const BMReport& r);

}  // namespace capkit::opt
