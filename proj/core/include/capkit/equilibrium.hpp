#pragma once

// Discrete Riesz equilibrium problem on a convex body.
//
// The body is split into boundary-graded cells; each cell carries a point
// node and a volume-equivalent radius r_j. The discrete energy is
//
//   q(mu) = sum_{j != k} mu_j mu_k |x_j - x_k|^(alpha - n) + sum_j mu_j^2 S(r_j),
//
// where S(r) is the Riesz self-energy of the uniform probability measure on a
// ball of radius r. q is minimised over the probability simplex.

#include "capkit/geom.hpp"

#include <memory>
#include <vector>

namespace capkit::eq {

using geom::Vec;

struct DiscretizationOptions {
  int target_cells = 2000;
  /// Radial grading exponent in [1, 3]; 0 selects the default for alpha.
  double grading = 0.0;
};

/// Default grading: 2 for alpha <= 1, 1.5 above.
double default_grading(double alpha);

struct NodeSet {
  int dim = 2;
  Vec center = Vec::Zero();  // Steiner point used as the mapping origin
  std::vector<Vec> nodes;
  std::vector<double> volume;     // cell volumes
  std::vector<double> radius;     // volume-equivalent ball radii
  std::vector<double> cell_size;  // largest cell extent
  std::vector<char> outer;        // 1 for cells touching the boundary
  int layers = 0;
  int sectors = 0;  // outermost angular resolution

  int size() const { return static_cast<int>(nodes.size()); }
  double total_volume() const;
};

/// Boundary-graded cell decomposition of `body`. Cells come from a polar
/// (n = 2) or spherical (n = 3) map about the Steiner point with radial
/// layers s_k = 1 - (1 - k/K)^grading. The construction commutes with
/// translations, dilations and (n = 2) quarter turns.
NodeSet discretize_body(const geom::Body& body, const DiscretizationOptions& opts);

/// Riesz kernel |x - y|^(alpha - n) with the per-cell regularisation used
/// throughout the module.
class RieszKernel {
 public:
  RieszKernel(int dim, double alpha);

  int dim() const { return dim_; }
  double alpha() const { return alpha_; }

  double operator()(double d) const { return std::pow(d, alpha_ - dim_); }
  /// Self-energy of the uniform probability measure on a ball of radius r.
  double self_energy(double r) const { return unit_self_ * std::pow(r, alpha_ - dim_); }
  /// Kernel seen from a point at distance d of a cell of radius r: exact
  /// beyond r, and a quadratic blend down to the self-energy at d = 0.
  double regularized(double d, double r) const;
  /// S(1) for this (n, alpha).
  double unit_self_energy() const { return unit_self_; }

 private:
  int dim_;
  double alpha_;
  double unit_self_;
};

/// Double average of |x - y|^(alpha - n) over the unit ball, by radial
/// quadrature of the potential of the uniform ball. Memoised per (n, alpha).
double unit_ball_self_energy(int dim, double alpha);

/// Throws ConfigError unless 0 < alpha < min(2, n).
void check_alpha(int dim, double alpha);

/// mu^T K mu with the self-energy diagonal.
double riesz_energy(const NodeSet& nodes, const std::vector<double>& weights, double alpha);

struct SolverOptions {
  long max_iter = 4'000'000;
  /// Stop when (max_{mu_j > 0} V_j - min_j V_j) <= gap_tol * q. This bounds
  /// the Frank-Wolfe duality gap and the spread of V over the support.
  double gap_tol = 1e-6;
  /// Success additionally requires the coefficient of variation of V over
  /// the support to be below this value.
  double flatness_tol = 0.02;
  long history_stride = 1000;
};

struct SolverTrace {
  long iterations = 0;
  long fw_steps = 0;
  long away_steps = 0;
  long drop_steps = 0;
  double gap = 0.0;   // relative gap at exit
  bool converged = false;
  std::vector<double> energy_history;
};

struct EquilibriumSolution {
  std::shared_ptr<const NodeSet> nodes;
  int dim = 2;
  double alpha = 1.0;
  std::vector<double> weights;
  std::vector<double> node_potential;  // V at the nodes, (K mu)_j
  double energy = 0.0;                 // I_alpha
  double capacity = 0.0;               // c_{n,alpha} / I_alpha
  double flatness = 0.0;               // CV of V over the support
  SolverTrace trace;

  bool converged() const { return trace.converged; }
};

/// Away-step conditional gradient on the probability simplex. `warm_start`,
/// when given, must have one entry per node (it is renormalised).
EquilibriumSolution solve_equilibrium(std::shared_ptr<const NodeSet> nodes, double alpha,
                                      const SolverOptions& opts = {},
                                      const std::vector<double>* warm_start = nullptr);

/// Cap_alpha = c_{n,alpha} / I_alpha, with c_{n,alpha} the self-consistent
/// fractional-Laplacian constant for s = alpha/2. Throws SolverError for
/// unconverged input.
double capacity(const EquilibriumSolution& sol);

/// V(x) = sum_j mu_j k(x, x_j) with the cell regularisation; at a node this
/// is the cell-averaged value (K mu)_j.
double potential(const EquilibriumSolution& sol, const Vec& x);

/// u(x) = V(x) / I_alpha.
inline double normalized_potential(const EquilibriumSolution& sol, const Vec& x) {
  return potential(sol, x) / sol.energy;
}

/// Convenience pipeline: discretize, solve, fill capacity.
EquilibriumSolution solve_body(const geom::Body& body, double alpha,
                               const DiscretizationOptions& dopts = {},
                               const SolverOptions& sopts = {},
                               const std::vector<double>* warm_start = nullptr);

}  // namespace capkit::eq
