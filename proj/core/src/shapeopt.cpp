#include "capkit/shapeopt.hpp"

#include "capkit/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace capkit::opt {
namespace {

constexpr double kPi = std::numbers::pi;

double cv_of(const std::vector<double>& v) {
  double m1 = 0.0, m2 = 0.0;
  for (double x : v) {
    m1 += x;
    m2 += x * x;
  }
  m1 /= v.size();
  m2 /= v.size();
  return std::sqrt(std::max(0.0, m2 - m1 * m1)) / std::abs(m1);
}

// Planar: truncated Fourier series. Spatial: repeated neighbour means.
std::vector<double> low_pass(const geom::DirectionGrid& grid, const std::vector<double>& f,
                             const FlowOptions& opts) {
  const int N = static_cast<int>(f.size());
  std::vector<double> out(N, 0.0);
  if (grid.dim() == 2) {
    const int M = std::min(opts.filter_modes, N / 2 - 1);
    std::vector<double> a(M + 1, 0.0), b(M + 1, 0.0);
    for (int m = 0; m <= M; ++m)
      for (int i = 0; i < N; ++i) {
        const double th = 2.0 * kPi * m * i / N;
        a[m] += f[i] * std::cos(th);
        b[m] += f[i] * std::sin(th);
      }
    for (int i = 0; i < N; ++i) {
      double v = a[0] / N;
      for (int m = 1; m <= M; ++m) {
        const double th = 2.0 * kPi * m * i / N;
        v += 2.0 * (a[m] * std::cos(th) + b[m] * std::sin(th)) / N;
      }
      out[i] = v;
    }
    return out;
  }
  out = f;
  for (int pass = 0; pass < opts.smoothing_passes; ++pass) {
    std::vector<double> next(N);
    for (int i = 0; i < N; ++i) {
      const auto& nb = grid.neighbours(i);
      const int k = std::min<int>(6, nb.size());
      double s = out[i];
      for (int j = 0; j < k; ++j) s += out[nb[j]];
      next[i] = s / (k + 1);
    }
    out.swap(next);
  }
  return out;
}

double constraint_value(const geom::Body& body, Constraint mode) {
  return mode == Constraint::Volume ? geom::volume(body) : geom::mean_width(body);
}

geom::SupportVector rescale_to(const geom::SupportVector& h, Constraint mode, double target, double& drift) {
  const geom::Body b = geom::wulff_body(h);
  const double c = constraint_value(b, mode);
  drift = (c - target) / target;
  const double f = mode == Constraint::Volume ? std::pow(target / c, 1.0 / h.dim()) : target / c;
  return geom::scale(h, f);
}

// Typical size of the multiplier term in phi.
double speed_unit(const FlowState& st, Constraint mode) {
  if (mode == Constraint::Volume) return 1.0;
  double g = 0.0;
  for (double v : st.body.curvature) g = std::max(g, v);
  return g;
}

// lambda G responds to a mode-m perturbation of h like lambda G^2 m^2, which
// makes the explicit step stiff; keep tau below the resulting limit.
double mean_width_step_limit(const FlowState& st, const FlowOptions& opts) {
  double g = 0.0;
  for (double v : st.body.curvature) g = std::max(g, v);
  const double m = st.body.dim() == 2 ? opts.filter_modes : 2.0 * opts.smoothing_passes + 2.0;
  return 1.5 / (std::abs(st.lambda) * g * g * (m * m - 1.0));
}

}  // namespace

std::string to_string(Constraint c) { return c == Constraint::Volume ? "volume" : "mean_width"; }

Constraint parse_constraint(const std::string& s) {
  if (s == "volume") return Constraint::Volume;
  if (s == "mean_width") return Constraint::MeanWidth;
  throw ConfigError("constraint must be \"volume\" or \"mean_width\", got \"" + s + "\"");
}

SerrinResidual serrin_residual(const geom::Body& body, const frac::NormalDerivativeTrace& trace,
                               Constraint mode, double capacity, double c0) {
  if (trace.size() != body.size()) throw GeometryError("serrin_residual: trace and body sizes differ");
  SerrinResidual r;
  r.mode = mode;
  r.rho.resize(body.size());
  for (int i = 0; i < body.size(); ++i) {
    const double d2 = trace.d[i] * trace.d[i];
    if (mode == Constraint::Volume) {
      r.rho[i] = d2;
    } else {
      if (!(body.curvature[i] > 0.0))
        throw GeometryError("serrin_residual: non-positive Gauss curvature at node " + std::to_string(i));
      r.rho[i] = d2 / body.curvature[i];
    }
  }
  r.cv = cv_of(r.rho);
  r.multiplier_ratio = std::numeric_limits<double>::quiet_NaN();
  if (mode == Constraint::MeanWidth) {
    const int n = body.dim();
    double num = 0.0, den = 0.0;
    for (int i = 0; i < body.size(); ++i) {
      num += c0 * r.rho[i] * body.area[i];
      den += body.area[i];
    }
    r.multiplier_ratio =
        (num / den) * geom::sphere_measure(n) * geom::mean_width(body) / (2.0 * (n - 1) * capacity);
  }
  return r;
}

FlowState make_flow_state(const geom::SupportVector& h, double alpha, Constraint mode, const FlowOptions& opts,
                          double target, const std::vector<double>* warm) {
  if (mode == Constraint::MeanWidth && alpha != 1.0)
    throw ConfigError("mean-width flows are defined for alpha = 1 only");
  geom::certify(h);
  FlowState st;
  st.body = geom::wulff_body(h);
  st.constraint = constraint_value(st.body, mode);
  st.target = target > 0.0 ? target : st.constraint;

  eq::DiscretizationOptions d = opts.disc;
  if (d.grading == 0.0) d.grading = eq::default_grading(alpha);
  auto ns = std::make_shared<const eq::NodeSet>(eq::discretize_body(st.body, d));
  if (warm && static_cast<int>(warm->size()) != ns->size()) warm = nullptr;
  const eq::EquilibriumSolution sol = eq::solve_equilibrium(ns, alpha, opts.solver, warm);
  if (!sol.converged()) throw SolverError("flow: equilibrium solve did not converge");
  st.capacity = sol.capacity;
  st.weights = sol.weights;

  const frac::NormalDerivativeTrace tr = frac::s_normal_derivative(sol, st.body, 0.5 * alpha, opts.fit);
  const double c0 = mode == Constraint::MeanWidth ? frac::theorem_constants(h.dim(), 0.5).c0 : 1.0;
  st.residual = serrin_residual(st.body, tr, mode, st.capacity, c0);

  const int N = st.body.size();
  const auto& s = st.body.area;
  const auto& G = st.body.curvature;
  const auto& w = st.body.grid().weights();  // G_i s_i = w_i under the Gauss map
  std::vector<double> d2(N);
  for (int i = 0; i < N; ++i) d2[i] = tr.d[i] * tr.d[i];
  st.phi.resize(N);
  if (mode == Constraint::Volume) {
    d2 = low_pass(st.body.grid(), d2, opts);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < N; ++i) {
      num += d2[i] * s[i];
      den += s[i];
    }
    st.lambda = -num / den;
    for (int i = 0; i < N; ++i) st.phi[i] = -(d2[i] + st.lambda);
  } else {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < N; ++i) {
      num += d2[i] * G[i] * s[i];
      den += G[i] * G[i] * s[i];
    }
    st.lambda = -num / den;
    for (int i = 0; i < N; ++i) st.phi[i] = -(d2[i] + st.lambda * G[i]);
    // G carries h'' and must be filtered too; the projection is restored
    // afterwards by removing the w-weighted mean.
    st.phi = low_pass(st.body.grid(), st.phi, opts);
    double m = 0.0, ws = 0.0;
    for (int i = 0; i < N; ++i) {
      m += st.phi[i] * w[i];
      ws += w[i];
    }
    for (double& p : st.phi) p -= m / ws;
  }
  double pm = 0.0, pw = 0.0;
  for (int i = 0; i < N; ++i) {
    const double wi = mode == Constraint::Volume ? s[i] : w[i];
    pm += st.phi[i] * wi;
    pw += std::abs(st.phi[i]) * wi;
  }
  st.speed_mean = pw > 0.0 ? pm / pw : 0.0;
  return st;
}

FlowState constrained_flow_step(const FlowState& state, double alpha, Constraint mode, double tau,
                                const FlowOptions& opts) {
  if (!(tau >= 0.0)) throw ConfigError("flow step: tau must be non-negative");
  const geom::SupportVector& h = state.body.support;
  geom::SupportVector phi;
  phi.grid = h.grid;
  phi.h = state.phi;
  // The ball minimises Cap at fixed volume and maximises Cap_1 at fixed
  // mean width, so the two modes move in opposite directions along phi.
  const double sign = mode == Constraint::Volume ? 1.0 : -1.0;
  int halvings = 0;
  geom::SupportVector next = geom::linear_combine(1.0, h, sign * tau, phi);
  while (!geom::is_certified(next)) {
    if (++halvings > opts.max_halvings)
      throw GeometryError("flow step: convexity lost after " + std::to_string(opts.max_halvings) + " halvings");
    tau *= 0.5;
    next = geom::linear_combine(1.0, h, sign * tau, phi);
  }
  double drift = 0.0;
  next = rescale_to(next, mode, state.target, drift);
  FlowState out = make_flow_state(next, alpha, mode, opts, state.target, &state.weights);
  out.iteration = state.iteration + 1;
  out.tau = tau;
  out.drift = drift;
  out.halvings = halvings;
  return out;
}

FlowTrace flow_to_stationarity(const geom::SupportVector& h0, double alpha, Constraint mode,
                               const FlowOptions& opts) {
  if (opts.max_steps < 0) throw ConfigError("flow: max_steps must be non-negative");
  FlowTrace ft;
  ft.mode = mode;
  ft.alpha = alpha;
  FlowState st = make_flow_state(h0, alpha, mode, opts);

  auto record = [&](const FlowState& s) {
    const geom::BallFit bf = geom::best_fit_ball(s.body);
    ft.steps.push_back({s.iteration, s.capacity, s.constraint, s.lambda, s.residual.cv,
                        bf.deviation / bf.radius, s.tau, s.drift, s.halvings});
    if (opts.snapshot_every > 0 && s.iteration % opts.snapshot_every == 0)
      ft.snapshots.emplace_back(s.iteration, s.body.support.h);
  };
  record(st);

  double tau = std::numeric_limits<double>::infinity();
  double best_cv = st.residual.cv;
  int since_best = 0;
  while (true) {
    if (st.residual.cv < opts.stall_tol) {
      ft.converged = true;
      break;
    }
    if (st.iteration >= opts.max_steps) {
      ft.note = "max_steps reached";
      break;
    }
    double pmax = 0.0;
    for (double p : st.phi) pmax = std::max(pmax, std::abs(p));
    // Speeds at roundoff level would otherwise give unbounded steps.
    pmax = std::max(pmax, 0.4 * std::abs(st.lambda) * speed_unit(st, mode));
    tau = std::min(tau, opts.step_factor * geom::inradius(st.body) / pmax);
    double step = tau;
    if (mode == Constraint::MeanWidth) step = std::min(step, mean_width_step_limit(st, opts));
    st = constrained_flow_step(st, alpha, mode, step, opts);
    if (st.halvings > 0) tau = std::min(tau, st.tau);
    record(st);
    if (st.residual.cv < best_cv) {
      best_cv = st.residual.cv;
      since_best = 0;
    } else if (++since_best >= 25) {
      ft.stalled = true;
      ft.note = "residual did not decrease for 25 steps";
      break;
    }
  }
  if (opts.snapshot_every > 0 && (ft.snapshots.empty() || ft.snapshots.back().first != st.iteration))
    ft.snapshots.emplace_back(st.iteration, st.body.support.h);
  ft.final_state = std::move(st);
  return ft;
}

nlohmann::json to_json(const FlowTrace& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const FlowRecord& r : t.steps)
    steps.push_back({{"step", r.step},
                     {"capacity", r.capacity},
                     {"constraint", r.constraint},
                     {"lambda", r.lambda},
                     {"residual_cv", r.residual_cv},
                     {"hausdorff_to_ball", r.hausdorff_to_ball},
                     {"tau", r.tau},
                     {"drift", r.drift},
                     {"halvings", r.halvings}});
  nlohmann::json snaps = nlohmann::json::array();
  for (const auto& [k, h] : t.snapshots) snaps.push_back({{"step", k}, {"h", h}});
  return {{"mode", to_string(t.mode)}, {"alpha", t.alpha},     {"converged", t.converged},
          {"stalled", t.stalled},      {"note", t.note},       {"steps", steps},
          {"snapshots", snaps}};
}

std::string to_csv(const FlowTrace& t) {
  std::ostringstream os;
  os.precision(12);
  os << "step,capacity,constraint,lambda,residual_cv,hausdorff_to_ball,tau,drift,halvings\n";
  for (const FlowRecord& r : t.steps)
    os << r.step << ',' << r.capacity << ',' << r.constraint << ',' << r.lambda << ',' << r.residual_cv << ','
       << r.hausdorff_to_ball << ',' << r.tau << ',' << r.drift << ',' << r.halvings << '\n';
  return os.str();
}

BMReport brunn_minkowski_check(const geom::SupportVector& omega, const geom::SupportVector& l,
                               const BMOptions& opts) {
  const int n = omega.dim();
  const double p = 1.0 / (n - 1);
  const geom::SupportVector sum = geom::minkowski_combine(1.0, omega, 1.0, l);

  auto deficit_at = [&](int cells, double caps[3]) {
    eq::DiscretizationOptions d = opts.disc;
    d.target_cells = cells;
    const geom::SupportVector* hs[3] = {&omega, &l, &sum};
    for (int k = 0; k < 3; ++k) {
      const geom::Body body = geom::wulff_body(*hs[k]);
      const eq::EquilibriumSolution s =
          opts.solve ? opts.solve(body, 1.0, d, opts.solver) : eq::solve_body(body, 1.0, d, opts.solver);
      if (!s.converged()) throw SolverError("brunn_minkowski_check: solve did not converge");
      caps[k] = s.capacity;
    }
    return std::pow(caps[2], p) - std::pow(caps[0], p) - std::pow(caps[1], p);
  };

  BMReport r;
  double fine[3], coarse[3];
  r.deficit = deficit_at(opts.disc.target_cells, fine);
  const double dc = deficit_at(std::max(100, opts.disc.target_cells / 2), coarse);
  r.cap_omega = fine[0];
  r.cap_l = fine[1];
  r.cap_sum = fine[2];
  const double scale = std::pow(fine[0], p) + std::pow(fine[1], p);
  r.relative = r.deficit / scale;
  const double solver_floor = 10.0 * opts.solver.gap_tol * (std::pow(fine[2], p) + scale);
  r.noise = std::max(std::abs(r.deficit - dc), solver_floor);

  auto normalized = [](const geom::SupportVector& h) {
    const geom::SupportVector c = geom::translate(h, -geom::steiner_point(h));
    return geom::scale(c, 2.0 / geom::mean_width(c));
  };
  r.homothetic = geom::hausdorff_distance(normalized(omega), normalized(l)) < opts.homothety_tol;
  return r;
}

nlohmann::json to_json(const BMReport& r) {
  return {{"cap_omega", r.cap_omega}, {"cap_l", r.cap_l},         {"cap_sum", r.cap_sum},
          {"deficit", r.deficit},     {"relative", r.relative},   {"noise", r.noise},
          {"homothetic", r.homothetic}};
}

}  // namespace capkit::opt
