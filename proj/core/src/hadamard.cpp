#include "capkit/hadamard.hpp"

#include "capkit/error.hpp"
#include "capkit/shapes.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <future>
#include <limits>
#include <sstream>
#include <thread>

namespace capkit::had {
namespace {

bool same_support(const geom::SupportVector& a, const geom::SupportVector& b) {
  return a.grid->compatible(*b.grid) && a.h == b.h;
}

struct FdRun {
  FdDerivative fd;
  eq::EquilibriumSolution base;
  geom::Body body;
};

FdRun run_fd(const PerturbationPair& pair, double alpha, const FdOptions& opts) {
  if (!(opts.step_factor > 0.0 && opts.step_factor < 0.5))
    throw ConfigError("capacity_fd_derivative: step_factor must lie in (0, 0.5)");
  eq::check_alpha(pair.omega.dim(), alpha);
  geom::Body body = geom::wulff_body(pair.omega);
  const double t1 = opts.step_factor * geom::inradius(body);
  validate_pair(pair, t1);

  eq::DiscretizationOptions dopts = opts.disc;
  if (dopts.grading == 0.0) dopts.grading = eq::default_grading(alpha);

  eq::EquilibriumSolution base = eq::solve_body(body, alpha, dopts, opts.solver);
  if (!base.converged()) throw SolverError("capacity_fd_derivative: base solve did not converge");

  const std::vector<double> ts = {-t1, -0.5 * t1, 0.0, 0.5 * t1, t1};
  std::vector<std::future<double>> jobs;
  for (double t : ts) {
    if (t == 0.0) continue;
    const auto policy = opts.concurrent ? std::launch::async : std::launch::deferred;
    jobs.push_back(std::async(policy, [&, t] {
      const geom::Body bt = geom::wulff_body(geom::linear_combine(1.0, pair.omega, t, pair.direction));
      eq::EquilibriumSolution s = eq::solve_body(bt, alpha, dopts, opts.solver, &base.weights);
      if (!s.converged())
        throw SolverError("capacity_fd_derivative: solve at t = " + std::to_string(t) + " did not converge");
      return s.capacity;
    }));
  }
  std::vector<double> caps;
  for (std::size_t k = 0, j = 0; k < ts.size(); ++k)
    caps.push_back(ts[k] == 0.0 ? base.capacity : jobs[j++].get());

  FdDerivative fd;
  fd.t1 = t1;
  fd.t = ts;
  fd.capacities = caps;
  fd.capacity0 = base.capacity;
  fd.d1 = (caps[4] - caps[0]) / (2.0 * t1);
  fd.d2 = (caps[3] - caps[1]) / t1;
  fd.value = (4.0 * fd.d2 - fd.d1) / 3.0;
  fd.error = std::abs(fd.d1 - fd.d2);
  // Even part E(t) = a|t| + b t^2 + ...; a != 0 means one-sided slopes differ.
  const double e1 = 0.5 * (caps[4] + caps[0]) - caps[2];
  const double e2 = 0.5 * (caps[3] + caps[1]) - caps[2];
  fd.kink = (4.0 * e2 - e1) / t1;
  const double floor = 1e-5 * base.capacity / t1;
  fd.asymmetric = std::abs(fd.kink) > std::max(fd.error, floor);
  return {std::move(fd), std::move(base), std::move(body)};
}

}  // namespace

void validate_pair(const PerturbationPair& pair, double t_max) {
  if (!pair.omega.grid || !pair.direction.grid)
    throw GeometryError("perturbation pair: missing direction grid");
  if (!pair.omega.grid->compatible(*pair.direction.grid))
    throw GeometryError("perturbation pair: Omega and L live on different grids");
  geom::certify(pair.omega);
  if (!pair.allow_signed) {
    for (double v : pair.direction.h)
      if (v < 0.0) throw GeometryError("perturbation pair: h_L must be non-negative");
  }
  for (double t : {-t_max, -0.5 * t_max, 0.5 * t_max, t_max}) {
    if (!geom::is_certified(geom::linear_combine(1.0, pair.omega, t, pair.direction)))
      throw GeometryError("perturbation pair: h_Omega + t h_L not convex at t = " + std::to_string(t));
  }
}

FdDerivative capacity_fd_derivative(const PerturbationPair& pair, double alpha, const FdOptions& opts) {
  return run_fd(pair, alpha, opts).fd;
}

BoundaryIntegral boundary_integral_derivative(const geom::Body& omega,
                                              const frac::NormalDerivativeTrace& trace,
                                              const geom::SupportVector& direction, double c0) {
  if (trace.size() != omega.size() || direction.size() != omega.size())
    throw GeometryError("boundary_integral_derivative: trace, body and h_L sizes differ");
  BoundaryIntegral b;
  for (int i = 0; i < omega.size(); ++i) b.raw += trace.d[i] * trace.d[i] * direction.h[i] * omega.area[i];
  b.scaled = c0 * b.raw;
  return b;
}

double ClassicalVariations::volume_error() const { return std::abs(dV_fd - dV_int) / std::abs(dV_int); }
double ClassicalVariations::mean_width_error() const { return std::abs(dM_fd - dM_int) / std::abs(dM_int); }

ClassicalVariations classical_first_variations(const geom::SupportVector& omega,
                                               const geom::SupportVector& direction, double step_factor) {
  const geom::Body body = geom::wulff_body(omega);
  const double t1 = step_factor * geom::inradius(body);
  PerturbationPair pair{"", omega, direction, {}, {}, true};
  validate_pair(pair, t1);

  auto vol = [&](double t) { return geom::volume(geom::wulff_body(geom::linear_combine(1.0, omega, t, direction))); };
  auto mw = [&](double t) { return geom::mean_width(geom::linear_combine(1.0, omega, t, direction)); };
  auto richardson = [&](auto&& f) {
    const double a = (f(t1) - f(-t1)) / (2.0 * t1);
    const double b = (f(0.5 * t1) - f(-0.5 * t1)) / t1;
    return (4.0 * b - a) / 3.0;
  };

  ClassicalVariations cv;
  cv.dV_fd = richardson(vol);
  cv.dM_fd = richardson(mw);
  const double omega_n = geom::sphere_measure(body.dim());
  double gs = 0.0;
  for (int i = 0; i < body.size(); ++i) {
    cv.dV_int += direction.h[i] * body.area[i];
    cv.dM_int += direction.h[i] * body.curvature[i] * body.area[i];
    gs += body.curvature[i] * body.area[i];
  }
  cv.dM_int *= 2.0 / omega_n;
  cv.gauss_identity = 2.0 * gs / omega_n;
  return cv;
}

ShapeDerivativeReport consistency_report(const std::vector<PerturbationPair>& pairs, double alpha,
                                         const ConsistencyOptions& opts) {
  if (pairs.empty()) throw ConfigError("consistency_report: no pairs");
  ShapeDerivativeReport rep;
  rep.n = pairs.front().omega.dim();
  rep.alpha = alpha;
  const double s = 0.5 * alpha;
  rep.c0_analytic = frac::theorem_constants(rep.n, s).c0;

  for (const PerturbationPair& p : pairs)
    if (p.omega.dim() != rep.n) throw ConfigError("consistency_report: pairs mix dimensions");

  auto evaluate = [&](const PerturbationPair& p) {
    FdRun run = run_fd(p, alpha, opts.fd);
    const frac::NormalDerivativeTrace tr = frac::s_normal_derivative(run.base, run.body, s, opts.fit);
    PairResult r;
    r.label = p.label;
    r.omega_spec = p.omega_spec;
    r.direction_spec = p.direction_spec;
    r.fd = run.fd;
    r.B = boundary_integral_derivative(run.body, tr, p.direction, 1.0).raw;
    r.c0_hat = r.fd.value / r.B;
    r.trace_cv = tr.cv_abs();
    r.homogeneity = same_support(p.omega, p.direction) ? r.fd.value / r.fd.capacity0
                                                       : std::numeric_limits<double>::quiet_NaN();
    r.classical = classical_first_variations(p.omega, p.direction, opts.fd.step_factor);
    return r;
  };

  // Results land in input order whatever the schedule.
  rep.pairs.resize(pairs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(pairs.size());
  auto worker = [&] {
    for (std::size_t i; (i = next++) < pairs.size();) {
      try {
        rep.pairs[i] = evaluate(pairs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int nthreads = std::clamp<int>(opts.jobs, 1, static_cast<int>(pairs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  double m1 = 0.0, m2 = 0.0;
  for (const PairResult& r : rep.pairs) {
    m1 += r.c0_hat;
    m2 += r.c0_hat * r.c0_hat;
  }
  m1 /= rep.pairs.size();
  m2 /= rep.pairs.size();
  rep.c0_mean = m1;
  rep.c0_cv = std::sqrt(std::max(0.0, m2 - m1 * m1)) / std::abs(m1);
  rep.ratio = m1 / rep.c0_analytic;
  return rep;
}

std::vector<PerturbationPair> standard_suite(const geom::GridPtr& grid) {
  if (grid->dim() != 2) throw ConfigError("standard_suite: planar grids only");
  const std::vector<std::pair<std::string, std::string>> specs = {
      {"ball(1)", "ball(1)"},
      {"ellipse(1.4, 0.8)", "ball(1)"},
      {"square(1, 0.35)", "ellipse(1.2, 0.7)"},
      {"random_trig(11, 5, 0.3)", "ball(1)"},
      {"random_trig(29, 5, 0.3)", "ellipse(1, 0.6, 0.5)"},
  };
  std::vector<PerturbationPair> out;
  for (const auto& [o, l] : specs) {
    const geom::ShapeSpec so = geom::parse_shape(o);
    const geom::ShapeSpec sl = geom::parse_shape(l);
    out.push_back({o + " / " + l, geom::catalog_support(so, grid), geom::catalog_support(sl, grid),
                   geom::shape_to_json(so), geom::shape_to_json(sl), false});
  }
  return out;
}

nlohmann::json to_json(const ShapeDerivativeReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const PairResult& p : r.pairs) {
    nlohmann::json j = {{"label", p.label},
                        {"omega_spec", p.omega_spec},
                        {"l_spec", p.direction_spec},
                        {"D_fd", p.fd.value},
                        {"err", p.fd.error},
                        {"B", p.B},
                        {"c0_hat", p.c0_hat},
                        {"capacity", p.fd.capacity0},
                        {"t1", p.fd.t1},
                        {"asymmetric", p.fd.asymmetric},
                        {"trace_cv", p.trace_cv},
                        {"dV_fd", p.classical.dV_fd},
                        {"dV_int", p.classical.dV_int},
                        {"dM_fd", p.classical.dM_fd},
                        {"dM_int", p.classical.dM_int}};
    if (!std::isnan(p.homogeneity)) j["homogeneity"] = p.homogeneity;
    pairs.push_back(std::move(j));
  }
  return {{"n", r.n},          {"alpha", r.alpha}, {"pairs", pairs},  {"c0_mean", r.c0_mean},
          {"c0_analytic", r.c0_analytic}, {"cv", r.c0_cv}, {"ratio", r.ratio}};
}

std::string to_csv(const ShapeDerivativeReport& r) {
  std::ostringstream os;
  os.precision(12);
  os << "pair,D_fd,err,B,c0_hat,capacity,trace_cv,dV_fd,dV_int,dM_fd,dM_int\n";
  for (const PairResult& p : r.pairs)
    os << '"' << p.label << "\"," << p.fd.value << ',' << p.fd.error << ',' << p.B << ',' << p.c0_hat << ','
       << p.fd.capacity0 << ',' << p.trace_cv << ',' << p.classical.dV_fd << ',' << p.classical.dV_int << ','
       << p.classical.dM_fd << ',' << p.classical.dM_int << '\n';
  return os.str();
}

}  // namespace capkit::had
