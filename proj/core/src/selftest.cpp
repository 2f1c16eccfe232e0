#include "capkit/selftest.hpp"

#include "capkit/equilibrium.hpp"
#include "capkit/error.hpp"
#include "capkit/fractional.hpp"
#include "capkit/geom.hpp"
#include "capkit/hadamard.hpp"
#include "capkit/shapes.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace capkit::selftest {
namespace {

constexpr double kPi = 3.14159265358979323846;

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Check make(std::string name, double value, double tol, bool pass, std::string detail = {}) {
  return {std::move(name), pass, value, tol, std::move(detail)};
}

Check le(std::string name, double value, double tol, std::string detail = {}) {
  return make(std::move(name), value, tol, value <= tol, std::move(detail));
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

geom::SupportVector shape(const std::string& s, const geom::GridPtr& g) {
  return geom::catalog_support(geom::parse_shape(nlohmann::json(s)), g);
}

eq::EquilibriumSolution solve(const geom::SupportVector& h, double alpha, int cells = 800) {
  eq::DiscretizationOptions d;
  d.target_cells = cells;
  return eq::solve_body(geom::wulff_body(h), alpha, d);
}

std::shared_ptr<const eq::NodeSet> random_nodes(int dim, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto ns = std::make_shared<eq::NodeSet>();
  ns->dim = dim;
  for (int j = 0; j < m; ++j) {
    geom::Vec x = geom::Vec::Zero();
    for (int k = 0; k < dim; ++k) x(k) = 2.0 * unit(rng) - 1.0;
    ns->nodes.push_back(x);
    const double r = 0.02 + 0.08 * unit(rng);
    ns->radius.push_back(r);
    ns->volume.push_back(std::pow(r, dim));
    ns->cell_size.push_back(2.0 * r);
    ns->outer.push_back(0);
  }
  return ns;
}

Eigen::MatrixXd kernel_matrix(const eq::NodeSet& ns, double alpha) {
  const int m = ns.size();
  const eq::RieszKernel k(ns.dim, alpha);
  Eigen::MatrixXd K(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      K(i, j) = i == j ? k.self_energy(ns.radius[i]) : k((ns.nodes[i] - ns.nodes[j]).norm());
  return K;
}

std::vector<Check> oracle_checks() {
  std::vector<Check> out;
  double worst = 0.0;
  int count = 0;
  for (const OracleCase& c : oracle_corpus()) {
    worst = std::max(worst, c.rel_diff());
    ++count;
  }
  out.push_back(le("qp_oracle_energy (" + std::to_string(count) + " instances)", worst, 1e-6));
  return out;
}

std::vector<Check> constants_checks() {
  std::vector<Check> out;
  const frac::CnsReport r = frac::cns_self_consistency(2, 0.5);
  out.push_back(le("cns_spread n=2 s=0.5", r.spread, 0.01));
  const double exact = std::tgamma(1.5) * std::tgamma(0.5) / (kPi * kPi * std::abs(std::tgamma(-0.5)) * std::tgamma(0.5));
  out.push_back(le("cns_closed_form n=2 s=0.5", rel(r.value, exact), 1e-3));
  const double a1 = frac::tail_integral(2, 0.5, 1), a2 = frac::tail_integral(2, 0.5, 2);
  out.push_back(le("a_ns_doubling n=2 s=0.5", rel(a1, a2), 0.005));
  const double c1 = frac::proof_integral(0.5, 1), c2 = frac::proof_integral(0.5, 2);
  out.push_back(le("c_s_doubling s=0.5", rel(c1, c2), 0.005));
  return out;
}

std::vector<Check> capacity_checks() {
  std::vector<Check> out;
  auto g = geom::make_direction_grid(2, 128);
  const eq::EquilibriumSolution b1 = solve(shape("ball(1)", g), 1.0);
  const eq::EquilibriumSolution b2 = solve(shape("ball(2)", g), 1.0);
  out.push_back(le("homogeneity Cap(2B)/Cap(B) - 2", std::abs(b2.capacity / b1.capacity - 2.0), 0.02));
  out.push_back(le("frostman_flatness ball", b1.flatness, 0.02));
  const eq::EquilibriumSolution bt = solve(shape("ball(1, 0.2, -0.1)", g), 1.0);
  out.push_back(le("translation_invariance", rel(bt.capacity, b1.capacity), 1e-6));
  const geom::SupportVector e = shape("ellipse(1.3, 0.7)", g);
  const eq::EquilibriumSolution ce = solve(e, 1.0);
  const eq::EquilibriumSolution cr = solve(geom::rotate_grid_steps(e, 32), 1.0);
  out.push_back(le("quarter_turn_invariance", rel(cr.capacity, ce.capacity), 1e-6));
  out.push_back(le("frostman_flatness ellipse", ce.flatness, 0.02));
  const double gap = solve(shape("ellipse(1.3, 1.1)", g), 1.0).capacity - b1.capacity;
  out.push_back(make("monotonicity Cap(ellipse 1.3x1.1) - Cap(B)", gap, 0.0, gap > 0.0));
  return out;
}

std::vector<Check> geometry_checks() {
  std::vector<Check> out;
  auto g = geom::make_direction_grid(2, 256);
  const geom::SupportVector ball = shape("ball(1)", g);
  const had::ClassicalVariations cv = had::classical_first_variations(ball, ball);
  out.push_back(le("ball dV = 2 pi", std::abs(cv.dV_fd - 2.0 * kPi), 1e-6));
  out.push_back(le("ball dM = 2", std::abs(cv.dM_fd - 2.0), 1e-9));
  const geom::SupportVector rt = shape("random_trig(3, 5, 0.3)", g);
  const geom::SupportVector el = shape("ellipse(1.2, 0.8, 0.3)", g);
  const had::ClassicalVariations cr = had::classical_first_variations(rt, el);
  out.push_back(le("volume_variation random_trig", cr.volume_error(), 0.005));
  out.push_back(le("mean_width_variation random_trig", cr.mean_width_error(), 0.005));
  out.push_back(le("gauss_identity random_trig", std::abs(cr.gauss_identity - 2.0) / 2.0, 0.005));
  const double msum = geom::mean_width(geom::minkowski_combine(1.0, rt, 1.0, el));
  out.push_back(le("mean_width_additivity", rel(msum, geom::mean_width(rt) + geom::mean_width(el)), 1e-12));
  geom::SupportVector bad = ball;
  for (int i = 0; i < bad.size(); i += 16) bad.h[i] *= 0.9;
  out.push_back(make("certificate rejects dented support", 0.0, 0.0, !geom::is_certified(bad)));
  auto g3 = geom::make_direction_grid(3, 600);
  const geom::Body b3 = geom::wulff_body(shape("ball(1)", g3));
  out.push_back(le("ball volume n=3", rel(geom::volume(b3), 4.0 * kPi / 3.0), 0.005));
  return out;
}

std::vector<Check> trace_checks() {
  std::vector<Check> out;
  auto g = geom::make_direction_grid(2, 256);
  const geom::SupportVector ball = shape("ball(1)", g);
  const geom::Body body = geom::wulff_body(ball);
  const eq::EquilibriumSolution sol = solve(ball, 1.0, 2000);
  const frac::NormalDerivativeTrace tr = frac::s_normal_derivative(sol, body, 0.5);
  out.push_back(le("ball trace cv", tr.cv_abs(), 0.03));
  geom::SupportVector twice = ball;
  for (double& v : twice.h) v *= 2.0;
  const double b1 = had::boundary_integral_derivative(body, tr, ball, 1.0).raw;
  const double b2 = had::boundary_integral_derivative(body, tr, twice, 1.0).raw;
  out.push_back(le("boundary_integral linear in h_L", rel(b2, 2.0 * b1), 1e-12));
  const frac::HarmonicityProbe p = frac::s_harmonicity_residual(sol, body, geom::Vec(1.6, 0.3, 0.0));
  out.push_back(le("s_harmonicity ball |x| = 1.63", std::abs(p.residual) / p.scale, 0.01));
  return out;
}

}  // namespace

double OracleCase::rel_diff() const { return std::abs(solver_energy - oracle_energy) / std::abs(oracle_energy); }

QpSolution simplex_qp_oracle(const Eigen::MatrixXd& K) {
  const int m = static_cast<int>(K.rows());
  if (m < 1 || m > 16) throw ConfigError("simplex_qp_oracle: need 1 <= m <= 16");
  QpSolution best;
  best.energy = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    std::vector<int> S;
    for (int j = 0; j < m; ++j)
      if (mask & (1u << j)) S.push_back(j);
    const int k = static_cast<int>(S.size());
    Eigen::MatrixXd A(k, k);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) A(a, b) = K(S[a], S[b]);
    const Eigen::VectorXd x = A.fullPivLu().solve(Eigen::VectorXd::Ones(k));
    if (x.minCoeff() <= 0.0) continue;
    const double sum = x.sum();
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
    for (int a = 0; a < k; ++a) mu(S[a]) = x(a) / sum;
    const double e = 1.0 / sum;
    const Eigen::VectorXd v = K * mu;
    if (v.minCoeff() < e * (1.0 - 1e-10)) continue;  // KKT: V >= q off the support
    if (e < best.energy) {
      best.energy = e;
      best.weights = mu;
    }
  }
  if (!std::isfinite(best.energy)) throw SolverError("simplex_qp_oracle: no KKT point found");
  return best;
}

std::vector<OracleCase> oracle_corpus() {
  std::vector<OracleCase> out;
  const struct {
    int dim, m;
    double alpha;
  } cases[] = {{2, 3, 1.0}, {2, 5, 0.5}, {2, 8, 1.5}, {2, 10, 1.0}, {2, 12, 0.7},
               {3, 4, 1.0}, {3, 7, 1.8}, {3, 9, 0.5}, {3, 12, 1.0}, {3, 12, 1.5}};
  std::uint64_t seed = 1;
  eq::SolverOptions so;
  so.gap_tol = 1e-12;
  so.flatness_tol = 1.0;
  for (const auto& c : cases) {
    auto ns = random_nodes(c.dim, c.m, seed++);
    const eq::EquilibriumSolution sol = eq::solve_equilibrium(ns, c.alpha, so);
    const QpSolution qp = simplex_qp_oracle(kernel_matrix(*ns, c.alpha));
    out.push_back({c.dim, c.m, c.alpha, sol.energy, qp.energy});
  }
  return out;
}

bool Result::passed() const {
  for (const Check& c : checks)
    if (!c.pass) return false;
  return !checks.empty();
}

std::string Result::table() const {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-48s %14s %12s  %s\n", "check", "value", "tol", "result");
  os << buf;
  for (const Check& c : checks) {
    std::snprintf(buf, sizeof buf, "%-48s %14.6e %12.3e  %s\n", c.name.c_str(), c.value, c.tol,
                  c.pass ? "PASS" : "FAIL");
    os << buf;
  }
  int passed_count = 0;
  for (const Check& c : checks) passed_count += c.pass;
  std::snprintf(buf, sizeof buf, "%d/%zu checks passed\n", passed_count, checks.size());
  os << buf;
  return os.str();
}

nlohmann::json Result::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const Check& c : checks)
    arr.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"tol", c.tol}, {"detail", c.detail}});
  return {{"passed", passed()}, {"checks", arr}};
}

Result run_selftest(int jobs) {
  const std::vector<std::function<std::vector<Check>()>> groups = {
      oracle_checks, constants_checks, capacity_checks, geometry_checks, trace_checks};
  std::vector<std::vector<Check>> results(groups.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < groups.size();) {
      try {
        results[i] = groups[i]();
      } catch (const std::exception& e) {
        results[i] = {make("group " + std::to_string(i) + " raised", 0.0, 0.0, false, e.what())};
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(groups.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  Result r;
  for (auto& g : results)
    for (auto& c : g) r.checks.push_back(std::move(c));
  return r;
}

}  // namespace capkit::selftest
