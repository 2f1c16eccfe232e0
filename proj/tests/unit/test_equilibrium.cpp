#include "support.hpp"

#include "capkit/equilibrium.hpp"
#include "capkit/error.hpp"
#include "capkit/selftest.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <doctest.h>

#include <map>
#include <numeric>
#include <random>

using namespace capkit;
using geom::Vec;
using testing::pi;
using testing::rel;
using testing::shape;

namespace {

std::shared_ptr<const eq::NodeSet> nodes_of(const std::string& spec, int cells, double grading = 0.0) {
  eq::DiscretizationOptions d;
  d.target_cells = cells;
  d.grading = grading == 0.0 ? 2.0 : grading;
  return std::make_shared<const eq::NodeSet>(eq::discretize_body(geom::wulff_body(shape(spec)), d));
}

eq::NodeSet manual(const std::vector<Vec>& pts, double r) {
  eq::NodeSet ns;
  ns.dim = 2;
  ns.nodes = pts;
  ns.radius.assign(pts.size(), r);
  ns.volume.assign(pts.size(), pi * r * r);
  ns.cell_size.assign(pts.size(), 2 * r);
  ns.outer.assign(pts.size(), 0);
  return ns;
}

// Shared unit-disc solution at (2, 1).
const eq::EquilibriumSolution& disc_solution() {
  static const eq::EquilibriumSolution sol = [] {
    eq::DiscretizationOptions d;
    d.target_cells = 1200;
    return eq::solve_body(geom::wulff_body(shape("ball(1)")), 1.0, d);
  }();
  return sol;
}

}  // namespace

TEST_CASE("discretization covers the disc") {
  const auto ns = nodes_of("ball(1)", 1000);
  CHECK(rel(ns->total_volume(), pi) < 0.01);
  for (int j = 0; j < ns->size(); ++j) CHECK(ns->nodes[j].norm() < 1.0);
}

TEST_CASE("grading controls the cell sizes") {
  const auto uniform = nodes_of("ball(1)", 1000, 1.0);
  const auto [lo, hi] = std::minmax_element(uniform->volume.begin(), uniform->volume.end());
  CHECK(*hi / *lo < 4.0);

  const auto graded = nodes_of("ball(1)", 1000, 2.0);
  const auto smallest = std::min_element(graded->volume.begin(), graded->volume.end()) - graded->volume.begin();
  CHECK(graded->outer[smallest]);
  double inner_min = 1e300;
  for (int j = 0; j < graded->size(); ++j)
    if (!graded->outer[j]) inner_min = std::min(inner_min, graded->volume[j]);
  CHECK(graded->volume[smallest] < inner_min);
}

TEST_CASE("two-node energy by hand") {
  for (double alpha : {0.5, 1.0, 1.5}) {
    const double d = 0.8, r = 0.05;
    const eq::NodeSet ns = manual({Vec(0, 0, 0), Vec(d, 0, 0)}, r);
    const eq::RieszKernel k(2, alpha);
    const double e = eq::riesz_energy(ns, {0.5, 0.5}, alpha);
    const double self = 0.5 * k.self_energy(r);  // two diagonal terms of weight 1/4
    CHECK(e - self == doctest::Approx(0.5 * std::pow(d, alpha - 2)).epsilon(1e-14));
  }
}

TEST_CASE("energy scales with the node set") {
  const auto ns = nodes_of("ellipse(1.3, 0.8)", 400);
  std::vector<double> w(ns->size(), 1.0 / ns->size());
  for (double t : {0.5, 2.0}) {
    eq::NodeSet s = *ns;
    for (auto& x : s.nodes) x *= t;
    for (auto& r : s.radius) r *= t;
    for (auto& v : s.volume) v *= t * t;
    for (double alpha : {0.5, 1.0}) {
      const double ratio = eq::riesz_energy(s, w, alpha) / eq::riesz_energy(*ns, w, alpha);
      CHECK(ratio == doctest::Approx(std::pow(t, alpha - 2)).epsilon(1e-12));
    }
  }
}

TEST_CASE("unit-disc self energy against Monte Carlo") {
  // Monte Carlo average of 1/|x - y| over pairs from a fine lattice in the disc.
  const int m = 400;
  double acc = 0.0, wsum = 0.0;
  std::vector<Vec> pts;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const Vec p(-1 + (i + 0.5) * 2.0 / m, -1 + (j + 0.5) * 2.0 / m, 0);
      if (p.norm() < 1.0) pts.push_back(p);
    }
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  for (int k = 0; k < 2'000'000; ++k) {
    const Vec& a = pts[pick(rng)];
    const Vec& b = pts[pick(rng)];
    const double d = (a - b).norm();
    if (d == 0.0) continue;
    acc += 1.0 / d;
    wsum += 1.0;
  }
  CHECK(rel(eq::unit_ball_self_energy(2, 1.0), acc / wsum) < 0.01);
}

TEST_CASE("one and two node simplices") {
  const auto one = std::make_shared<const eq::NodeSet>(manual({Vec(0.1, 0.2, 0)}, 0.1));
  const auto s1 = eq::solve_equilibrium(one, 1.0);
  CHECK(s1.weights[0] == 1.0);
  CHECK(s1.energy == doctest::Approx(eq::RieszKernel(2, 1.0).self_energy(0.1)).epsilon(1e-14));

  const auto two = std::make_shared<const eq::NodeSet>(manual({Vec(-0.3, 0, 0), Vec(0.3, 0, 0)}, 0.1));
  const auto s2 = eq::solve_equilibrium(two, 1.0);
  CHECK(s2.weights[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(s2.weights[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("solver matches the exhaustive simplex QP on small sets") {
  for (const auto& c : selftest::oracle_corpus()) CHECK(c.rel_diff() <= 1e-6);
}

TEST_CASE("converged disc solution") {
  const auto& sol = disc_solution();
  REQUIRE(sol.converged());
  CHECK(sol.flatness <= 0.02);
  double sum = 0.0;
  for (double w : sol.weights) {
    CHECK(w >= 0.0);
    sum += w;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  const auto& h = sol.trace.energy_history;
  for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k] <= h[k - 1] * (1 + 1e-14));

  // Exact unit-ball energy: I = B(a/2, 1 - a/2) / B(n/2, 1 - a/2).
  const double exact = boost::math::beta(0.5, 0.5) / boost::math::beta(1.0, 0.5);
  CHECK(rel(sol.energy, exact) < 0.02);
}

TEST_CASE("Monte Carlo double sum of the discrete measure") {
  const auto& sol = disc_solution();
  const auto& ns = *sol.nodes;
  const eq::RieszKernel k(2, 1.0);
  std::mt19937_64 rng(11);
  std::discrete_distribution<int> draw(sol.weights.begin(), sol.weights.end());
  double acc = 0.0;
  const int samples = 4'000'000;
  for (int s = 0; s < samples; ++s) {
    const int i = draw(rng), j = draw(rng);
    acc += i == j ? k.self_energy(ns.radius[i]) : k((ns.nodes[i] - ns.nodes[j]).norm());
  }
  CHECK(rel(acc / samples, sol.energy) < 0.005);
}

TEST_CASE("disc density grows towards the boundary") {
  const auto& sol = disc_solution();
  const auto& ns = *sol.nodes;
  // Shell densities from the solver, shells keyed by rounded node radius.
  std::map<double, std::pair<double, double>> shells;
  for (int j = 0; j < ns.size(); ++j) {
    const double r = std::round(ns.nodes[j].norm() * 1e6) / 1e6;
    shells[r].first += sol.weights[j];
    shells[r].second += ns.volume[j];
  }
  std::vector<double> radii, density, volume;
  for (const auto& [r, mv] : shells) {
    radii.push_back(r);
    density.push_back(mv.first / mv.second);
    volume.push_back(mv.second);
  }
  REQUIRE(radii.size() >= 6);
  for (std::size_t k = 1; k < density.size(); ++k) CHECK(density[k] > density[k - 1] * 0.98);
  CHECK(density.back() > 2.0 * density.front());

  // Radial ansatz: one free mass per shell, spread uniformly by volume
  // inside it. The shell interaction matrix is exact for that ansatz, and
  // its simplex minimiser comes from the exhaustive QP.
  const int S = static_cast<int>(radii.size());
  std::vector<int> shell_of(ns.size());
  for (int j = 0; j < ns.size(); ++j) {
    const double r = std::round(ns.nodes[j].norm() * 1e6) / 1e6;
    shell_of[j] = static_cast<int>(std::lower_bound(radii.begin(), radii.end(), r) - radii.begin());
  }
  REQUIRE(S <= 12);  // the oracle is exhaustive
  const eq::RieszKernel k(2, 1.0);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(S, S);
  for (int i = 0; i < ns.size(); ++i)
    for (int j = 0; j < ns.size(); ++j) {
      const double wi = ns.volume[i] / volume[shell_of[i]], wj = ns.volume[j] / volume[shell_of[j]];
      const double kij = i == j ? k.self_energy(ns.radius[i]) : k((ns.nodes[i] - ns.nodes[j]).norm());
      K(shell_of[i], shell_of[j]) += wi * wj * kij;
    }
  const auto qp = selftest::simplex_qp_oracle(K);
  CHECK(sol.energy <= qp.energy * (1 + 1e-6));
  CHECK(rel(sol.energy, qp.energy) < 0.02);
  std::vector<double> ansatz(S);
  for (int s = 0; s < S; ++s) ansatz[s] = qp.weights[s] / volume[s];
  for (int s = 1; s < S; ++s) CHECK(ansatz[s] > ansatz[s - 1] * 0.98);
}

TEST_CASE("Frostman condition and far field") {
  const auto& sol = disc_solution();
  const auto& ns = *sol.nodes;
  for (int j = 0; j < ns.size(); ++j)
    if (!ns.outer[j] && ns.nodes[j].norm() < 0.5)
      CHECK(std::abs(sol.node_potential[j] / sol.energy - 1.0) < 0.02);

  const double R = 1000.0;
  CHECK(std::abs(eq::potential(sol, Vec(R, 0, 0)) * R - 1.0) < 2e-3);

  std::vector<double> ring;
  for (int k = 0; k < 12; ++k) {
    const double t = 2 * pi * k / 12 + 0.1;
    ring.push_back(eq::normalized_potential(sol, Vec(1.5 * std::cos(t), 1.5 * std::sin(t), 0)));
  }
  const auto [lo, hi] = std::minmax_element(ring.begin(), ring.end());
  CHECK((*hi - *lo) / *hi < 0.01);
}

TEST_CASE("capacity homogeneity, translation and monotonicity") {
  eq::DiscretizationOptions d;
  d.target_cells = 800;
  const double alpha = 1.0;
  const double c1 = eq::solve_body(geom::wulff_body(shape("ball(1)")), alpha, d).capacity;
  const double c2 = eq::solve_body(geom::wulff_body(shape("ball(2)")), alpha, d).capacity;
  CHECK(rel(c2 / c1, 2.0) < 0.01);

  const double ce = eq::solve_body(geom::wulff_body(shape("ellipse(1.2, 0.7)")), alpha, d).capacity;
  const double ct = eq::solve_body(geom::wulff_body(shape("ellipse(1.2, 0.7)") ), alpha, d).capacity;
  CHECK(ce == ct);
  const auto moved = geom::translate(shape("ellipse(1.2, 0.7)"), Vec(0.25, -0.15, 0));
  const double cm = eq::solve_body(geom::wulff_body(moved), alpha, d).capacity;
  CHECK(rel(cm, ce) < 1e-10);

  const double c12 = eq::solve_body(geom::wulff_body(shape("ball(1.2)")), alpha, d).capacity;
  CHECK(c1 < c12);
}

TEST_CASE("invalid exponents are rejected") {
  const auto ns = nodes_of("ball(1)", 200);
  CHECK_THROWS_AS(eq::solve_equilibrium(ns, 2.0), ConfigError);
  CHECK_THROWS_AS(eq::solve_equilibrium(ns, 0.0), ConfigError);
  CHECK_THROWS_AS(eq::check_alpha(3, 2.5), ConfigError);
}
