#include "support.hpp"

#include "capkit/equilibrium.hpp"
#include "capkit/fractional.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <doctest.h>

using namespace capkit;
using geom::Vec;
using testing::pi;
using testing::rel;
using testing::shape;

namespace {

// Fractional-Laplacian normalising constant in closed form.
double cns_exact(int n, double s) {
  using boost::math::tgamma;
  return tgamma(n / 2.0 + s) * tgamma(n / 2.0 - s) /
         (std::pow(pi, n) * std::abs(tgamma(-s)) * tgamma(s));
}

double sphere_area(int n) { return n == 2 ? 2 * pi : 4 * pi; }

frac::Field gaussian(const Vec& c, double a = 1.0) {
  return [c, a](const Vec& y) { return std::exp(-a * (y - c).squaredNorm()); };
}

const eq::EquilibriumSolution& ball_solution() {
  static const eq::EquilibriumSolution sol = [] {
    return eq::solve_body(geom::wulff_body(shape("ball(1)")), 1.0, {2000, 0.0});
  }();
  return sol;
}

}  // namespace

TEST_CASE("self-consistent constant") {
  for (auto [n, s] : {std::pair{2, 0.5}, {2, 0.25}, {2, 0.75}, {3, 0.5}}) {
    const auto bump = frac::cns_self_consistency(n, s, frac::TestDensity::Bump);
    const auto poly = frac::cns_self_consistency(n, s, frac::TestDensity::Polynomial);
    CHECK(bump.points.size() >= 5);
    CHECK(bump.spread < 0.01);
    CHECK(rel(bump.value, poly.value) < 0.01);
    CHECK(rel(bump.value, cns_exact(n, s)) < 0.01);
  }
  CHECK(rel(frac::cns_constant(2, 0.5), frac::cns_constant(3, 0.5)) > 0.1);
}

TEST_CASE("constants are annihilated") {
  const frac::Field one = [](const Vec&) { return 1.0; };
  for (int n : {2, 3})
    for (double s : {0.25, 0.5, 0.75}) {
      const Vec x = n == 2 ? Vec(0.3, -0.2, 0) : Vec(0.1, 0.2, -0.4);
      const frac::TailModel flat{1.0, 0.0, x};
      CHECK(std::abs(frac::frac_laplacian_point(one, n, x, s, {}, flat).value) < 1e-8);
    }
}

TEST_CASE("gaussian at its centre") {
  // Unnormalised operator on exp(-|y|^2) at 0:
  //   |S^{n-1}| * int_0^inf (1 - e^{-r^2}) r^{-1-2s} dr = |S^{n-1}| Gamma(1 - s) / (2 s).
  for (int n : {2, 3})
    for (double s : {0.25, 0.5, 0.75}) {
      frac::LaplacianOptions o;
      o.normalized = false;
      const double v = frac::frac_laplacian_point(gaussian(Vec::Zero()), n, Vec::Zero(), s, o).value;
      const double exact = sphere_area(n) * boost::math::tgamma(1 - s) / (2 * s);
      CHECK(rel(v, exact) < 5e-3);

      frac::LaplacianOptions fine = o;
      fine.inner_panels *= 10;
      fine.outer_panels *= 10;
      fine.angular *= 2;
      const double vf = frac::frac_laplacian_point(gaussian(Vec::Zero()), n, Vec::Zero(), s, fine).value;
      CHECK(rel(v, vf) < 5e-3);
    }
}

TEST_CASE("symmetry and norm identities on a planar lattice") {
  const double s = 0.5;
  frac::LaplacianOptions o;
  o.normalized = false;
  o.angular = 32;
  const auto u = gaussian(Vec(0.3, 0, 0));
  const auto v = gaussian(Vec(-0.4, 0.2, 0), 1.5);
  const int m = 33;
  const double L = 3.5, h = 2 * L / (m - 1);
  double uv = 0.0, vu = 0.0, uu = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const Vec x(-L + i * h, -L + j * h, 0);
      const double w = h * h;
      uv += w * u(x) * frac::frac_laplacian_point(v, 2, x, s, o).value;
      vu += w * v(x) * frac::frac_laplacian_point(u, 2, x, s, o).value;
      uu += w * u(x) * frac::frac_laplacian_point(u, 2, x, s, o).value;
    }
  CHECK(rel(uv, vu) < 0.01);

  // Gagliardo form of exp(-|x|^2) in 2D: the inner x-integral is
  // pi (1 - e^{-|z|^2 / 2}), so the double integral is
  // 2 pi * pi * int (1 - e^{-r^2/2}) r^{-2s-1} dr = 2 pi^2 2^{-s} Gamma(1 - s) / (2 s).
  const double gagliardo = 2 * pi * pi * std::pow(0.5, s) * boost::math::tgamma(1 - s) / (2 * s);
  CHECK(rel(uu, 0.5 * gagliardo) < 0.02);
}

TEST_CASE("tail integral and proof integral in closed form") {
  using boost::math::beta;
  for (int n : {2, 3}) {
    double prev = 1e300;
    for (double s : {0.1, 0.25, 0.5, 0.75, 0.9}) {
      const double a = frac::tail_integral(n, s);
      const double sphere = n == 2 ? 2.0 : 2 * pi;  // |S^{n-2}|
      CHECK(rel(a, 0.5 * sphere * beta((n - 1) / 2.0, s + 0.5)) < 1e-6);
      CHECK(a < prev);
      prev = a;
    }
  }
  for (double s : {0.25, 0.5, 0.75}) {
    const double c = frac::proof_integral(s);
    CHECK(std::isfinite(c));
    CHECK(rel(c, beta(s + 1, s) * beta(1 - s, s + 1)) < 1e-4);
  }
}

TEST_CASE("constants are stable under doubled resolution") {
  for (double s : {0.25, 0.5, 0.75}) {
    const auto c1 = frac::theorem_constants(2, s, 1);
    const auto c2 = frac::theorem_constants(2, s, 2);
    CHECK(rel(c1.a_ns, c2.a_ns) < 0.005);
    CHECK(rel(c1.c_s, c2.c_s) < 0.005);
    CHECK(rel(c1.c0, c2.c0) < 0.005);
  }
}

TEST_CASE("normal-derivative trace on the unit disc") {
  const auto& sol = ball_solution();
  const auto body = geom::wulff_body(shape("ball(1)"));
  const double s = 0.5;
  const auto tr = frac::s_normal_derivative(sol, body, s);
  CHECK(tr.cv_abs() < 0.02);
  double md = 0.0, me = 0.0;
  for (int i = 0; i < tr.size(); ++i) {
    CHECK(tr.d[i] < 0.0);
    md += std::abs(tr.d[i]) / tr.size();
    me += tr.exponent[i] / tr.size();
  }
  CHECK(std::abs(me - s) < 0.1);
  // Exact: 1 - u ~ |d| t^s with |d| = 2^s / (s B((n - alpha)/2, s)).
  const double exact = std::pow(2.0, s) / (s * boost::math::beta(0.5, s));
  CHECK(rel(md, exact) < 0.05);
}

TEST_CASE("equilibrium potential is s-harmonic outside the disc") {
  const auto& sol = ball_solution();
  const auto body = geom::wulff_body(shape("ball(1)"));
  for (double r : {1.3, 1.8}) {
    const auto p = frac::s_harmonicity_residual(sol, body, Vec(r * std::cos(0.4), r * std::sin(0.4), 0));
    CHECK(std::abs(p.residual) <= 0.01 * p.scale);
  }
}
