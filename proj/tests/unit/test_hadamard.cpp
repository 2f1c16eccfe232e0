#include "support.hpp"

#include "capkit/equilibrium.hpp"
#include "capkit/error.hpp"
#include "capkit/fractional.hpp"
#include "capkit/hadamard.hpp"

#include <doctest.h>

using namespace capkit;
using geom::Vec;
using testing::pi;
using testing::rel;

namespace {

const geom::GridPtr& grid() {
  static const geom::GridPtr g = geom::make_direction_grid(2, 256);
  return g;
}

geom::SupportVector shape(const std::string& spec) { return testing::shape_on(spec, grid()); }

had::PerturbationPair pair(const std::string& omega, const std::string& l) {
  return {omega + " / " + l, shape(omega), shape(l), omega, l, false};
}

}  // namespace

TEST_CASE("ball along itself follows homogeneity") {
  const auto fd = had::capacity_fd_derivative(pair("ball(1)", "ball(1)"), 1.0);
  CHECK(rel(fd.value, (2 - 1.0) * fd.capacity0) < 0.02);
  CHECK(fd.value > 0.0);
  CHECK_FALSE(fd.asymmetric);
}

TEST_CASE("generic body along itself follows homogeneity") {
  for (double alpha : {0.5, 1.0}) {
    const auto fd = had::capacity_fd_derivative(pair("ellipse(1.3, 0.8)", "ellipse(1.3, 0.8)"), alpha);
    CHECK(rel(fd.value / fd.capacity0, 2 - alpha) < 0.05);
  }
}

TEST_CASE("stationary and translating directions") {
  had::PerturbationPair still{"point", shape("ellipse(1.2, 0.7)"), geom::point_support(grid(), Vec::Zero()),
                              "ellipse(1.2, 0.7)", "point", true};
  const auto d0 = had::capacity_fd_derivative(still, 1.0);
  CHECK(d0.value == 0.0);

  had::PerturbationPair shift{"shift", shape("ellipse(1.2, 0.7)"), geom::point_support(grid(), Vec(0.6, -0.3, 0)),
                              "ellipse(1.2, 0.7)", "shift", true};
  const auto dt = had::capacity_fd_derivative(shift, 1.0);
  CHECK(std::abs(dt.value) <= std::max(dt.error, 1e-9 * dt.capacity0));

  shift.allow_signed = false;
  CHECK_THROWS_AS(had::validate_pair(shift, 0.01), GeometryError);
}

TEST_CASE("boundary integral on balls with a constant trace") {
  const double R = 1.3, RL = 0.6, d = 0.37;
  const auto omega = geom::wulff_body(shape("ball(1.3)"));
  frac::NormalDerivativeTrace tr;
  tr.d.assign(omega.size(), -d);
  const auto B = had::boundary_integral_derivative(omega, tr, shape("ball(0.6)"), 2.5);
  CHECK(B.raw == doctest::Approx(d * d * 2 * pi * R * RL).epsilon(1e-12));
  CHECK(B.scaled == doctest::Approx(2.5 * B.raw).epsilon(1e-15));
}

TEST_CASE("boundary integral is linear, positive and rotation invariant") {
  const auto h = shape("ellipse(1.3, 0.8, 0.2)");
  const auto L = shape("square(1, 0.35)");
  const auto body = geom::wulff_body(h);
  const auto sol = eq::solve_body(body, 1.0);
  const auto tr = frac::s_normal_derivative(sol, body, 0.5);
  const auto B1 = had::boundary_integral_derivative(body, tr, L, 1.0);
  const auto B2 = had::boundary_integral_derivative(body, tr, geom::scale(L, 2.0), 1.0);
  CHECK(B2.raw == 2.0 * B1.raw);
  CHECK(B1.raw > 0.0);

  // A quarter turn of both bodies: the discretisation commutes with it.
  const int q = grid()->size() / 4;
  const auto hr = geom::rotate_grid_steps(h, q);
  const auto body_r = geom::wulff_body(hr);
  const auto sol_r = eq::solve_body(body_r, 1.0);
  const auto tr_r = frac::s_normal_derivative(sol_r, body_r, 0.5);
  const auto Br = had::boundary_integral_derivative(body_r, tr_r, geom::rotate_grid_steps(L, q), 1.0);
  CHECK(rel(Br.raw, B1.raw) < 1e-6);
}

TEST_CASE("classical first variations") {
  const auto ball = had::classical_first_variations(shape("ball(1)"), shape("ball(1)"));
  CHECK(ball.dV_int == doctest::Approx(2 * pi).epsilon(1e-10));
  CHECK(ball.dV_fd == doctest::Approx(2 * pi).epsilon(1e-8));
  CHECK(ball.dM_int == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(ball.dM_fd == doctest::Approx(2.0).epsilon(1e-10));

  for (const char* om : {"ellipse(1.4, 0.8)", "square(1, 0.35)", "random_trig(11, 5, 0.3)"}) {
    for (const char* l : {"ball(1)", "ellipse(1.2, 0.7)", "square(0.8, 0.4)"}) {
      const auto c = had::classical_first_variations(shape(om), shape(l));
      CHECK(c.volume_error() < 0.005);
      CHECK(c.mean_width_error() < 0.005);
      CHECK(std::abs(c.gauss_identity - 2.0) < 0.01);
    }
    CHECK(had::classical_first_variations(shape(om), shape("ball(1)")).dM_int == doctest::Approx(2.0).epsilon(1e-8));
  }
}

TEST_CASE("c0 estimate does not depend on the size of L") {
  const auto r = had::consistency_report({pair("ellipse(1.4, 0.8)", "ball(1)"), pair("ellipse(1.4, 0.8)", "ball(2)")}, 1.0);
  REQUIRE(r.pairs.size() == 2);
  const auto& a = r.pairs[0];
  const auto& b = r.pairs[1];
  CHECK(rel(b.B, 2.0 * a.B) < 1e-12);
  const double bar = 3.0 * (a.fd.error / a.fd.value + b.fd.error / b.fd.value) + 2e-3;
  CHECK(rel(b.c0_hat, a.c0_hat) < bar);
  CHECK(std::isnan(a.homogeneity));
  CHECK(a.fd.value > 0.0);
  CHECK(a.B > 0.0);
}

TEST_CASE("report serialisation") {
  had::ShapeDerivativeReport r;
  r.pairs.push_back({});
  r.pairs[0].label = "x";
  r.pairs[0].homogeneity = std::numeric_limits<double>::quiet_NaN();
  const auto j = had::to_json(r);
  CHECK(j.contains("c0_mean"));
  CHECK(j["pairs"].size() == 1);
  const std::string csv = had::to_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("standard suite shapes") {
  const auto suite = had::standard_suite(grid());
  CHECK(suite.size() == 5);
  for (const auto& p : suite) {
    CHECK_FALSE(p.allow_signed);
    CHECK_NOTHROW(had::validate_pair(p, 0.02));
  }
}
