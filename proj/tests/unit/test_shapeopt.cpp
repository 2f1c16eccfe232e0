#include "support.hpp"

#include "capkit/equilibrium.hpp"
#include "capkit/error.hpp"
#include "capkit/fractional.hpp"
#include "capkit/shapeopt.hpp"

#include <doctest.h>

#include <numeric>

using namespace capkit;
using geom::Vec;
using opt::Constraint;
using testing::pi;
using testing::rel;

namespace {

const geom::GridPtr& grid() {
  static const geom::GridPtr g = geom::make_direction_grid(2, 256);
  return g;
}

geom::SupportVector shape(const std::string& spec) { return testing::shape_on(spec, grid()); }

double weighted_sum(const std::vector<double>& f, const std::vector<double>& w) {
  return std::inner_product(f.begin(), f.end(), w.begin(), 0.0);
}

}  // namespace

TEST_CASE("constraint names") {
  CHECK(opt::parse_constraint("volume") == Constraint::Volume);
  CHECK(opt::parse_constraint("mean_width") == Constraint::MeanWidth);
  CHECK(opt::to_string(Constraint::MeanWidth) == "mean_width");
  CHECK_THROWS_AS(opt::parse_constraint("area"), ConfigError);
}

TEST_CASE("ball is stationary in both modes") {
  for (Constraint mode : {Constraint::Volume, Constraint::MeanWidth}) {
    const auto st = opt::make_flow_state(shape("ball(1)"), 1.0, mode);
    CHECK(st.residual.cv < 0.03);
    double pmax = 0.0;
    for (double p : st.phi) pmax = std::max(pmax, std::abs(p));
    CHECK(pmax < 1e-3 * std::abs(st.lambda));
    CHECK(std::isfinite(st.residual.multiplier_ratio) == (mode == Constraint::MeanWidth));
  }
}

TEST_CASE("speed has zero weighted mean") {
  for (Constraint mode : {Constraint::Volume, Constraint::MeanWidth}) {
    const auto st = opt::make_flow_state(shape("ellipse(1.3, 0.77)"), 1.0, mode);
    const auto& b = st.body;
    std::vector<double> w = b.area;
    if (mode == Constraint::MeanWidth)
      for (int i = 0; i < b.size(); ++i) w[i] *= b.curvature[i];
    double scale = 0.0;
    for (int i = 0; i < b.size(); ++i) scale += std::abs(st.phi[i]) * w[i];
    CHECK(std::abs(weighted_sum(st.phi, w)) < 1e-10 * scale);
  }
}

TEST_CASE("mean-width residual detects a non-ball") {
  const auto st = opt::make_flow_state(shape("ellipse(2, 1)"), 1.0, Constraint::MeanWidth);
  CHECK(st.residual.cv > 0.10);
}

TEST_CASE("volume flow lowers the capacity of an ellipse") {
  opt::FlowOptions o;
  o.max_steps = 10;
  o.stall_tol = 1e-6;
  const auto t = opt::flow_to_stationarity(shape("ellipse(1.4, 0.7142857142857143)"), 1.0, Constraint::Volume, o);
  REQUIRE(t.steps.size() == 11);
  for (std::size_t k = 1; k < t.steps.size(); ++k) {
    CHECK(t.steps[k].capacity < t.steps[k - 1].capacity);
    CHECK(std::abs(t.steps[k].drift) <= 0.01);
    CHECK(rel(t.steps[k].constraint, t.steps[0].constraint) < 1e-12);
  }
  CHECK(t.steps.back().hausdorff_to_ball < t.steps.front().hausdorff_to_ball);
  CHECK(t.steps.back().residual_cv < t.steps.front().residual_cv);

  const auto j = opt::to_json(t);
  CHECK(j["steps"].size() == 11);
  const std::string csv = opt::to_csv(t);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);
}

TEST_CASE("flows started at a ball stop at once") {
  for (Constraint mode : {Constraint::Volume, Constraint::MeanWidth}) {
    const auto h0 = shape("ball(1)");
    const auto t = opt::flow_to_stationarity(h0, 1.0, mode);
    CHECK(t.converged);
    CHECK(t.steps.back().step <= 2);
    CHECK(geom::hausdorff_distance(t.final_state.body.support, h0) < 1e-6);
  }
}

TEST_CASE("ball stays put under forced steps") {
  const auto h0 = shape("ball(1)");
  auto st = opt::make_flow_state(h0, 1.0, Constraint::Volume);
  const double noise = std::max(st.residual.cv, 1e-8);
  for (int k = 0; k < 10; ++k) {
    const double tau = 0.1 / (0.4 * std::abs(st.lambda));
    st = opt::constrained_flow_step(st, 1.0, Constraint::Volume, tau);
  }
  CHECK(geom::hausdorff_distance(st.body.support, h0) < 2 * noise);
}

TEST_CASE("flow commutes with quarter turns") {
  opt::FlowOptions o;
  o.max_steps = 3;
  o.stall_tol = 1e-6;
  const auto h = shape("ellipse(1.3, 0.7692307692307692, 0.3)");
  const int q = grid()->size() / 4;
  const auto a = opt::flow_to_stationarity(h, 1.0, Constraint::Volume, o);
  const auto b = opt::flow_to_stationarity(geom::rotate_grid_steps(h, q), 1.0, Constraint::Volume, o);
  const auto a_rot = geom::rotate_grid_steps(a.final_state.body.support, q);
  CHECK(geom::hausdorff_distance(a_rot, b.final_state.body.support) < 1e-6);
  CHECK(rel(a.steps.back().capacity, b.steps.back().capacity) < 1e-8);
}

TEST_CASE("Brunn-Minkowski: homothetic balls") {
  const auto r = opt::brunn_minkowski_check(shape("ball(1)"), shape("ball(2)"));
  CHECK(r.homothetic);
  CHECK(std::abs(r.deficit) <= 2 * r.noise);
  const auto r2 = opt::brunn_minkowski_check(shape("ball(0.5, 0.2, 0)"), shape("ball(1.5)"));
  CHECK(r2.homothetic);
  CHECK(std::abs(r2.deficit) <= 2 * r2.noise);
}

TEST_CASE("Brunn-Minkowski: ellipse and ball") {
  const auto r = opt::brunn_minkowski_check(shape("ellipse(2, 1)"), shape("ball(1)"));
  CHECK_FALSE(r.homothetic);
  CHECK(r.deficit > r.noise);
  CHECK(r.relative > 0.0);
  const auto j = opt::to_json(r);
  CHECK(j["homothetic"] == false);
}

TEST_CASE("Cap_1 is homogeneous of degree n - 1") {
  const auto h = shape("ellipse(1.2, 0.7)");
  const double c1 = eq::solve_body(geom::wulff_body(h), 1.0).capacity;
  const double c2 = eq::solve_body(geom::wulff_body(geom::scale(h, 2.0)), 1.0).capacity;
  CHECK(rel(c2, 2.0 * c1) < 0.01);
}

TEST_CASE("mean-width flows need alpha = 1") {
  CHECK_THROWS_AS(opt::make_flow_state(shape("ball(1)"), 0.5, Constraint::MeanWidth), ConfigError);
}
