#include "capkit/equilibrium.hpp"
#include "capkit/fractional.hpp"
#include "capkit/geom.hpp"
#include "capkit/shapes.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace capkit;

namespace {

geom::Body body(const char* spec, int res = 256) {
  return geom::wulff_body(geom::catalog_support(geom::parse_shape(spec), geom::make_direction_grid(2, res)));
}

void BM_WulffBody(benchmark::State& state) {
  const auto g = geom::make_direction_grid(2, static_cast<int>(state.range(0)));
  const auto h = geom::catalog_support(geom::parse_shape("ellipse(1.4, 0.8)"), g);
  for (auto _ : state) benchmark::DoNotOptimize(geom::wulff_body(h));
}
BENCHMARK(BM_WulffBody)->Arg(256)->Arg(1024);

void BM_Discretize(benchmark::State& state) {
  const auto b = body("ellipse(1.4, 0.8)");
  const eq::DiscretizationOptions d{static_cast<int>(state.range(0)), 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(eq::discretize_body(b, d));
}
BENCHMARK(BM_Discretize)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_RieszEnergy(benchmark::State& state) {
  const auto ns = eq::discretize_body(body("ball(1)"), {static_cast<int>(state.range(0)), 0.0});
  const std::vector<double> w(ns.size(), 1.0 / ns.size());
  for (auto _ : state) benchmark::DoNotOptimize(eq::riesz_energy(ns, w, 1.0));
}
BENCHMARK(BM_RieszEnergy)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_SolveEquilibrium(benchmark::State& state) {
  const auto b = body("ellipse(1.4, 0.8)");
  const eq::DiscretizationOptions d{static_cast<int>(state.range(0)), 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(eq::solve_body(b, 1.0, d));
}
BENCHMARK(BM_SolveEquilibrium)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_FracLaplacianPoint(benchmark::State& state) {
  const frac::Field f = [](const geom::Vec& y) { return std::exp(-y.squaredNorm()); };
  for (auto _ : state)
    benchmark::DoNotOptimize(frac::frac_laplacian_point(f, 2, geom::Vec(0.3, 0.1, 0), 0.5));
}
BENCHMARK(BM_FracLaplacianPoint)->Unit(benchmark::kMicrosecond);

void BM_NormalDerivativeTrace(benchmark::State& state) {
  const auto b = body("ellipse(1.4, 0.8)");
  const auto sol = eq::solve_body(b, 1.0, {1000, 0.0});
  for (auto _ : state) benchmark::DoNotOptimize(frac::s_normal_derivative(sol, b, 0.5));
}
BENCHMARK(BM_NormalDerivativeTrace)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
