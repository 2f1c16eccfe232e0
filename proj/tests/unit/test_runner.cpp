#include "capkit/error.hpp"
#include "capkit/runner.hpp"
#include "capkit/serialize.hpp"
#include "support.hpp"

#include "capkit/equilibrium.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace capkit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("capkit-test-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string config_error(const json& j) {
  try {
    run::plan_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

json small_capacity(const fs::path& cache) {
  return {{"kind", "capacity"},
          {"shape", "ellipse(1.2, 0.8)"},
          {"cache_dir", cache.string()},
          {"discretization", {{"cells", 400}}},
          {"probes", {{"interior", 5}, {"exterior", 0}}}};
}

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
  const auto plan = run::plan_from_json(run::parse_structured("{kind: capacity, n: 2, alpha: 1, shape: ball(1)}"));
  CHECK(plan.kind == run::Kind::Capacity);
  CHECK(plan.n == 2);
  CHECK(plan.alpha == 1.0);
  CHECK(plan.grid == 256);
  CHECK(plan.seed == 0);
  const json& c = plan.config;
  CHECK(c["discretization"]["cells"] == 2000);
  CHECK(c["solver"]["gap_tol"] == 1e-6);
  CHECK(c["gates"]["flatness_max"] == 0.02);
  CHECK(c["gates"]["c0_cv_max"] == 0.05);
  CHECK(c["gates"]["hausdorff_max"] == 0.02);
  CHECK(c["flow"]["max_steps"] == 200);
}

TEST_CASE("YAML and JSON configs agree") {
  const std::string yaml = "kind: flow\nalpha: 1\nshape: ellipse(1.3, 0.77)\nflow:\n  max_steps: 5\n";
  const std::string js = R"js({"kind": "flow", "alpha": 1, "shape": "ellipse(1.3, 0.77)", "flow": {"max_steps": 5}})js";
  CHECK(run::parse_structured(yaml) == run::parse_structured(js));
  CHECK(run::plan_from_json(run::parse_structured(yaml)).config == run::plan_from_json(run::parse_structured(js)).config);
}

TEST_CASE("range errors name the key") {
  const std::string e = config_error({{"kind", "capacity"}, {"alpha", 2.5}});
  CHECK(e.find("alpha") != std::string::npos);
  CHECK(e.find("(0, 2)") != std::string::npos);
  CHECK(config_error({{"kind", "capacity"}, {"n", 3}, {"alpha", 1.99}}).empty());
  CHECK(config_error({{"kind", "capacity"}, {"n", 4}}).find("n:") == 0);
  CHECK(config_error({{"kind", "capacity"}, {"solver", {{"gap_tol", -1}}}}).find("solver.gap_tol") == 0);
  CHECK(config_error({{"kind", "capacity"}, {"discretization", {{"cells", 10}}}}).find("discretization.cells") == 0);
  CHECK(config_error({{"kind", "capacity"}, {"grid", 8}}).find("grid") == 0);
  CHECK(config_error({{"kind", "capacity"}, {"seed", -3}}).find("seed") == 0);
}

TEST_CASE("unknown keys are rejected with a suggestion") {
  const std::string e = config_error({{"kind", "capacity"}, {"alpah", 1}});
  CHECK(e.find("\"alpah\"") != std::string::npos);
  CHECK(e.find("did you mean \"alpha\"") != std::string::npos);

  const std::string nested = config_error({{"kind", "capacity"}, {"solver", {{"gap_tl", 1e-6}}}});
  CHECK(nested.find("solver.gap_tl") != std::string::npos);
  CHECK(nested.find("gap_tol") != std::string::npos);

  CHECK(config_error({{"kind", "capacty"}}).find("capacity") != std::string::npos);
  CHECK(config_error({{"n", 2}}).find("kind") == 0);
}

TEST_CASE("shapes must resolve") {
  CHECK(config_error({{"kind", "capacity"}, {"shape", "blob(1)"}}).find("shape") == 0);
  CHECK(config_error({{"kind", "capacity"}, {"shape", "ellipse(1, -1)"}}).find("shape") == 0);
  CHECK(config_error({{"kind", "flow"}, {"alpha", 0.5}, {"flow", {{"constraint", "mean_width"}}}}).find("alpha") == 0);
}

TEST_CASE("config file errors") {
  CHECK_THROWS_AS(run::parse_config("/nonexistent/capkit.yaml"), ConfigError);
  const fs::path dir = scratch("cfg");
  std::ofstream(dir / "bad.yaml") << "kind: [unclosed\n";
  CHECK_THROWS_AS(run::parse_config(dir / "bad.yaml"), ConfigError);
}

TEST_CASE("edit distance") {
  CHECK(run::edit_distance("alpah", "alpha") == 2);
  CHECK(run::edit_distance("", "abc") == 3);
  CHECK(run::edit_distance("kitten", "sitting") == 3);
}

TEST_CASE("capacity runs are cached and deterministic") {
  const fs::path dir = scratch("capacity");
  const auto plan = run::plan_from_json(small_capacity(dir / "cache"));

  const auto first = run::run_experiment(plan);
  run::write_report(first, dir / "a");
  const auto second = run::run_experiment(plan);
  run::write_report(second, dir / "b");
  CHECK(first.passed());
  CHECK(run::exit_code(first) == 0);
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
  CHECK(slurp(dir / "a" / "summary.txt") == slurp(dir / "b" / "summary.txt"));
  CHECK(fs::exists(dir / "a" / "capacity.csv"));
  for (const auto& e : fs::directory_iterator(dir / "a")) CHECK(e.path().extension() != ".tmp");

  // The cached solution is the fresh one, bit for bit.
  const auto g = geom::make_direction_grid(2, 256);
  const auto body = geom::wulff_body(testing::shape_on("ellipse(1.2, 0.8)", g));
  eq::DiscretizationOptions d{400, 0.0};
  const auto fresh = eq::solve_body(body, 1.0, d);
  io::SolutionCache cache(dir / "cache");
  const auto cached = cache.solve(body, 1.0, d, {});
  CHECK(cache.hits() == 1);
  CHECK(cached.capacity == fresh.capacity);
  CHECK(cached.weights == fresh.weights);

  const json doc = first.document;
  CHECK(doc["provenance"]["config_hash"].get<std::string>().size() == 64);
  CHECK(doc["provenance"]["code_version"] == io::code_version());
  CHECK(doc["provenance"]["config"]["discretization"]["cells"] == 400);
  CHECK(doc["result"]["bodies"][0]["capacity"] == fresh.capacity);
}

TEST_CASE("cache keys cover the inputs") {
  const auto g = geom::make_direction_grid(2, 256);
  const auto h = testing::shape_on("ball(1)", g);
  const eq::DiscretizationOptions d{400, 0.0};
  const std::string k = io::SolutionCache::key(h, 1.0, d, {});
  CHECK(k == io::SolutionCache::key(h, 1.0, d, {}));
  CHECK(k != io::SolutionCache::key(h, 0.5, d, {}));
  CHECK(k != io::SolutionCache::key(h, 1.0, {500, 0.0}, {}));
  eq::SolverOptions s;
  s.gap_tol = 1e-7;
  CHECK(k != io::SolutionCache::key(h, 1.0, d, s));
  auto h2 = h;
  h2.h[3] += 1e-12;
  CHECK(k != io::SolutionCache::key(h2, 1.0, d, {}));
}

TEST_CASE("failing gates give exit code 1") {
  const fs::path dir = scratch("gates");
  json j = small_capacity(dir / "cache");
  j["gates"] = {{"flatness_max", 0.0}};
  const auto rep = run::run_experiment(run::plan_from_json(j));
  CHECK_FALSE(rep.passed());
  CHECK(run::exit_code(rep) == 1);
  CHECK(rep.document["passed"] == false);
}

TEST_CASE("stage errors are recorded with partial results") {
  const fs::path dir = scratch("stage");
  json j = {{"kind", "flow"},
            {"shape", "ellipse(1.3, 0.77)"},
            {"cache_dir", (dir / "cache").string()},
            {"discretization", {{"cells", 400}}},
            {"trace", {{"max_residual", 1e-14}}}};
  const auto rep = run::run_experiment(run::plan_from_json(j));
  REQUIRE(rep.failed_stage.has_value());
  CHECK(*rep.failed_stage == "flow");
  CHECK(rep.document["error"]["stage"] == "flow");
  CHECK(run::exit_code(rep) == 1);
  run::write_report(rep, dir / "out");
  CHECK(json::parse(slurp(dir / "out" / "report.json"))["passed"] == false);
  CHECK(slurp(dir / "out" / "summary.txt").find("error in stage flow") != std::string::npos);
}

TEST_CASE("constants kind") {
  const fs::path dir = scratch("constants");
  const auto plan = run::plan_from_json({{"kind", "constants"}, {"constants", {{"s", {0.5}}}}});
  const auto rep = run::run_experiment(plan);
  CHECK(rep.passed());
  CHECK(rep.tables.count("constants.csv") == 1);
  CHECK(rep.document["result"]["constants"][0]["s"] == 0.5);
}
