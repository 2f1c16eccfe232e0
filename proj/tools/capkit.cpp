// capkit: command-line front end for the runner.

#include "capkit/error.hpp"
#include "capkit/fractional.hpp"
#include "capkit/runner.hpp"
#include "capkit/selftest.hpp"
#include "capkit/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int cmd_run(const fs::path& config, const std::string& output, int jobs, bool no_cache) {
  capkit::run::ExperimentPlan plan = capkit::run::parse_config(config);
  if (!output.empty()) plan.output = output;
  capkit::run::RunOptions opts;
  opts.jobs = jobs;
  opts.use_cache = !no_cache;
  const capkit::run::Report rep = capkit::run::run_experiment(plan, opts);
  capkit::run::write_report(rep, plan.output);
  std::cout << rep.summary;
  std::cout << "report written to " << plan.output.string() << "\n";
  return capkit::run::exit_code(rep);
}

int cmd_selftest(int jobs) {
  const capkit::selftest::Result r = capkit::selftest::run_selftest(jobs);
  std::cout << r.table();
  return r.passed() ? 0 : 1;
}

int cmd_constants(int n, double alpha, int resolution) {
  if (n != 2 && n != 3) throw capkit::ConfigError("--n: must be 2 or 3");
  if (!(alpha > 0.0 && alpha < 2.0)) throw capkit::ConfigError("--alpha: must lie in (0, 2)");
  if (resolution < 1) throw capkit::ConfigError("--resolution: must be at least 1");
  const auto c = capkit::frac::theorem_constants(n, 0.5 * alpha, resolution);
  json j = capkit::io::constants_to_json(c);
  j["alpha"] = alpha;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_show(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "report.json" : path;
  std::ifstream f(file);
  if (!f) throw capkit::ConfigError("cannot open report " + file.string());
  json doc = json::parse(f, nullptr, false);
  if (doc.is_discarded() || !doc.contains("gates")) throw capkit::ConfigError(file.string() + ": not a capkit report");
  const json& prov = doc["provenance"];
  std::cout << "kind: " << doc.value("kind", "?") << "  code " << prov.value("code_version", "?") << "  config "
            << prov.value("config_hash", "").substr(0, 16) << "\n";
  if (doc.contains("error"))
    std::cout << "error in stage " << doc["error"]["stage"].get<std::string>() << ": "
              << doc["error"]["message"].get<std::string>() << "\n";
  for (const json& g : doc["gates"]) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g <= %.6g", g["value"].get<double>(), g["limit"].get<double>());
    std::cout << (g["pass"].get<bool>() ? "  PASS  " : "  FAIL  ") << g["name"].get<std::string>() << "  " << buf
              << "\n";
  }
  std::cout << "overall: " << (doc.value("passed", false) ? "PASS" : "FAIL") << "\n";
  return doc.value("passed", false) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capkit: Riesz capacities, shape derivatives and constrained flows of convex bodies"};
  app.require_subcommand(1);
  int jobs = 1;
  bool no_cache = false;
  app.add_option("--jobs,-j", jobs, "maximum concurrent pipeline jobs")->check(CLI::PositiveNumber);
  app.add_flag("--no-cache", no_cache, "recompute every equilibrium solve");

  std::string config, output;
  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config, "YAML or JSON config")->required()->check(CLI::ExistingFile);
  run->add_option("--output,-o", output, "output directory (overrides the config)");

  app.add_subcommand("selftest", "run the invariant suite");

  int n = 2, resolution = 1;
  double alpha = 1.0;
  auto* cons = app.add_subcommand("constants", "print the fractional constants for (n, alpha)");
  cons->add_option("--n", n, "dimension (2 or 3)");
  cons->add_option("--alpha", alpha, "Riesz exponent");
  cons->add_option("--resolution", resolution, "quadrature refinement level");

  std::string report;
  auto* show = app.add_subcommand("show", "print the gates of a written report");
  show->add_option("report", report, "report.json or its directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(config, output, jobs, no_cache);
    if (app.got_subcommand("selftest")) return cmd_selftest(jobs);
    if (*cons) return cmd_constants(n, alpha, resolution);
    if (*show) return cmd_show(report);
  } catch (const capkit::ConfigError& e) {
    std::cerr << "capkit: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "capkit: internal error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
