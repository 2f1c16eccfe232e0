#pragma once

// Experiment plans, pipelines and report emission behind `capkit run`.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace capkit::run {

enum class Kind { Capacity, Hadamard, Flow, BrunnMinkowski, Constants, Selftest };

std::string to_string(Kind k);

/// Documented defaults for every configuration key. `kind` has no default.
const nlohmann::json& default_config();

/// Parses JSON or YAML text into a JSON value.
nlohmann::json parse_structured(const std::string& text);

struct ExperimentPlan {
  Kind kind = Kind::Capacity;
  nlohmann::json config;  // fully resolved, echoed into the report
  int n = 2;
  double alpha = 1.0;
  int grid = 256;
  std::uint64_t seed = 0;
  std::filesystem::path output;
  std::filesystem::path cache_dir;  // empty: cache disabled
};

/// Validates and fills defaults. Unknown keys and out-of-range values throw
/// ConfigError naming the key (with a suggestion for near misses).
ExperimentPlan plan_from_json(const nlohmann::json& j);
ExperimentPlan parse_config(const std::filesystem::path& path);

struct Gate {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = false;
};

struct Report {
  Kind kind = Kind::Capacity;
  nlohmann::json document;  // the full report.json
  std::vector<Gate> gates;
  std::map<std::string, std::string> tables;  // file name -> CSV text
  std::string summary;
  std::optional<std::string> failed_stage;

  bool passed() const;
};

struct RunOptions {
  int jobs = 1;
  bool use_cache = true;
};

/// Runs the pipeline. Module errors are caught and recorded against the
/// stage that raised them; configuration errors propagate.
Report run_experiment(const ExperimentPlan& plan, const RunOptions& opts = {});

/// report.json, one CSV per table and summary.txt, each written atomically.
void write_report(const Report& report, const std::filesystem::path& dir);

/// 0 when every gate passes, 1 otherwise.
int exit_code(const Report& report);

/// Levenshtein distance, used for key suggestions.
int edit_distance(const std::string& a, const std::string& b);

}  // namespace capkit::run
