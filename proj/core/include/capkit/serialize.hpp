#pragma once

// JSON forms of bodies and equilibrium solutions, and the content-addressed
// solution cache.

#include "capkit/equilibrium.hpp"
#include "capkit/fractional.hpp"
#include "capkit/geom.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>

namespace capkit::io {

/// Version string mixed into cache keys and report provenance.
const char* code_version();

/// {n, N, h, derived: {sigma, G, s}}; `derived` is omitted when false.
nlohmann::json body_to_json(const geom::Body& body, bool derived = true);
/// Rebuilds the support vector on a fresh grid of the stored size.
geom::SupportVector support_from_json(const nlohmann::json& j);

nlohmann::json solution_to_json(const eq::EquilibriumSolution& sol);
eq::EquilibriumSolution solution_from_json(const nlohmann::json& j);

nlohmann::json constants_to_json(const frac::FracConstants& c);

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(const std::string& data);

/// Writes to a temporary sibling and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

class SolutionCache {
 public:
  /// An empty path disables the cache.
  explicit SolutionCache(std::filesystem::path dir = {});

  /// $CAPKIT_CACHE_DIR, else $XDG_CACHE_HOME/capkit, else ~/.cache/capkit.
  static std::filesystem::path default_dir();

  bool enabled() const { return !dir_.empty(); }
  const std::filesystem::path& dir() const { return dir_; }

  /// Hash of every input that affects a solve.
  static std::string key(const geom::SupportVector& h, double alpha, const eq::DiscretizationOptions& d,
                         const eq::SolverOptions& s);

  std::optional<eq::EquilibriumSolution> load(const std::string& key) const;
  void store(const std::string& key, const eq::EquilibriumSolution& sol) const;

  int hits() const { return hits_; }
  int misses() const { return misses_; }

  /// eq::solve_body with lookup and store. Grading 0 is resolved first so
  /// that equivalent requests share a key.
  eq::EquilibriumSolution solve(const geom::Body& body, double alpha, eq::DiscretizationOptions d,
                                const eq::SolverOptions& s);

 private:
  std::filesystem::path dir_;
  mutable std::atomic<int> hits_{0};
  mutable std::atomic<int> misses_{0};
};

}  // namespace capkit::io
