#pragma once

// Deterministic invariant suite behind `capkit selftest`.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace capkit::selftest {

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double tol = 0.0;
  std::string detail;
};

struct Result {
  std::vector<Check> checks;

  bool passed() const;
  /// Fixed-width pass/fail table; contains no timings, so reruns are
  /// byte-identical.
  std::string table() const;
  nlohmann::json to_json() const;
};

/// Minimiser of mu^T K mu over the probability simplex by enumeration of
/// all supports. Exact up to linear-algebra roundoff; meant for m <= 12.
struct QpSolution {
  Eigen::VectorXd weights;
  double energy = 0.0;
};
QpSolution simplex_qp_oracle(const Eigen::MatrixXd& K);

struct OracleCase {
  int dim = 2;
  int size = 0;
  double alpha = 1.0;
  double solver_energy = 0.0;
  double oracle_energy = 0.0;
  double rel_diff() const;
};

/// The <= 12-node corpus: deterministic random nodes in R^2 and R^3.
std::vector<OracleCase> oracle_corpus();

/// `jobs` caps the number of checks run concurrently.
Result run_selftest(int jobs = 1);

}  // namespace capkit::selftest
