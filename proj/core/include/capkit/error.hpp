#pragma once

#include <stdexcept>
#include <string>

namespace capkit {

// Exceptions carry a coarse category so that the CLI can map them onto exit
// codes without string matching.
enum class ErrorKind {
  Config,     // bad user input: ranges, unknown keys, malformed files
  Geometry,   // certificate failures, grid mismatches, invalid bodies
  Solver,     // non-convergence, singular kernels, failed fits
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error(ErrorKind::Geometry, what) {}
};

class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error(ErrorKind::Solver, what) {}
};

}  // namespace capkit
