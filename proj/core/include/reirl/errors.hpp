#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace reirl {

/// Process exit codes used by the CLI. Library errors carry the code so the
/// front end can map any failure to a stable status.
enum class ExitCode : int {
  Ok = 0,
  Config = 2,
  Data = 3,
  Numerical = 4,
  Infeasible = 5,
};

class Error : public std::runtime_error {
public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

private:
  ExitCode code_;
};

/// Bad option value, unknown config key, mixed config hashes.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::Config, what) {}
};

/// Malformed input files, duplicate keys, missing prerequisite artifacts.
class DataError : public Error {
public:
  explicit DataError(const std::string& what) : Error(ExitCode::Data, what) {}
};

/// Singular matrices, diverging iterations, enumeration cap exceeded.
class NumericalError : public Error {
public:
  explicit NumericalError(const std::string& what) : Error(ExitCode::Numerical, what) {}
};

/// Constraint box that no trajectory distribution can satisfy.
class InfeasibleError : public Error {
public:
  InfeasibleError(const std::string& what, std::vector<int> violated)
      : Error(ExitCode::Infeasible, what), violated_components_(std::move(violated)) {}
  const std::vector<int>& violated_components() const { return violated_components_; }

private:
  std::vector<int> violated_components_;
};

}  // namespace reirl
