#pragma once

#include <stdexcept>
#include <string>

namespace homlab {

/// Invalid user input: bad grid, malformed configuration, unknown template,
/// under-resolved coefficient field. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  static constexpr int exit_code = 2;
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A linear solve did not reach its tolerance or produced non-finite values.
/// Maps to CLI exit code 3.
class SolverError : public std::runtime_error {
 public:
  static constexpr int exit_code = 3;
  SolverError(const std::string& what, int iterations, double residual)
      : std::runtime_error(what), iterations_(iterations), residual_(residual) {}

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

}  // namespace homlab
