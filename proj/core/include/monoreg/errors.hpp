#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace monoreg {

/// Operands of incompatible dimension were combined.
class DimensionMismatch : public std::invalid_argument {
 public:
  DimensionMismatch(std::string_view what, std::size_t expected, std::size_t got);
};

/// A configuration or problem specification violates one of its invariants.
/// The message names the inequality that failed.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class SolverErrorKind {
  MaxIterExceeded,
  Stagnation,
  NonFinite,
  IndefinitenessDetected,
  MaxBracketSteps,
  NotMonotone,
};

std::string_view to_string(SolverErrorKind kind);

/// Runtime failure of an iterative solve or of the parameter search.
class SolverError : public std::runtime_error {
 public:
  SolverError(SolverErrorKind kind, const std::string& detail);

  SolverErrorKind kind() const noexcept { return kind_; }

 private:
  SolverErrorKind kind_;
};

}  // namespace monoreg
