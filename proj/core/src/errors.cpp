#include "monoreg/errors.hpp"

#include <string>

namespace monoreg {

DimensionMismatch::DimensionMismatch(std::string_view what, std::size_t expected,
                                     std::size_t got)
    : std::invalid_argument(std::string(what) + ": expected dimension " +
                            std::to_string(expected) + ", got " +
                            std::to_string(got)) {}

std::string_view to_string(SolverErrorKind kind) {
  switch (kind) {
    case SolverErrorKind::MaxIterExceeded:
      return "MaxIterExceeded";
    case SolverErrorKind::Stagnation:
      return "Stagnation";
    case SolverErrorKind::NonFinite:
      return "NonFinite";
    case SolverErrorKind::IndefinitenessDetected:
      return "IndefinitenessDetected";
    case SolverErrorKind::MaxBracketSteps:
      return "MaxBracketSteps";
    case SolverErrorKind::NotMonotone:
      return "NotMonotone";
  }
  return "Unknown";
}

SolverError::SolverError(SolverErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
      kind_(kind) {}

}  // namespace monoreg
