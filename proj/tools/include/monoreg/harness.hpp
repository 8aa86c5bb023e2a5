#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "monoreg/discrepancy.hpp"
#include "monoreg/problems.hpp"

namespace monoreg::cli {

/// Malformed or invalid run specification. Maps to exit code 2.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitNotConverged = 1;
inline constexpr int kExitSpec = 2;
inline constexpr int kExitSolver = 3;

inline constexpr std::string_view kSweepHeader = "delta,alpha,phi,psi,err_to_y,inner_iters";
inline constexpr std::string_view kPhiCurveHeader = "a,phi,psi,violation";

struct RunSpec {
  nlohmann::json problem;
  std::vector<double> deltas;
  DiscrepancyConfig cfg;
  IterationConfig solver;
  std::uint64_t seed = 0;
  /// Ascending, duplicates removed. Only read by phi-curve.
  std::vector<double> a_grid;
  /// phi-curve solves with the problem oracle unless this is false.
  bool use_oracle = true;
};

/// Parses and validates a spec. Every config invariant is checked for every
/// delta before returning. Throws SpecError.
RunSpec parse_spec(std::string_view text);
RunSpec load_spec(const std::string& path);

/// Problem from its JSON record. Throws SpecError.
std::unique_ptr<Problem> build_problem(const nlohmann::json& record);

struct SolveRecord {
  double delta = 0.0;
  DiscrepancyResult result;
  /// ||v_delta - y|| when y is known.
  std::optional<double> error;
};

SolveRecord solve_one(const Problem& problem, const RunSpec& spec, double delta);

nlohmann::json to_json(const SolveRecord& record);
/// One sweep row.
std::string to_csv_row(const SolveRecord& record);
bool success(DiscrepancyStatus status);

struct Output {
  std::string text;
  int exit_code = kExitOk;
};

/// JSON result for the single delta of the spec.
Output cmd_solve(const RunSpec& spec);
/// CSV, one row per delta in decreasing order. Needs a known y.
Output cmd_sweep(const RunSpec& spec);
/// CSV of phi and psi over the a grid at the first delta.
Output cmd_phi_curve(const RunSpec& spec);

/// Re-checks an emitted solve result against the operator rebuilt from the
/// spec.
bool verify_result(const RunSpec& spec, const nlohmann::json& result);

/// Full command line: monoreg solve|sweep|phi-curve --spec FILE [--out FILE] [--seed N]
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace monoreg::cli
