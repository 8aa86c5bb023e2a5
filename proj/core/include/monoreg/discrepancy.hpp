#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "monoreg/regularized_solver.hpp"
#include "monoreg/space.hpp"

namespace monoreg {

enum class DiscrepancyMode {
  /// Accept any a whose approximate solve has C1 d^g <= ||F(v) - f_delta|| <= C2 d^g.
  Band,
  /// Bisect on the sign of ||F(V_a) - f_delta|| - C d^g until it is within exact_tol.
  Exact,
};

std::string_view to_string(DiscrepancyMode mode);

struct DiscrepancyConfig {
  double C = 1.5;
  double gamma = 0.9;
  double C1 = 1.0;
  double C2 = 2.0;
  double theta = 0.4;
  /// Bisection stops once the bracket half-width drops below eps.
  double eps = 1e-6;
  double a_init = 1.0;
  int max_bracket_steps = 200;
  DiscrepancyMode mode = DiscrepancyMode::Band;
  double exact_tol = 1e-8;
  /// Sample the operator for monotonicity before solving.
  bool audit_monotonicity = true;
  int audit_pairs = 256;

  double target(double delta) const;
  double band_low(double delta) const;
  double band_high(double delta) const;

  /// Stopping multiplier used for the inner solves. Exact mode tightens it so
  /// that max(theta delta, tol_min) <= exact_tol / 2.
  double inner_theta(double delta) const;

  /// Checks 0 < C1 < C < C2, 0 < gamma <= 1, C d^g > d and
  /// C1 d^g + theta d < C d^g < C2 d^g - theta d for this delta. Throws
  /// ConfigError naming the failed inequality.
  void validate(double delta) const;
};

enum class DiscrepancyStatus {
  Converged,
  /// ||F(0) - f_delta|| <= C d^g already; the zero vector is returned.
  ZeroWithinDiscrepancy,
  /// The bracket collapsed below eps without an accepted point; the trial
  /// closest to the target is returned.
  NarrowIntervalWarning,
};

std::string_view to_string(DiscrepancyStatus status);

/// Where an approximate discrepancy falls relative to the acceptance set.
enum class TrialSide { Below, Accept, Above };

/// One approximate solve of F(V) + a V = f_delta performed during the search.
struct Trial {
  double a = 0.0;
  Vector v;
  /// ||F(v) - f_delta||
  double phi = 0.0;
  /// ||F(v) + a v - f_delta||
  double residual = 0.0;
  int inner_iters = 0;
  TrialSide side = TrialSide::Below;
};

struct Bracket {
  double low = 0.0;
  double up = 0.0;
};

struct DiscrepancyResult {
  /// +infinity for ZeroWithinDiscrepancy.
  double alpha = 0.0;
  Vector v_delta;
  double phi_value = 0.0;
  double residual = 0.0;
  long total_inner_iters = 0;
  std::optional<Bracket> bracket;
  DiscrepancyStatus status = DiscrepancyStatus::Converged;
  /// Every trial solve in evaluation order.
  std::vector<Trial> trials;
};

struct PhiPsi {
  double phi = 0.0;
  double psi = 0.0;
  Vector V;
  SolveTrace trace;
};

/// phi(a) = ||F(V) - f_delta|| and psi(a) = ||V|| for an approximate solution
/// V of F(V) + a V = f_delta. phi is increasing and psi decreasing in a.
PhiPsi phi_psi(const Operator& op, const Vector& f_delta, double a,
               const IterationConfig& solver_cfg, const std::optional<Vector>& u0 = std::nullopt);

enum class Precondition { Proceed, ZeroWithinDiscrepancy };

/// Proceed iff ||F(0) - f_delta|| > C d^g. Validates cfg first.
Precondition precondition_check(const Operator& op, const Vector& f_delta, double delta,
                                const DiscrepancyConfig& cfg);

/// Trial solves keyed by a. Safe for concurrent insertion of distinct keys.
class TrialCache {
 public:
  std::optional<Trial> find(double a) const;
  void insert(const Trial& trial);
  /// The cached V at the a closest to `a` in log scale.
  std::optional<Vector> nearest(double a) const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<double, Trial> trials_;
};

struct BracketBound {
  double alpha = 0.0;
};

/// Either the bracket end found, or an early acceptance met en route.
using BracketOutcome = std::variant<BracketBound, DiscrepancyResult>;

/// Doubles a from cfg.a_init until the approximate discrepancy exceeds the
/// upper acceptance level; accepts early when a trial lands in the band.
BracketOutcome find_alpha_up(const Operator& op, const Vector& f_delta, double delta,
                             const DiscrepancyConfig& cfg, const IterationConfig& solver_cfg);

/// Halves a from cfg.a_init until the approximate discrepancy drops below the
/// lower acceptance level; accepts early when a trial lands in the band.
BracketOutcome find_alpha_low(const Operator& op, const Vector& f_delta, double delta,
                              const DiscrepancyConfig& cfg, const IterationConfig& solver_cfg);

/// Bisection on [alpha_low, alpha_up]. Expects the approximate discrepancy to
/// be below the acceptance set at alpha_low and above it at alpha_up.
DiscrepancyResult bisect_discrepancy(const Operator& op, const Vector& f_delta, double delta,
                                     const DiscrepancyConfig& cfg,
                                     const IterationConfig& solver_cfg, double alpha_low,
                                     double alpha_up);

/// Full pipeline: audit, precondition, joint bracketing from cfg.a_init with a
/// shared trial cache and warm starts, then bisection.
///
/// The solver config's theta and delta are replaced by cfg.inner_theta(delta)
/// and delta.
DiscrepancyResult solve_discrepancy(const Operator& op, const Vector& f_delta, double delta,
                                    const DiscrepancyConfig& cfg,
                                    const IterationConfig& solver_cfg);

/// Same pipeline for F(V) + a (V - u_bar) = f_delta, selecting in the limit
/// the solution closest to u_bar. Runs on u -> F(u + u_bar) and shifts back.
DiscrepancyResult solve_discrepancy_shifted(const Operator& op, const Vector& f_delta,
                                            double delta, const Vector& u_bar,
                                            const DiscrepancyConfig& cfg,
                                            const IterationConfig& solver_cfg);

/// Independent re-check of a result against the operator:
///   ||F(v) + alpha v - f_delta|| <= theta delta  and
///   C1 d^g <= ||F(v) - f_delta|| <= C2 d^g  (Band) or within exact_tol of C d^g (Exact).
/// `slack` is a relative allowance for the re-evaluation round-off.
bool satisfies_stopping_conditions(const Operator& op, const Vector& f_delta, double delta,
                                   const DiscrepancyConfig& cfg, const IterationConfig& solver_cfg,
                                   double alpha, const Vector& v, double slack = 1e-9);

}  // namespace monoreg
