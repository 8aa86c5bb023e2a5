#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "monoreg/space.hpp"

namespace monoreg {

/// Step size of the fixed-point map G(u) = u - lambda (F(u) + a u - f_delta)
/// and the contraction factor it guarantees for a monotone F with Lipschitz
/// constant L:  q^2 = 1 - 2 lambda a + lambda^2 (a + L)^2.
struct StepChoice {
  double lambda = 0.0;
  double q = 0.0;
};

/// The step minimizing the contraction bound: lambda = a / (a + L)^2,
/// q = sqrt(1 - a^2 / (a + L)^2). Throws ConfigError unless a > 0, L >= 0.
StepChoice optimal_step(double a, double lipschitz);

/// Contraction factor for a caller-chosen step. q >= 1 when the step is
/// outside (0, 2a / (a + L)^2).
StepChoice step_for(double lambda, double a, double lipschitz);

enum class InnerMethod {
  /// Conjugate gradients for affine operators, fixed point otherwise.
  Auto,
  FixedPoint,
  ConjugateGradient,
};

struct IterationConfig {
  /// Stop at the first iterate with ||F(u) + a u - f_delta|| <= max(theta delta, tol_min).
  double theta = 0.4;
  double delta = 0.0;
  double tol_min = 1e-12;
  int max_iter = 100000;
  /// Radius of the ball about the operator center in which L(R) is taken.
  double R = 10.0;
  std::optional<double> lambda_override;
  InnerMethod method = InnerMethod::Auto;
  /// A residual that fails to drop below its value `stagnation_window` steps
  /// earlier triggers L <- 2L and a restart from the best iterate.
  int stagnation_window = 10;
  int max_retries = 5;
  /// Pairs and seed for estimating L when the operator carries no bound.
  int lipschitz_samples = 50;
  std::uint64_t seed = 0;

  double threshold() const;
  /// Throws ConfigError.
  void validate() const;
};

struct SolveTrace {
  /// Iterations performed, across all retries.
  int n_stop = 0;
  /// ||F(u_n) + a u_n - f_delta|| for n = 0..n_stop.
  std::vector<double> residuals;
  /// Largest observed ratio residuals[n+1] / residuals[n]; 0 with fewer than
  /// two residuals.
  double q_hat = 0.0;
  /// Step and contraction bound of the final attempt (fixed point only).
  StepChoice step;
  double lipschitz = 0.0;
  int retries = 0;
};

struct RegularizedSolution {
  Vector V;
  SolveTrace trace;
};

/// ||F(u) + a u - f_delta||.
double residual_norm(const Operator& op, const Vector& u, double a, const Vector& f_delta);

/// Solves F(V) + a V = f_delta by the fixed-point iteration
///   u_{n+1} = u_n - lambda (F(u_n) + a u_n - f_delta)
/// with lambda = a / (a + L)^2 and L = L(cfg.R) (or a sampled estimate).
/// Returns the first iterate meeting cfg.threshold(); since
/// a ||u - V|| <= ||F(u) - F(V) + a(u - V)||, that iterate lies within
/// threshold / a of the exact solution.
///
/// Throws SolverError: MaxIterExceeded, Stagnation (after max_retries
/// doublings of L), NonFinite.
RegularizedSolution solve_regularized(const Operator& op, const Vector& f_delta, double a,
                                      const Vector& u0, const IterationConfig& cfg);

/// Conjugate gradients on (A + aI) u = f_delta - F(0) for an affine operator
/// F(u) = A u + F(0) with A symmetric positive semidefinite. No preconditioner.
///
/// Throws SolverError: MaxIterExceeded, NonFinite, IndefinitenessDetected
/// (non-positive curvature, i.e. A + aI is not positive definite).
RegularizedSolution solve_regularized_linear(const Operator& op, const Vector& f_delta,
                                             double a, const IterationConfig& cfg,
                                             const std::optional<Vector>& u0 = std::nullopt);

/// Dispatches on cfg.method.
RegularizedSolution solve_regularized_auto(const Operator& op, const Vector& f_delta, double a,
                                           const Vector& u0, const IterationConfig& cfg);

}  // namespace monoreg
