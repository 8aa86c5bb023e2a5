#include "monoreg/regularized_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "monoreg/errors.hpp"

namespace monoreg {
namespace {

void require_positive_a(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) {
    throw ConfigError("regularization parameter a must be finite and > 0");
  }
}

double max_ratio(const std::vector<double>& residuals) {
  double q = 0.0;
  for (std::size_t n = 1; n < residuals.size(); ++n) {
    if (residuals[n - 1] > 0.0) q = std::max(q, residuals[n] / residuals[n - 1]);
  }
  return q;
}

// Divergence guard: an attempt whose residual grows this much over its start
// is treated as stagnation before it can overflow.
constexpr double kDivergenceFactor = 1e6;

}  // namespace

StepChoice optimal_step(double a, double lipschitz) {
  require_positive_a(a);
  if (!(lipschitz >= 0.0)) throw ConfigError("Lipschitz constant must be >= 0");
  const double s = a + lipschitz;
  StepChoice step;
  step.lambda = a / (s * s);
  const double ratio = a / s;
  step.q = std::sqrt(std::max(0.0, 1.0 - ratio * ratio));
  return step;
}

StepChoice step_for(double lambda, double a, double lipschitz) {
  require_positive_a(a);
  if (!(lambda > 0.0)) throw ConfigError("step lambda must be > 0");
  if (!(lipschitz >= 0.0)) throw ConfigError("Lipschitz constant must be >= 0");
  const double s = a + lipschitz;
  const double q2 = 1.0 - 2.0 * lambda * a + lambda * lambda * s * s;
  return StepChoice{lambda, std::sqrt(std::max(0.0, q2))};
}

double IterationConfig::threshold() const { return std::max(theta * delta, tol_min); }

void IterationConfig::validate() const {
  if (!(theta > 0.0)) throw ConfigError("solver theta must be > 0");
  if (!(delta >= 0.0)) throw ConfigError("solver delta must be >= 0");
  if (!(tol_min > 0.0)) throw ConfigError("solver tol_min must be > 0");
  if (max_iter < 1) throw ConfigError("solver max_iter must be >= 1");
  if (!(R > 0.0)) throw ConfigError("solver R must be > 0");
  if (lambda_override && !(*lambda_override > 0.0)) {
    throw ConfigError("solver lambda override must be > 0");
  }
  if (stagnation_window < 1) throw ConfigError("stagnation_window must be >= 1");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (lipschitz_samples < 1) throw ConfigError("lipschitz_samples must be >= 1");
}

double residual_norm(const Operator& op, const Vector& u, double a, const Vector& f_delta) {
  require_dim(u, op.dim(), "residual_norm u");
  require_dim(f_delta, op.dim(), "residual_norm f_delta");
  return (op(u) + a * u - f_delta).norm();
}

RegularizedSolution solve_regularized(const Operator& op, const Vector& f_delta, double a,
                                      const Vector& u0, const IterationConfig& cfg) {
  require_positive_a(a);
  cfg.validate();
  require_dim(f_delta, op.dim(), "f_delta");
  require_dim(u0, op.dim(), "u0");

  double lipschitz = op.has_lipschitz_bound()
                         ? op.lipschitz_bound(cfg.R)
                         : max_difference_quotient(op, u0, cfg.R, cfg.lipschitz_samples, cfg.seed);
  StepChoice step = cfg.lambda_override ? step_for(*cfg.lambda_override, a, lipschitz)
                                        : optimal_step(a, lipschitz);
  const double thr = cfg.threshold();

  RegularizedSolution out;
  SolveTrace& trace = out.trace;
  Vector u = u0;
  Vector r = op(u) + a * u - f_delta;
  double rn = r.norm();
  trace.residuals.push_back(rn);
  if (!std::isfinite(rn)) throw SolverError(SolverErrorKind::NonFinite, "initial residual");

  Vector best = u;
  double best_rn = rn;
  std::size_t attempt_start = 0;
  int iter = 0;

  while (rn > thr) {
    if (iter >= cfg.max_iter) {
      std::ostringstream msg;
      msg << "residual " << rn << " > " << thr << " after " << iter << " iterations (a=" << a
          << ", q=" << step.q << ")";
      throw SolverError(SolverErrorKind::MaxIterExceeded, msg.str());
    }
    u -= step.lambda * r;
    r = op(u) + a * u - f_delta;
    rn = r.norm();
    ++iter;
    trace.residuals.push_back(rn);
    if (rn < best_rn) {
      best = u;
      best_rn = rn;
    }

    const std::size_t k = trace.residuals.size() - 1;
    const auto window = static_cast<std::size_t>(cfg.stagnation_window);
    const bool diverging =
        !std::isfinite(rn) || rn > kDivergenceFactor * trace.residuals[attempt_start];
    const bool stalled = k - attempt_start >= window && rn >= trace.residuals[k - window];
    if (rn > thr && (diverging || stalled)) {
      if (trace.retries >= cfg.max_retries) {
        if (!std::isfinite(rn)) throw SolverError(SolverErrorKind::NonFinite, "iterate diverged");
        std::ostringstream msg;
        msg << "residual ratio >= 1 after " << trace.retries << " Lipschitz doublings (L="
            << lipschitz << ")";
        throw SolverError(SolverErrorKind::Stagnation, msg.str());
      }
      ++trace.retries;
      lipschitz = lipschitz > 0.0 ? 2.0 * lipschitz : a;
      step = optimal_step(a, lipschitz);
      u = best;
      r = op(u) + a * u - f_delta;
      rn = best_rn;
      attempt_start = k;
      trace.residuals[k] = rn;
    }
  }

  trace.n_stop = iter;
  trace.q_hat = max_ratio(trace.residuals);
  trace.step = step;
  trace.lipschitz = lipschitz;
  out.V = std::move(u);
  return out;
}

RegularizedSolution solve_regularized_linear(const Operator& op, const Vector& f_delta,
                                             double a, const IterationConfig& cfg,
                                             const std::optional<Vector>& u0) {
  require_positive_a(a);
  cfg.validate();
  require_dim(f_delta, op.dim(), "f_delta");
  if (!op.is_affine()) {
    throw ConfigError("conjugate-gradient path requires a linear or affine operator");
  }
  const auto n = static_cast<Eigen::Index>(op.dim());
  const Vector zero = Vector::Zero(n);
  const Vector offset = op.is_linear() ? zero : op(zero);
  auto apply = [&](const Vector& v) -> Vector { return op(v) - offset + a * v; };

  const Vector b = f_delta - offset;
  Vector x = u0 ? *u0 : zero;
  require_dim(x, op.dim(), "u0");
  const double thr = cfg.threshold();

  RegularizedSolution out;
  SolveTrace& trace = out.trace;
  Vector r = b - apply(x);
  double rs = r.squaredNorm();
  trace.residuals.push_back(std::sqrt(rs));
  if (!std::isfinite(rs)) throw SolverError(SolverErrorKind::NonFinite, "initial residual");

  Vector p = r;
  int iter = 0;
  while (std::sqrt(rs) > thr) {
    if (iter >= cfg.max_iter) {
      std::ostringstream msg;
      msg << "CG residual " << std::sqrt(rs) << " > " << thr << " after " << iter
          << " iterations";
      throw SolverError(SolverErrorKind::MaxIterExceeded, msg.str());
    }
    const Vector ap = apply(p);
    const double curvature = p.dot(ap);
    if (!std::isfinite(curvature)) throw SolverError(SolverErrorKind::NonFinite, "CG curvature");
    if (curvature <= 0.0) {
      std::ostringstream msg;
      msg << "p^T (A + aI) p = " << curvature << " at iteration " << iter;
      throw SolverError(SolverErrorKind::IndefinitenessDetected, msg.str());
    }
    const double step = rs / curvature;
    x += step * p;
    r -= step * ap;
    ++iter;
    double rs_new = r.squaredNorm();
    if (std::sqrt(rs_new) <= thr) {
      // Recurrence residuals drift; confirm against the true residual and
      // restart the Krylov space if they disagree.
      r = b - apply(x);
      rs_new = r.squaredNorm();
      trace.residuals.push_back(std::sqrt(rs_new));
      rs = rs_new;
      p = r;
      continue;
    }
    trace.residuals.push_back(std::sqrt(rs_new));
    if (!std::isfinite(rs_new)) throw SolverError(SolverErrorKind::NonFinite, "CG residual");
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }

  trace.n_stop = iter;
  trace.q_hat = max_ratio(trace.residuals);
  out.V = std::move(x);
  return out;
}

RegularizedSolution solve_regularized_auto(const Operator& op, const Vector& f_delta, double a,
                                           const Vector& u0, const IterationConfig& cfg) {
  const bool use_cg = cfg.method == InnerMethod::ConjugateGradient ||
                      (cfg.method == InnerMethod::Auto && op.is_affine());
  if (use_cg) return solve_regularized_linear(op, f_delta, a, cfg, u0);
  return solve_regularized(op, f_delta, a, u0, cfg);
}

}  // namespace monoreg
