#include "monoreg/discrepancy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "monoreg/errors.hpp"

namespace monoreg {

std::string_view to_string(DiscrepancyMode mode) {
  return mode == DiscrepancyMode::Band ? "band" : "exact";
}

std::string_view to_string(DiscrepancyStatus status) {
  switch (status) {
    case DiscrepancyStatus::Converged:
      return "Converged";
    case DiscrepancyStatus::ZeroWithinDiscrepancy:
      return "ZeroWithinDiscrepancy";
    case DiscrepancyStatus::NarrowIntervalWarning:
      return "NarrowIntervalWarning";
  }
  return "Unknown";
}

double DiscrepancyConfig::target(double delta) const { return C * std::pow(delta, gamma); }
double DiscrepancyConfig::band_low(double delta) const { return C1 * std::pow(delta, gamma); }
double DiscrepancyConfig::band_high(double delta) const { return C2 * std::pow(delta, gamma); }

double DiscrepancyConfig::inner_theta(double delta) const {
  if (mode == DiscrepancyMode::Exact && delta > 0.0) {
    return std::min(theta, 0.5 * exact_tol / delta);
  }
  return theta;
}

void DiscrepancyConfig::validate(double delta) const {
  auto fail = [](const std::string& what) { throw ConfigError("discrepancy config: " + what); };
  if (!(delta > 0.0) || !std::isfinite(delta)) fail("noise level delta must be finite and > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(C1 > 0.0)) fail("C1 > 0 violated");
  if (!(C1 < C)) fail("C1 < C violated");
  if (!(C < C2)) fail("C < C2 violated");
  if (!(theta > 0.0)) fail("theta > 0 violated");
  if (!(eps > 0.0)) fail("eps > 0 violated");
  if (!(a_init > 0.0) || !std::isfinite(a_init)) fail("a_init must be finite and > 0");
  if (max_bracket_steps < 1) fail("max_bracket_steps >= 1 violated");
  if (!(exact_tol > 0.0)) fail("exact_tol > 0 violated");
  if (audit_pairs < 1) fail("audit_pairs >= 1 violated");

  const double dg = std::pow(delta, gamma);
  std::ostringstream msg;
  if (!(C * dg > delta)) {
    msg << "C d^g > d violated (" << C * dg << " <= " << delta << ")";
    fail(msg.str());
  }
  const double slack = inner_theta(delta) * delta;
  if (!(C1 * dg + slack < C * dg)) {
    msg << "C1 d^g + theta d < C d^g violated (" << C1 * dg + slack << " >= " << C * dg << ")";
    fail(msg.str());
  }
  if (!(C * dg < C2 * dg - slack)) {
    msg << "C d^g < C2 d^g - theta d violated (" << C * dg << " >= " << C2 * dg - slack << ")";
    fail(msg.str());
  }
}

PhiPsi phi_psi(const Operator& op, const Vector& f_delta, double a,
               const IterationConfig& solver_cfg, const std::optional<Vector>& u0) {
  const Vector start = u0 ? *u0 : Vector::Zero(static_cast<Eigen::Index>(op.dim()));
  RegularizedSolution sol = solve_regularized_auto(op, f_delta, a, start, solver_cfg);
  PhiPsi out;
  out.phi = (op(sol.V) - f_delta).norm();
  out.psi = sol.V.norm();
  out.V = std::move(sol.V);
  out.trace = std::move(sol.trace);
  return out;
}

Precondition precondition_check(const Operator& op, const Vector& f_delta, double delta,
                                const DiscrepancyConfig& cfg) {
  cfg.validate(delta);
  require_dim(f_delta, op.dim(), "f_delta");
  const double at_zero = (op(Vector::Zero(static_cast<Eigen::Index>(op.dim()))) - f_delta).norm();
  return at_zero > cfg.target(delta) ? Precondition::Proceed
                                     : Precondition::ZeroWithinDiscrepancy;
}

std::optional<Trial> TrialCache::find(double a) const {
  std::lock_guard lock(mutex_);
  auto it = trials_.find(a);
  if (it == trials_.end()) return std::nullopt;
  return it->second;
}

void TrialCache::insert(const Trial& trial) {
  std::lock_guard lock(mutex_);
  trials_.insert_or_assign(trial.a, trial);
}

std::optional<Vector> TrialCache::nearest(double a) const {
  std::lock_guard lock(mutex_);
  if (trials_.empty()) return std::nullopt;
  auto hi = trials_.lower_bound(a);
  if (hi == trials_.end()) return std::prev(hi)->second.v;
  if (hi == trials_.begin()) return hi->second.v;
  auto lo = std::prev(hi);
  const double dl = std::log(a) - std::log(lo->first);
  const double dh = std::log(hi->first) - std::log(a);
  return dl <= dh ? lo->second.v : hi->second.v;
}

std::size_t TrialCache::size() const {
  std::lock_guard lock(mutex_);
  return trials_.size();
}

namespace {

// One parameter search over a fixed (F, f_delta, delta). Owns the trial cache
// shared by the bracketing walks and the bisection.
class Search {
 public:
  Search(const Operator& op, const Vector& f_delta, double delta, const DiscrepancyConfig& cfg,
         const IterationConfig& solver_cfg)
      : op_(op), f_delta_(f_delta), delta_(delta), cfg_(cfg), inner_(solver_cfg) {
    cfg_.validate(delta_);
    require_dim(f_delta_, op_.dim(), "f_delta");
    inner_.theta = cfg_.inner_theta(delta_);
    inner_.delta = delta_;
    inner_.validate();
    if (cfg_.mode == DiscrepancyMode::Exact && inner_.tol_min > 0.5 * cfg_.exact_tol) {
      throw ConfigError("discrepancy config: exact mode needs solver tol_min <= exact_tol / 2");
    }
  }

  TrialSide classify(double phi) const {
    if (cfg_.mode == DiscrepancyMode::Band) {
      if (phi > cfg_.band_high(delta_)) return TrialSide::Above;
      if (phi < cfg_.band_low(delta_)) return TrialSide::Below;
      return TrialSide::Accept;
    }
    const double target = cfg_.target(delta_);
    if (std::abs(phi - target) <= cfg_.exact_tol) return TrialSide::Accept;
    return phi > target ? TrialSide::Above : TrialSide::Below;
  }

  const Trial& trial(double a) {
    if (auto hit = cache_.find(a)) {
      trials_.push_back(*hit);
      return trials_.back();
    }
    const Vector u0 =
        cache_.nearest(a).value_or(Vector::Zero(static_cast<Eigen::Index>(op_.dim())));
    RegularizedSolution sol = solve_regularized_auto(op_, f_delta_, a, u0, inner_);
    const Vector fv = op_(sol.V);
    Trial t;
    t.a = a;
    t.phi = (fv - f_delta_).norm();
    t.residual = (fv + a * sol.V - f_delta_).norm();
    t.inner_iters = sol.trace.n_stop;
    t.side = classify(t.phi);
    t.v = std::move(sol.V);
    total_iters_ += t.inner_iters;
    cache_.insert(t);
    trials_.push_back(std::move(t));
    return trials_.back();
  }

  DiscrepancyResult finish(const Trial& t, DiscrepancyStatus status,
                           std::optional<Bracket> bracket) {
    DiscrepancyResult r;
    r.alpha = t.a;
    r.v_delta = t.v;
    r.phi_value = t.phi;
    r.residual = t.residual;
    r.total_inner_iters = total_iters_;
    r.bracket = bracket;
    r.status = status;
    r.trials = trials_;
    return r;
  }

  // Doubling walk. On exit through BracketBound every trial visited before
  // the last one was Below.
  BracketOutcome walk_up(double a) {
    for (int step = 0; step < cfg_.max_bracket_steps; ++step, a *= 2.0) {
      const Trial& t = trial(a);
      if (t.side == TrialSide::Accept) return finish(t, DiscrepancyStatus::Converged, {});
      if (t.side == TrialSide::Above) return BracketBound{a};
    }
    throw SolverError(SolverErrorKind::MaxBracketSteps, "doubling never exceeded the band");
  }

  BracketOutcome walk_down(double a) {
    if (cfg_.mode == DiscrepancyMode::Band && !(cfg_.band_low(delta_) > delta_)) {
      throw ConfigError("discrepancy config: finding alpha_low needs C1 d^g > d");
    }
    for (int step = 0; step < cfg_.max_bracket_steps; ++step, a *= 0.5) {
      const Trial& t = trial(a);
      if (t.side == TrialSide::Accept) return finish(t, DiscrepancyStatus::Converged, {});
      if (t.side == TrialSide::Below) return BracketBound{a};
    }
    throw SolverError(SolverErrorKind::MaxBracketSteps, "halving never dropped below the band");
  }

  DiscrepancyResult bisect(double low, double up) {
    const Bracket initial{low, up};
    const std::size_t first = trials_.size();
    auto closest = [&]() -> const Trial& {
      const double target = cfg_.target(delta_);
      auto it = std::min_element(
          trials_.begin() + static_cast<std::ptrdiff_t>(first), trials_.end(),
          [&](const Trial& x, const Trial& y) {
            return std::abs(x.phi - target) < std::abs(y.phi - target);
          });
      return *it;
    };
    if (!(low < up)) {
      trial(low);
      return finish(closest(), DiscrepancyStatus::NarrowIntervalWarning, initial);
    }
    while (true) {
      const double a = 0.5 * (low + up);
      if (!(a > low && a < up)) {
        trial(a);
        return finish(closest(), DiscrepancyStatus::NarrowIntervalWarning, initial);
      }
      const Trial& t = trial(a);
      if (t.side == TrialSide::Accept) return finish(t, DiscrepancyStatus::Converged, initial);
      if (t.side == TrialSide::Above) {
        up = a;
      } else {
        low = a;
      }
      if (0.5 * (up - low) < cfg_.eps) {
        return finish(closest(), DiscrepancyStatus::NarrowIntervalWarning, initial);
      }
    }
  }

  // Algorithms for the two bracket ends share the first trial: its side
  // decides which single walk is needed, and the previous point of that walk
  // is the opposite end.
  DiscrepancyResult run() {
    const double a0 = cfg_.a_init;
    const Trial& first = trial(a0);
    if (first.side == TrialSide::Accept) return finish(first, DiscrepancyStatus::Converged, {});
    double low = 0.0;
    double up = 0.0;
    if (first.side == TrialSide::Above) {
      auto outcome = walk_down(0.5 * a0);
      if (auto* done = std::get_if<DiscrepancyResult>(&outcome)) return std::move(*done);
      low = std::get<BracketBound>(outcome).alpha;
      up = 2.0 * low;
    } else {
      auto outcome = walk_up(2.0 * a0);
      if (auto* done = std::get_if<DiscrepancyResult>(&outcome)) return std::move(*done);
      up = std::get<BracketBound>(outcome).alpha;
      low = 0.5 * up;
    }
    return bisect(low, up);
  }

 private:
  const Operator& op_;
  const Vector& f_delta_;
  double delta_;
  DiscrepancyConfig cfg_;
  IterationConfig inner_;
  TrialCache cache_;
  std::vector<Trial> trials_;
  long total_iters_ = 0;
};

void audit(const Operator& op, const DiscrepancyConfig& cfg, const IterationConfig& solver_cfg) {
  if (!cfg.audit_monotonicity) return;
  const MonotonicityReport report =
      check_monotonicity(op, cfg.audit_pairs, solver_cfg.R, solver_cfg.seed);
  if (!report.monotone()) {
    std::ostringstream msg;
    msg << "sampled <F(u)-F(v), u-v> / ||u-v||^2 = " << report.min_ratio;
    throw SolverError(SolverErrorKind::NotMonotone, msg.str());
  }
}

DiscrepancyResult zero_result(const Operator& op, const Vector& f_delta) {
  DiscrepancyResult r;
  r.alpha = std::numeric_limits<double>::infinity();
  r.v_delta = Vector::Zero(static_cast<Eigen::Index>(op.dim()));
  r.phi_value = (op(r.v_delta) - f_delta).norm();
  r.residual = r.phi_value;
  r.status = DiscrepancyStatus::ZeroWithinDiscrepancy;
  return r;
}

}  // namespace

BracketOutcome find_alpha_up(const Operator& op, const Vector& f_delta, double delta,
                             const DiscrepancyConfig& cfg, const IterationConfig& solver_cfg) {
  Search search(op, f_delta, delta, cfg, solver_cfg);
  return search.walk_up(cfg.a_init);
}

BracketOutcome find_alpha_low(const Operator& op, const Vector& f_delta, double delta,
                              const DiscrepancyConfig& cfg, const IterationConfig& solver_cfg) {
  Search search(op, f_delta, delta, cfg, solver_cfg);
  return search.walk_down(cfg.a_init);
}

DiscrepancyResult bisect_discrepancy(const Operator& op, const Vector& f_delta, double delta,
                                     const DiscrepancyConfig& cfg,
                                     const IterationConfig& solver_cfg, double alpha_low,
                                     double alpha_up) {
  if (!(alpha_low > 0.0) || !(alpha_up > 0.0)) {
    throw ConfigError("bisection bracket ends must be > 0");
  }
  Search search(op, f_delta, delta, cfg, solver_cfg);
  return search.bisect(alpha_low, alpha_up);
}

DiscrepancyResult solve_discrepancy(const Operator& op, const Vector& f_delta, double delta,
                                    const DiscrepancyConfig& cfg,
                                    const IterationConfig& solver_cfg) {
  if (precondition_check(op, f_delta, delta, cfg) == Precondition::ZeroWithinDiscrepancy) {
    return zero_result(op, f_delta);
  }
  audit(op, cfg, solver_cfg);
  Search search(op, f_delta, delta, cfg, solver_cfg);
  return search.run();
}

DiscrepancyResult solve_discrepancy_shifted(const Operator& op, const Vector& f_delta,
                                            double delta, const Vector& u_bar,
                                            const DiscrepancyConfig& cfg,
                                            const IterationConfig& solver_cfg) {
  const Operator moved = op.shifted(u_bar);
  DiscrepancyResult r = solve_discrepancy(moved, f_delta, delta, cfg, solver_cfg);
  r.v_delta += u_bar;
  for (Trial& t : r.trials) t.v += u_bar;
  return r;
}

bool satisfies_stopping_conditions(const Operator& op, const Vector& f_delta, double delta,
                                   const DiscrepancyConfig& cfg, const IterationConfig& solver_cfg,
                                   double alpha, const Vector& v, double slack) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) return false;
  const Vector fv = op(v);
  const double abs_slack = slack * (1.0 + f_delta.norm());
  const double residual = (fv + alpha * v - f_delta).norm();
  const double allowed = std::max(cfg.inner_theta(delta) * delta, solver_cfg.tol_min);
  if (residual > allowed + abs_slack) return false;
  const double phi = (fv - f_delta).norm();
  if (cfg.mode == DiscrepancyMode::Band) {
    return phi >= cfg.band_low(delta) - abs_slack && phi <= cfg.band_high(delta) + abs_slack;
  }
  return std::abs(phi - cfg.target(delta)) <= cfg.exact_tol + abs_slack;
}

}  // namespace monoreg
