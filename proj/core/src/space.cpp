#include "monoreg/space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include "monoreg/errors.hpp"

namespace monoreg {

double inner(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) {
    throw DimensionMismatch("inner", static_cast<std::size_t>(u.size()),
                            static_cast<std::size_t>(v.size()));
  }
  return u.dot(v);
}

double norm(const Vector& u) { return std::sqrt(inner(u, u)); }

bool all_finite(const Vector& u) { return u.allFinite(); }

void require_dim(const Vector& u, std::size_t dim, const char* what) {
  if (static_cast<std::size_t>(u.size()) != dim) {
    throw DimensionMismatch(what, dim, static_cast<std::size_t>(u.size()));
  }
}

Operator::Operator(std::size_t dim, EvalFn eval, Linearity linearity, LipschitzFn lipschitz,
                   std::optional<Vector> center)
    : dim_(dim),
      eval_(std::move(eval)),
      linearity_(linearity),
      lipschitz_(std::move(lipschitz)),
      center_(center ? std::move(*center) : Vector::Zero(static_cast<Eigen::Index>(dim))) {
  if (dim_ == 0) throw ConfigError("operator dimension must be >= 1");
  if (!eval_) throw ConfigError("operator requires an evaluation callback");
  require_dim(center_, dim_, "operator center");
}

Operator Operator::identity(std::size_t dim) {
  return Operator(
      dim, [](const Vector& u) { return Vector(u); }, Linearity::Linear,
      [](double) { return 1.0; });
}

Operator Operator::diagonal(const Vector& entries) {
  auto d = std::make_shared<const Vector>(entries);
  const double lip = entries.size() > 0 ? entries.cwiseAbs().maxCoeff() : 0.0;
  return Operator(
      static_cast<std::size_t>(entries.size()),
      [d](const Vector& u) -> Vector { return d->cwiseProduct(u); }, Linearity::Linear,
      [lip](double) { return lip; });
}

Operator Operator::matrix(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("Operator::matrix (square)", static_cast<std::size_t>(m.rows()),
                            static_cast<std::size_t>(m.cols()));
  }
  auto a = std::make_shared<const Matrix>(m);
  double lip = 0.0;
  if (m.size() > 0) {
    Eigen::JacobiSVD<Matrix> svd(m);
    lip = svd.singularValues()(0);
  }
  return Operator(
      static_cast<std::size_t>(m.rows()), [a](const Vector& u) -> Vector { return (*a) * u; },
      Linearity::Linear, [lip](double) { return lip; });
}

Vector Operator::operator()(const Vector& u) const {
  require_dim(u, dim_, "operator argument");
  Vector out = eval_(u);
  require_dim(out, dim_, "operator result");
  return out;
}

double Operator::lipschitz_bound(double radius) const {
  if (!lipschitz_) throw ConfigError("operator has no Lipschitz bound");
  if (!(radius > 0.0)) throw ConfigError("Lipschitz radius must be > 0");
  return lipschitz_(radius);
}

Operator Operator::shifted(const Vector& shift) const {
  require_dim(shift, dim_, "shift");
  auto base = std::make_shared<const Operator>(*this);
  auto s = std::make_shared<const Vector>(shift);
  LipschitzFn lip;
  if (lipschitz_) {
    // B(0, R) for the shifted map is B(shift, R) for the base, which lies in
    // B(center, R + ||shift - center||).
    const double offset = (shift - center_).norm();
    lip = [base, offset](double r) { return base->lipschitz_bound(r + offset); };
  }
  const Linearity lin =
      (linearity_ == Linearity::Linear && shift.isZero(0.0)) ? Linearity::Linear
      : linearity_ == Linearity::Nonlinear                   ? Linearity::Nonlinear
                                                             : Linearity::Affine;
  return Operator(
      dim_, [base, s](const Vector& u) -> Vector { return (*base)(u + *s); }, lin,
      std::move(lip));
}

void NoisyProblem::validate() const {
  require_dim(f_delta, op.dim(), "f_delta");
  if (!(delta >= 0.0)) throw ConfigError("noise level delta must be >= 0");
  if (!all_finite(f_delta)) throw ConfigError("f_delta has non-finite components");
  if (f) {
    require_dim(*f, op.dim(), "f");
    const double gap = (*f - f_delta).norm();
    if (gap > delta * (1.0 + 1e-12) + 1e-300) {
      std::ostringstream msg;
      msg << "||f - f_delta|| = " << gap << " exceeds delta = " << delta;
      throw ConfigError(msg.str());
    }
  }
  if (y && f) {
    require_dim(*y, op.dim(), "y");
    const double res = (op(*y) - *f).norm();
    if (res > 1e-10 * (1.0 + f->norm())) {
      std::ostringstream msg;
      msg << "||F(y) - f|| = " << res << " exceeds 1e-10 (1 + ||f||)";
      throw ConfigError(msg.str());
    }
  }
}

Vector make_noisy(const Vector& f, double delta, std::uint64_t seed) {
  if (!(delta >= 0.0)) throw ConfigError("noise level delta must be >= 0");
  if (delta == 0.0) return f;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector e(f.size());
  double len = 0.0;
  do {
    for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = gauss(rng);
    len = e.norm();
  } while (len == 0.0);
  return f + (delta / len) * e;
}

MonotonicityReport check_monotonicity(const Operator& op, int n_pairs, double radius,
                                      std::uint64_t seed) {
  if (n_pairs < 1) throw ConfigError("check_monotonicity needs n_pairs >= 1");
  if (!(radius > 0.0)) throw ConfigError("check_monotonicity needs radius > 0");
  std::mt19937_64 rng(seed);
  MonotonicityReport report;
  report.min_ratio = std::numeric_limits<double>::infinity();
  std::optional<std::pair<Vector, Vector>> worst;
  for (int k = 0; k < n_pairs; ++k) {
    Vector u = sample_in_ball(rng, op.center(), radius);
    Vector v = sample_in_ball(rng, op.center(), radius);
    const Vector d = u - v;
    const double dd = d.squaredNorm();
    if (dd == 0.0) continue;
    const double ratio = (op(u) - op(v)).dot(d) / dd;
    ++report.pairs;
    if (ratio < report.min_ratio) {
      report.min_ratio = ratio;
      worst.emplace(std::move(u), std::move(v));
    }
  }
  if (report.min_ratio < -kMonotonicityTolerance) report.witness = std::move(worst);
  return report;
}

double max_difference_quotient(const Operator& op, const Vector& center, double radius,
                               int n_pairs, std::uint64_t seed) {
  require_dim(center, op.dim(), "sampling center");
  if (n_pairs < 1) throw ConfigError("max_difference_quotient needs n_pairs >= 1");
  if (!(radius > 0.0)) throw ConfigError("max_difference_quotient needs radius > 0");
  std::mt19937_64 rng(seed);
  double best = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    const Vector u = sample_in_ball(rng, center, radius);
    const Vector v = sample_in_ball(rng, center, radius);
    const double du = (u - v).norm();
    if (du == 0.0) continue;
    best = std::max(best, (op(u) - op(v)).norm() / du);
  }
  return best;
}

}  // namespace monoreg
