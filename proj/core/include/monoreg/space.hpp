#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>

#include <Eigen/Dense>

namespace monoreg {

/// Element of the finite-dimensional real inner-product space.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Euclidean inner product. Throws DimensionMismatch when sizes differ.
double inner(const Vector& u, const Vector& v);
double norm(const Vector& u);

bool all_finite(const Vector& u);

/// Throws DimensionMismatch unless `u` has `dim` components.
void require_dim(const Vector& u, std::size_t dim, const char* what);

enum class Linearity {
  Nonlinear,
  /// F(u) = A u + b with A linear; F(u) - F(0) is linear.
  Affine,
  Linear,
};

/// A continuous operator F on R^dim, assumed monotone:
///   <F(u) - F(v), u - v> >= 0  for all u, v.
///
/// The evaluation callback must be reentrant. Copies share the callback state,
/// which must be immutable.
///
/// An optional local Lipschitz bound L(R) may be attached: for u, v in the
/// closed ball of radius R about center(), ||F(u) - F(v)|| <= L(R) ||u - v||.
class Operator {
 public:
  using EvalFn = std::function<Vector(const Vector&)>;
  using LipschitzFn = std::function<double(double)>;

  Operator(std::size_t dim, EvalFn eval, Linearity linearity = Linearity::Nonlinear,
           LipschitzFn lipschitz = {}, std::optional<Vector> center = std::nullopt);

  static Operator identity(std::size_t dim);
  static Operator diagonal(const Vector& entries);
  /// Dense linear operator. The Lipschitz bound is the spectral norm.
  static Operator matrix(const Matrix& m);

  Vector operator()(const Vector& u) const;

  std::size_t dim() const noexcept { return dim_; }
  Linearity linearity() const noexcept { return linearity_; }
  bool is_linear() const noexcept { return linearity_ == Linearity::Linear; }
  /// True for linear and affine operators.
  bool is_affine() const noexcept { return linearity_ != Linearity::Nonlinear; }

  bool has_lipschitz_bound() const noexcept { return static_cast<bool>(lipschitz_); }
  double lipschitz_bound(double radius) const;
  const Vector& center() const noexcept { return center_; }

  /// u -> F(u + shift). Monotone whenever F is.
  Operator shifted(const Vector& shift) const;

 private:
  std::size_t dim_;
  EvalFn eval_;
  Linearity linearity_;
  LipschitzFn lipschitz_;
  Vector center_;
};

/// Operator, data and noise level for one instance of F(u) = f.
struct NoisyProblem {
  Operator op;
  std::optional<Vector> f;
  Vector f_delta;
  double delta = 0.0;
  /// Known minimal-norm solution, when available.
  std::optional<Vector> y;

  /// Checks ||f - f_delta|| <= delta and F(y) = f. Throws ConfigError.
  void validate() const;
};

/// f + delta * e, with e a unit vector drawn from a normalized Gaussian
/// seeded by `seed`. Bit-identical for identical arguments.
Vector make_noisy(const Vector& f, double delta, std::uint64_t seed);

/// Uniform sample from the closed ball of `radius` about `center`.
/// Exposed for audits that need the same sampling as check_monotonicity.
template <class Rng>
Vector sample_in_ball(Rng& rng, const Vector& center, double radius);

struct MonotonicityReport {
  /// min over sampled pairs of <F(u)-F(v), u-v> / ||u-v||^2
  double min_ratio = 0.0;
  std::optional<std::pair<Vector, Vector>> witness;
  int pairs = 0;

  bool monotone() const noexcept { return !witness.has_value(); }
};

inline constexpr double kMonotonicityTolerance = 1e-10;

/// Samples pairs uniformly in the ball of `radius` about F.center(). A witness
/// pair is reported when min_ratio < -kMonotonicityTolerance.
MonotonicityReport check_monotonicity(const Operator& op, int n_pairs, double radius,
                                      std::uint64_t seed);

/// Largest ||F(u)-F(v)|| / ||u-v|| over pairs sampled in B(center, radius).
/// Used both to audit a stated Lipschitz bound and to estimate an unknown one.
double max_difference_quotient(const Operator& op, const Vector& center, double radius,
                               int n_pairs, std::uint64_t seed);

}  // namespace monoreg

#include "monoreg/detail/sampling.hpp"
