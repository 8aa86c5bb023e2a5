#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "monoreg/space.hpp"

namespace monoreg {

/// A monotone test problem F(u) = f with exact data, its minimal-norm
/// solution y, and an independent solver for F(V) + aV = g.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string kind() const = 0;

  const Operator& op() const noexcept { return op_; }
  const Vector& f() const noexcept { return f_; }
  /// Empty after hide_solution().
  const std::optional<Vector>& y() const noexcept { return y_; }
  std::size_t dim() const noexcept { return op_.dim(); }

  /// Exact (closed-form or direct) solution of F(V) + aV = g, independent of
  /// the production solvers.
  virtual Vector oracle_solution(double a, const Vector& g) const = 0;

  /// f_delta = make_noisy(f, delta, seed), bundled.
  virtual NoisyProblem noisy(double delta, std::uint64_t seed) const;

  /// Pretend y is unknown, as with measured data.
  void hide_solution() { y_.reset(); }

 protected:
  Problem(Operator op, Vector f, std::optional<Vector> y)
      : op_(std::move(op)), f_(std::move(f)), y_(std::move(y)) {}

 private:
  Operator op_;
  Vector f_;
  std::optional<Vector> y_;
};

/// F = diag(eigenvalues), eigenvalues >= 0.
class DiagonalProblem final : public Problem {
 public:
  /// Components of y on zero eigenvalues are dropped so that y is the
  /// minimal-norm solution.
  DiagonalProblem(const Vector& eigenvalues, const Vector& y);

  std::string kind() const override { return "diagonal"; }
  Vector oracle_solution(double a, const Vector& g) const override;
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }

 private:
  Vector eigenvalues_;
};

/// Midpoint quadrature of the kernel min(s, t) on [0, 1]:
/// K_ij = min(s_i, s_j) / n with s_i = (i - 1/2) / n.
class FredholmProblem final : public Problem {
 public:
  FredholmProblem(std::size_t n, const std::function<double(double)>& source);

  std::string kind() const override { return "fredholm"; }
  Vector oracle_solution(double a, const Vector& g) const override;
  const Matrix& matrix() const noexcept { return *kernel_; }
  /// Quadrature nodes s_i.
  const Vector& nodes() const noexcept { return nodes_; }

 private:
  FredholmProblem(std::shared_ptr<const Matrix> kernel, Vector nodes, const Vector& y);

  std::shared_ptr<const Matrix> kernel_;
  Vector nodes_;
};

/// F(u) = A u + u^3 (componentwise cube), A symmetric PSD.
/// Locally Lipschitz with L(R) = ||A|| + 3 R^2 on B(0, R).
class CubicProblem final : public Problem {
 public:
  CubicProblem(const Matrix& a, const Vector& y);

  std::string kind() const override { return "cubic"; }
  /// Damped Newton on the full system; the Jacobian A + aI + 3 diag(u^2) is SPD.
  Vector oracle_solution(double a, const Vector& g) const override;
  const Matrix& matrix() const noexcept { return *a_; }
  double matrix_norm() const noexcept { return a_norm_; }

 private:
  CubicProblem(std::shared_ptr<const Matrix> a, double a_norm, const Vector& y);

  std::shared_ptr<const Matrix> a_;
  double a_norm_;
};

/// F(u) = <u, p> p with p = e1, q = e2 orthonormal, f = p, and noisy data
/// f_delta = p + delta q (the noise sits entirely in the null space).
/// V_{delta,a} = (delta / a) q + p / (1 + a).
class RankOneProblem final : public Problem {
 public:
  explicit RankOneProblem(std::size_t dim);

  std::string kind() const override { return "rank_one"; }
  Vector oracle_solution(double a, const Vector& g) const override;
  NoisyProblem noisy(double delta, std::uint64_t seed) const override;
  const Vector& p() const noexcept { return p_; }
  const Vector& q() const noexcept { return q_; }

 private:
  Vector p_;
  Vector q_;
};

/// Root of ||F(V_{delta,a}) - f_delta|| = C delta for this problem:
/// a = c delta / (1 - c delta), c = sqrt(C^2 - 1). Throws ConfigError unless
/// C > 1 and c delta < 1.
double oracle_alpha(const RankOneProblem& problem, double delta, double C);

struct PolyDecay {
  double p = 2.0;
};
struct ExpDecay {
  double r = 0.5;
};
/// lambda_i = i^-p  or  exp(-r (i - 1)), i = 1..n
using Decay = std::variant<PolyDecay, ExpDecay>;

enum class SourceShape {
  Ones,
  /// y_i = 1 / i
  Harmonic,
  /// y_i = sin(pi i / (n + 1)), scaled by the amplitude
  Sine,
};

/// Deterministic source vector of length n with the given shape and amplitude.
Vector make_source(SourceShape shape, std::size_t n, double amplitude = 1.0);

DiagonalProblem build_diagonal(std::size_t n, Decay decay, const Vector& y);
/// Default source y(t) = sin(pi t) sampled at the quadrature nodes.
FredholmProblem build_fredholm(std::size_t n,
                               const std::function<double(double)>& source = {});
/// A defaults to diag(1 / i).
CubicProblem build_cubic(std::size_t n, const std::optional<Matrix>& a, const Vector& y);
RankOneProblem build_rank_one(std::size_t dim);

/// ||F(V) - g|| with V the oracle solution at a.
double oracle_phi(const Problem& problem, double a, const Vector& g);

/// The a with oracle_phi(a) = target, by bisection in log a on
/// [a_min, a_max] down to relative width rel_tol. Throws ConfigError when
/// the target is not bracketed.
double oracle_discrepancy_root(const Problem& problem, const Vector& g, double target,
                               double rel_tol = 1e-12, double a_min = 1e-12,
                               double a_max = 1e8);

}  // namespace monoreg
