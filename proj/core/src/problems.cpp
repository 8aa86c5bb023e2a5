#include "monoreg/problems.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <type_traits>

#include "monoreg/errors.hpp"

namespace monoreg {
namespace {

void require_positive_a(double a) {
  if (!(a > 0.0)) throw ConfigError("oracle needs a > 0");
}

Vector masked_solution(const Vector& eigenvalues, Vector y) {
  require_dim(y, static_cast<std::size_t>(eigenvalues.size()), "diagonal source y");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (eigenvalues[i] == 0.0) y[i] = 0.0;
  }
  return y;
}

Vector fredholm_nodes(std::size_t n) {
  if (n < 1) throw ConfigError("fredholm problem needs n >= 1");
  const auto m = static_cast<Eigen::Index>(n);
  Vector s(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    s[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  }
  return s;
}

std::shared_ptr<const Matrix> fredholm_kernel(const Vector& s) {
  const Eigen::Index m = s.size();
  auto k = std::make_shared<Matrix>(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      (*k)(i, j) = std::min(s[i], s[j]) / static_cast<double>(m);
    }
  }
  return k;
}

Vector sample(const std::function<double(double)>& source, const Vector& s) {
  Vector y(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    y[i] = source ? source(s[i]) : std::sin(std::numbers::pi * s[i]);
  }
  return y;
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

std::shared_ptr<const Matrix> checked_psd(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw ConfigError("cubic problem needs a square matrix A");
  }
  if (!a.isApprox(a.transpose(), 1e-14) && !(a - a.transpose()).isZero(1e-14)) {
    throw ConfigError("cubic problem needs a symmetric matrix A");
  }
  if (a.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff())) {
      throw ConfigError("cubic problem needs a positive semidefinite matrix A");
    }
  }
  return std::make_shared<const Matrix>(a);
}

Operator cubic_operator(const std::shared_ptr<const Matrix>& a, double a_norm) {
  return Operator(
      static_cast<std::size_t>(a->rows()),
      [a](const Vector& u) -> Vector { return (*a) * u + u.array().cube().matrix(); },
      Linearity::Nonlinear, [a_norm](double r) { return a_norm + 3.0 * r * r; });
}

Vector basis_vector(std::size_t dim, Eigen::Index k) {
  if (dim < 2) throw ConfigError("rank-one problem needs dim >= 2");
  return Vector::Unit(static_cast<Eigen::Index>(dim), k);
}

Operator rank_one_operator(std::size_t dim) {
  auto p = std::make_shared<const Vector>(basis_vector(dim, 0));
  return Operator(
      dim, [p](const Vector& u) -> Vector { return p->dot(u) * (*p); }, Linearity::Linear,
      [](double) { return 1.0; });
}

}  // namespace

NoisyProblem Problem::noisy(double delta, std::uint64_t seed) const {
  return NoisyProblem{op_, f_, make_noisy(f_, delta, seed), delta, y_};
}

DiagonalProblem::DiagonalProblem(const Vector& eigenvalues, const Vector& y)
    : Problem(Operator::diagonal(eigenvalues),
              eigenvalues.cwiseProduct(masked_solution(eigenvalues, y)),
              masked_solution(eigenvalues, y)),
      eigenvalues_(eigenvalues) {
  if ((eigenvalues.array() < 0.0).any() || !eigenvalues.allFinite()) {
    throw ConfigError("diagonal problem needs finite eigenvalues >= 0");
  }
}

Vector DiagonalProblem::oracle_solution(double a, const Vector& g) const {
  require_positive_a(a);
  require_dim(g, dim(), "oracle right-hand side");
  return (g.array() / (eigenvalues_.array() + a)).matrix();
}

FredholmProblem::FredholmProblem(std::size_t n, const std::function<double(double)>& source)
    : FredholmProblem(fredholm_kernel(fredholm_nodes(n)), fredholm_nodes(n),
                      sample(source, fredholm_nodes(n))) {}

FredholmProblem::FredholmProblem(std::shared_ptr<const Matrix> kernel, Vector nodes,
                                 const Vector& y)
    : Problem(Operator::matrix(*kernel), (*kernel) * y, y),
      kernel_(std::move(kernel)),
      nodes_(std::move(nodes)) {}

Vector FredholmProblem::oracle_solution(double a, const Vector& g) const {
  require_positive_a(a);
  require_dim(g, dim(), "oracle right-hand side");
  Matrix shifted = *kernel_;
  shifted.diagonal().array() += a;
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success) throw ConfigError("K + aI is not positive definite");
  return llt.solve(g);
}

CubicProblem::CubicProblem(const Matrix& a, const Vector& y)
    : CubicProblem(checked_psd(a), spectral_norm(a), y) {}

CubicProblem::CubicProblem(std::shared_ptr<const Matrix> a, double a_norm, const Vector& y)
    : Problem(cubic_operator(a, a_norm), cubic_operator(a, a_norm)(y), y),
      a_(std::move(a)),
      a_norm_(a_norm) {}

Vector CubicProblem::oracle_solution(double a, const Vector& g) const {
  require_positive_a(a);
  require_dim(g, dim(), "oracle right-hand side");
  const Matrix& A = *a_;
  const auto n = static_cast<Eigen::Index>(dim());

  // Newton on the gradient of the strictly convex energy
  //   E(u) = u^T A u / 2 + sum u_i^4 / 4 + a |u|^2 / 2 - g^T u,
  // with Armijo backtracking on E. Near the root E is flat to round-off, so a
  // step halving the gradient norm is accepted too.
  auto energy = [&](const Vector& u) {
    return 0.5 * u.dot(A * u) + 0.25 * u.array().pow(4).sum() + 0.5 * a * u.squaredNorm() -
           g.dot(u);
  };
  auto gradient = [&](const Vector& u) -> Vector {
    return A * u + u.array().cube().matrix() + a * u - g;
  };

  Vector u = Vector::Zero(n);
  const double goal = 1e-13 * (1.0 + g.norm());
  for (int it = 0; it < 200; ++it) {
    const Vector grad = gradient(u);
    if (grad.norm() <= goal) return u;
    Matrix jac = A;
    jac.diagonal().array() += a + 3.0 * u.array().square();
    Eigen::LLT<Matrix> llt(jac);
    const Vector step = llt.solve(-grad);
    const double e0 = energy(u);
    const double slope = grad.dot(step);
    const double g0 = grad.norm();
    auto accept = [&](double t) {
      const Vector trial = u + t * step;
      return energy(trial) <= e0 + 1e-4 * t * slope || gradient(trial).norm() < 0.5 * g0;
    };
    double t = 1.0;
    while (t > 1e-12 && !accept(t)) t *= 0.5;
    const Vector next = u + t * step;
    if (next == u) break;
    u = next;
  }
  if (gradient(u).norm() > 1e-10 * (1.0 + g.norm())) {
    throw ConfigError("cubic oracle failed to converge");
  }
  return u;
}

RankOneProblem::RankOneProblem(std::size_t dim)
    : Problem(rank_one_operator(dim), basis_vector(dim, 0), basis_vector(dim, 0)),
      p_(basis_vector(dim, 0)),
      q_(basis_vector(dim, 1)) {}

Vector RankOneProblem::oracle_solution(double a, const Vector& g) const {
  require_positive_a(a);
  require_dim(g, dim(), "oracle right-hand side");
  const double along = p_.dot(g);
  return (along / (1.0 + a)) * p_ + (g - along * p_) / a;
}

NoisyProblem RankOneProblem::noisy(double delta, std::uint64_t) const {
  if (!(delta >= 0.0)) throw ConfigError("noise level delta must be >= 0");
  return NoisyProblem{op(), f(), p_ + delta * q_, delta, y()};
}

double oracle_alpha(const RankOneProblem&, double delta, double C) {
  if (!(C > 1.0)) throw ConfigError("rank-one discrepancy root needs C > 1");
  if (!(delta > 0.0)) throw ConfigError("rank-one discrepancy root needs delta > 0");
  const double c = std::sqrt(C * C - 1.0);
  if (!(c * delta < 1.0)) throw ConfigError("rank-one discrepancy root needs c delta < 1");
  return c * delta / (1.0 - c * delta);
}

Vector make_source(SourceShape shape, std::size_t n, double amplitude) {
  if (n < 1) throw ConfigError("source needs n >= 1");
  const auto m = static_cast<Eigen::Index>(n);
  Vector y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double k = static_cast<double>(i + 1);
    switch (shape) {
      case SourceShape::Ones:
        y[i] = 1.0;
        break;
      case SourceShape::Harmonic:
        y[i] = 1.0 / k;
        break;
      case SourceShape::Sine:
        y[i] = std::sin(std::numbers::pi * k / static_cast<double>(n + 1));
        break;
    }
  }
  return amplitude * y;
}

DiagonalProblem build_diagonal(std::size_t n, Decay decay, const Vector& y) {
  if (n < 1) throw ConfigError("diagonal problem needs n >= 1");
  require_dim(y, n, "diagonal source y");
  const auto m = static_cast<Eigen::Index>(n);
  Vector lambda(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double k = static_cast<double>(i + 1);
    lambda[i] = std::visit(
        [k](const auto& d) -> double {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, PolyDecay>) {
            return std::pow(k, -d.p);
          } else {
            return std::exp(-d.r * (k - 1.0));
          }
        },
        decay);
  }
  return DiagonalProblem(lambda, y);
}

FredholmProblem build_fredholm(std::size_t n, const std::function<double(double)>& source) {
  return FredholmProblem(n, source);
}

CubicProblem build_cubic(std::size_t n, const std::optional<Matrix>& a, const Vector& y) {
  if (n < 1) throw ConfigError("cubic problem needs n >= 1");
  require_dim(y, n, "cubic source y");
  if (a) {
    if (static_cast<std::size_t>(a->rows()) != n) {
      throw DimensionMismatch("cubic matrix A", n, static_cast<std::size_t>(a->rows()));
    }
    return CubicProblem(*a, y);
  }
  const auto m = static_cast<Eigen::Index>(n);
  Matrix diag = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) diag(i, i) = 1.0 / static_cast<double>(i + 1);
  return CubicProblem(diag, y);
}

RankOneProblem build_rank_one(std::size_t dim) { return RankOneProblem(dim); }

double oracle_phi(const Problem& problem, double a, const Vector& g) {
  const Vector v = problem.oracle_solution(a, g);
  return (problem.op()(v) - g).norm();
}

double oracle_discrepancy_root(const Problem& problem, const Vector& g, double target,
                               double rel_tol, double a_min, double a_max) {
  if (!(a_min > 0.0 && a_min < a_max)) throw ConfigError("root search needs 0 < a_min < a_max");
  double lo = std::log(a_min);
  double hi = std::log(a_max);
  if (!(oracle_phi(problem, a_min, g) < target && oracle_phi(problem, a_max, g) > target)) {
    std::ostringstream msg;
    msg << "discrepancy target " << target << " not bracketed by [" << a_min << ", " << a_max
        << "]";
    throw ConfigError(msg.str());
  }
  const double width = std::log1p(rel_tol);
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    if (oracle_phi(problem, std::exp(mid), g) > target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return std::exp(0.5 * (lo + hi));
}

}  // namespace monoreg
