#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "monoreg/discrepancy.hpp"
#include "monoreg/errors.hpp"
#include "monoreg/problems.hpp"
#include "test_support.hpp"

namespace monoreg {
namespace {

using testing::kCubicRadius;
using testing::small_suite;
using testing::vec;

IterationConfig tight() {
  IterationConfig cfg;
  cfg.tol_min = 1e-12;
  cfg.R = kCubicRadius;
  return cfg;
}

// Band [0.17, 0.2] around 0.18 for delta = 0.01, gamma = 0.5.
DiscrepancyConfig narrow_band() {
  DiscrepancyConfig cfg;
  cfg.gamma = 0.5;
  cfg.C1 = 1.7;
  cfg.C = 1.8;
  cfg.C2 = 2.0;
  cfg.theta = 0.4;
  return cfg;
}

TEST(PhiPsi, IdentityClosedForm) {
  const Operator id = Operator::identity(2);
  for (double a : {0.01, 0.5, 1.0, 7.0}) {
    const PhiPsi r = phi_psi(id, vec({1, 0}), a, tight());
    EXPECT_NEAR(r.phi, a / (1.0 + a), 1e-12) << a;
    EXPECT_NEAR(r.psi, 1.0 / (1.0 + a), 1e-12) << a;
  }
  EXPECT_NEAR(phi_psi(id, vec({1, 0}), 1000.0, tight()).phi, 1000.0 / 1001.0, 1e-12);
}

TEST(PhiPsi, RankOneAtKnownRoot) {
  const RankOneProblem p = build_rank_one(2);
  const NoisyProblem np = p.noisy(0.01, 0);
  const PhiPsi r = phi_psi(np.op, np.f_delta, 1.0 / 99.0, tight());
  EXPECT_NEAR(r.phi, 0.01 * std::sqrt(2.0), 1e-12);
}

TEST(PhiPsi, MonotoneOnGrid) {
  for (const auto& problem : small_suite()) {
    const NoisyProblem np = problem->noisy(0.01, 2);
    const bool cubic = problem->kind() == "cubic";
    const std::vector<double> grid = cubic ? std::vector<double>{0.3, 0.6, 1, 2, 4, 10}
                                           : std::vector<double>{1e-3, 1e-2, 0.1, 0.3, 1, 3, 30};
    double prev_phi = -1.0;
    double prev_psi = std::numeric_limits<double>::infinity();
    for (double a : grid) {
      IterationConfig cfg = tight();
      cfg.tol_min = 1e-11;
      const PhiPsi r = phi_psi(np.op, np.f_delta, a, cfg);
      EXPECT_GT(r.phi, prev_phi) << problem->kind() << " a=" << a;
      EXPECT_LT(r.psi, prev_psi) << problem->kind() << " a=" << a;
      prev_phi = r.phi;
      prev_psi = r.psi;
    }
  }
}

TEST(PhiPsi, LargeALimitIsDataMisfitAtZero) {
  for (const auto& problem : small_suite()) {
    const NoisyProblem np = problem->noisy(0.01, 4);
    const Vector zero = Vector::Zero(static_cast<Eigen::Index>(problem->dim()));
    const double at_zero = (np.op(zero) - np.f_delta).norm();
    const PhiPsi r = phi_psi(np.op, np.f_delta, 1e6, tight());
    EXPECT_NEAR(r.phi, at_zero, 1e-5 * at_zero) << problem->kind();
    EXPECT_LT(r.psi, 1e-5) << problem->kind();
  }
}

TEST(PhiPsi, NormBoundedBySolutionPlusNoiseOverA) {
  // ||V|| <= ||y|| + delta / a for monotone F with F(y) = f.
  for (const auto& problem : small_suite()) {
    for (double delta : {1e-1, 1e-3}) {
      const NoisyProblem np = problem->noisy(delta, 9);
      const double yn = problem->y()->norm();
      for (double a : {0.3, 1.0, 10.0}) {
        const PhiPsi r = phi_psi(np.op, np.f_delta, a, tight());
        EXPECT_LE(r.psi, yn + delta / a + 1e-10) << problem->kind() << " a=" << a;
      }
    }
  }
}

TEST(Precondition, Examples) {
  const Operator id = Operator::identity(2);
  DiscrepancyConfig cfg;  // target 1.5 * 0.1^0.9 = 0.1888...
  EXPECT_EQ(precondition_check(id, vec({1, 0}), 0.1, cfg), Precondition::Proceed);
  EXPECT_EQ(precondition_check(id, vec({0.1, 0}), 0.1, cfg), Precondition::ZeroWithinDiscrepancy);

  DiscrepancyConfig near_one;
  near_one.gamma = 1.0;
  near_one.C = 1.01;
  near_one.C1 = 0.5;
  near_one.C2 = 2.0;
  near_one.theta = 0.1;
  EXPECT_NO_THROW(precondition_check(id, vec({1, 0}), 0.9, near_one));
}

TEST(DiscrepancyConfig, ValidationNamesFailedInequality) {
  DiscrepancyConfig cfg;
  EXPECT_NO_THROW(cfg.validate(0.01));
  EXPECT_THROW(cfg.validate(0.0), ConfigError);

  DiscrepancyConfig bad = cfg;
  bad.gamma = 1.5;
  EXPECT_THROW(bad.validate(0.01), ConfigError);

  bad = cfg;
  bad.C1 = 1.6;
  EXPECT_THROW(bad.validate(0.01), ConfigError);

  bad = cfg;
  bad.gamma = 1.0;
  bad.C = 0.9;
  bad.C1 = 0.5;
  try {
    bad.validate(0.01);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("C d^g > d"), std::string::npos);
  }

  // C1 d^g + theta d >= C d^g: 0.1 + 0.1 * 0.4 > 0.12 at delta = 0.1, gamma = 1.
  bad = cfg;
  bad.gamma = 1.0;
  bad.C = 1.2;
  try {
    bad.validate(0.1);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("C1 d^g + theta d < C d^g"), std::string::npos);
  }
}

TEST(DiscrepancyConfig, ExactModeTightensInnerTheta) {
  DiscrepancyConfig cfg;
  EXPECT_EQ(cfg.inner_theta(0.01), 0.4);
  cfg.mode = DiscrepancyMode::Exact;
  EXPECT_DOUBLE_EQ(cfg.inner_theta(0.01), 5e-7);
}

TEST(FindAlphaUp, DoublesUntilAboveBand) {
  DiscrepancyConfig cfg = narrow_band();
  cfg.a_init = 0.1;  // phi: 0.0909, 0.1667, 0.2857
  const auto out = find_alpha_up(Operator::identity(2), vec({1, 0}), 0.01, cfg, tight());
  ASSERT_TRUE(std::holds_alternative<BracketBound>(out));
  EXPECT_DOUBLE_EQ(std::get<BracketBound>(out).alpha, 0.4);
}

TEST(FindAlphaUp, AcceptsEarlyInsideBand) {
  DiscrepancyConfig cfg = narrow_band();
  cfg.C1 = 1.0;
  cfg.a_init = 0.1;
  const auto out = find_alpha_up(Operator::identity(2), vec({1, 0}), 0.01, cfg, tight());
  ASSERT_TRUE(std::holds_alternative<DiscrepancyResult>(out));
  const auto& r = std::get<DiscrepancyResult>(out);
  EXPECT_DOUBLE_EQ(r.alpha, 0.2);
  EXPECT_EQ(r.status, DiscrepancyStatus::Converged);
  EXPECT_NEAR(r.phi_value, 0.2 / 1.2, 1e-12);
}

TEST(FindAlphaUp, ImmediateWhenStartIsAbove) {
  DiscrepancyConfig cfg = narrow_band();
  cfg.a_init = 1.0;
  const auto out = find_alpha_up(Operator::identity(2), vec({1, 0}), 0.01, cfg, tight());
  ASSERT_TRUE(std::holds_alternative<BracketBound>(out));
  EXPECT_DOUBLE_EQ(std::get<BracketBound>(out).alpha, 1.0);
}

TEST(FindAlphaLow, HalvesUntilBelowBand) {
  DiscrepancyConfig cfg = narrow_band();
  cfg.a_init = 0.05;
  auto out = find_alpha_low(Operator::identity(2), vec({1, 0}), 0.01, cfg, tight());
  ASSERT_TRUE(std::holds_alternative<BracketBound>(out));
  EXPECT_DOUBLE_EQ(std::get<BracketBound>(out).alpha, 0.05);

  cfg.a_init = 0.4;
  out = find_alpha_low(Operator::identity(2), vec({1, 0}), 0.01, cfg, tight());
  ASSERT_TRUE(std::holds_alternative<BracketBound>(out));
  EXPECT_DOUBLE_EQ(std::get<BracketBound>(out).alpha, 0.2);

  cfg.C1 = 1.0;
  out = find_alpha_low(Operator::identity(2), vec({1, 0}), 0.01, cfg, tight());
  ASSERT_TRUE(std::holds_alternative<DiscrepancyResult>(out));
  EXPECT_DOUBLE_EQ(std::get<DiscrepancyResult>(out).alpha, 0.2);
}

TEST(FindAlphaLow, NeedsLowerLevelAboveNoise) {
  DiscrepancyConfig cfg;
  cfg.gamma = 1.0;
  cfg.C1 = 0.5;
  cfg.C = 1.5;
  cfg.C2 = 2.0;
  cfg.theta = 0.1;
  EXPECT_THROW(find_alpha_low(Operator::identity(2), vec({1, 0}), 0.01, cfg, tight()),
               ConfigError);
}

TEST(FindAlphaUp, GivesUpAfterMaxSteps) {
  DiscrepancyConfig cfg = narrow_band();
  cfg.a_init = 1e-6;
  cfg.max_bracket_steps = 3;
  try {
    find_alpha_up(Operator::identity(2), vec({1, 0}), 0.01, cfg, tight());
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverErrorKind::MaxBracketSteps);
  }
}

TEST(Bisect, FirstMidpointAccepted) {
  const DiscrepancyResult r = bisect_discrepancy(Operator::identity(2), vec({1, 0}), 0.01,
                                                 narrow_band(), tight(), 0.05, 0.4);
  EXPECT_EQ(r.status, DiscrepancyStatus::Converged);
  EXPECT_DOUBLE_EQ(r.alpha, 0.225);
  EXPECT_NEAR(r.phi_value, 0.225 / 1.225, 1e-12);
  EXPECT_LE((r.v_delta - vec({1.0 / 1.225, 0})).norm(), 1e-12);
  ASSERT_TRUE(r.bracket.has_value());
  EXPECT_EQ(r.bracket->low, 0.05);
  EXPECT_EQ(r.bracket->up, 0.4);
  EXPECT_EQ(r.trials.size(), 1u);
}

TEST(Bisect, DegenerateBracketWarns) {
  const DiscrepancyResult r = bisect_discrepancy(Operator::identity(2), vec({1, 0}), 0.01,
                                                 narrow_band(), tight(), 0.1, 0.1);
  EXPECT_EQ(r.status, DiscrepancyStatus::NarrowIntervalWarning);
  EXPECT_EQ(r.alpha, 0.1);
}

TEST(Bisect, CollapsingBracketWarnsWithClosestTrial) {
  DiscrepancyConfig cfg = narrow_band();
  cfg.eps = 0.1;  // one bisection step on [0.05, 0.15] is enough to collapse
  cfg.C1 = 1.79;
  cfg.C2 = 1.81;
  cfg.theta = 0.01;
  const DiscrepancyResult r =
      bisect_discrepancy(Operator::identity(2), vec({1, 0}), 0.01, cfg, tight(), 0.05, 0.15);
  EXPECT_EQ(r.status, DiscrepancyStatus::NarrowIntervalWarning);
  EXPECT_DOUBLE_EQ(r.alpha, 0.1);
}

TEST(Bisect, RejectsNonPositiveEnds) {
  EXPECT_THROW(bisect_discrepancy(Operator::identity(2), vec({1, 0}), 0.01, narrow_band(),
                                  tight(), 0.0, 1.0),
               ConfigError);
}

TEST(SolveDiscrepancy, IdentityConverges) {
  const DiscrepancyResult r =
      solve_discrepancy(Operator::identity(2), vec({1, 0}), 0.1, DiscrepancyConfig{}, tight());
  EXPECT_EQ(r.status, DiscrepancyStatus::Converged);
  const double dg = std::pow(0.1, 0.9);
  EXPECT_GE(r.phi_value, dg);
  EXPECT_LE(r.phi_value, 2.0 * dg);
  EXPECT_NEAR(r.phi_value, r.alpha / (1.0 + r.alpha), 1e-12);
}

TEST(SolveDiscrepancy, ZeroWhenDataWithinDiscrepancy) {
  const DiscrepancyResult r =
      solve_discrepancy(Operator::identity(2), vec({0.1, 0}), 0.1, DiscrepancyConfig{}, tight());
  EXPECT_EQ(r.status, DiscrepancyStatus::ZeroWithinDiscrepancy);
  EXPECT_TRUE(std::isinf(r.alpha));
  EXPECT_EQ(r.v_delta, vec({0, 0}));
  EXPECT_NEAR(r.phi_value, 0.1, 1e-16);
  EXPECT_TRUE(r.trials.empty());
}

TEST(SolveDiscrepancy, ExactModeRankOneMatchesClosedForm) {
  const RankOneProblem p = build_rank_one(2);
  DiscrepancyConfig cfg;
  cfg.mode = DiscrepancyMode::Exact;
  cfg.gamma = 1.0;
  cfg.C = std::sqrt(2.0);
  cfg.eps = 1e-12;
  for (double delta : {1e-2, 1e-3}) {
    const NoisyProblem np = p.noisy(delta, 0);
    const DiscrepancyResult r = solve_discrepancy(np.op, np.f_delta, delta, cfg, tight());
    const double expected = oracle_alpha(p, delta, cfg.C);
    EXPECT_EQ(r.status, DiscrepancyStatus::Converged);
    // dphi/da is about 0.69 at the root, so exact_tol in phi is 1.5 exact_tol in a.
    EXPECT_NEAR(r.alpha, expected, 2.0 * cfg.exact_tol) << delta;
    EXPECT_NEAR(r.phi_value, cfg.C * delta, cfg.exact_tol + 1e-15) << delta;
  }
  EXPECT_NEAR(oracle_alpha(p, 1e-2, cfg.C), 0.010101010101010102, 1e-17);
}

TEST(SolveDiscrepancy, ExactModeNeedsSmallTolMin) {
  DiscrepancyConfig cfg;
  cfg.mode = DiscrepancyMode::Exact;
  IterationConfig loose = tight();
  loose.tol_min = 1e-6;
  EXPECT_THROW(solve_discrepancy(Operator::identity(2), vec({1, 0}), 0.01, cfg, loose),
               ConfigError);
}

TEST(SolveDiscrepancy, AuditRejectsNonMonotoneOperator) {
  const Operator neg(
      2, [](const Vector& u) -> Vector { return -u; }, Linearity::Linear,
      [](double) { return 1.0; });
  try {
    solve_discrepancy(neg, vec({1, 0}), 0.01, DiscrepancyConfig{}, tight());
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverErrorKind::NotMonotone);
  }
}

TEST(SolveDiscrepancy, ErrorDecreasesWithNoise) {
  const DiagonalProblem p(vec({1, 0.5, 0.25}), vec({1, 1, 1}));
  double prev = std::numeric_limits<double>::infinity();
  for (double delta : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const NoisyProblem np = p.noisy(delta, 0);
    const DiscrepancyResult r =
        solve_discrepancy(np.op, np.f_delta, delta, DiscrepancyConfig{}, tight());
    const double err = (r.v_delta - *p.y()).norm();
    EXPECT_LT(err, prev) << delta;
    prev = err;
  }
}

TEST(SolveDiscrepancy, BracketTrialsLieOnCorrectSideOfRoot) {
  for (const auto& problem : small_suite()) {
    if (problem->kind() == "cubic") continue;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const double delta = 1e-3;
      const NoisyProblem np = problem->noisy(delta, seed);
      DiscrepancyConfig cfg;
      const DiscrepancyResult r = solve_discrepancy(np.op, np.f_delta, delta, cfg, tight());
      const double low_root = oracle_discrepancy_root(*problem, np.f_delta, cfg.band_low(delta));
      const double high_root =
          oracle_discrepancy_root(*problem, np.f_delta, cfg.band_high(delta));
      for (const Trial& t : r.trials) {
        if (t.side == TrialSide::Below) EXPECT_LT(t.a, high_root) << problem->kind();
        if (t.side == TrialSide::Above) EXPECT_GT(t.a, low_root) << problem->kind();
      }
    }
  }
}

TEST(SolveDiscrepancy, TrialsCloseToExactRegularizedSolution) {
  for (const auto& problem : small_suite()) {
    const double delta = problem->kind() == "cubic" ? 0.05 : 1e-3;
    const NoisyProblem np = problem->noisy(delta, 5);
    DiscrepancyConfig cfg;
    const DiscrepancyResult r = solve_discrepancy(np.op, np.f_delta, delta, cfg, tight());
    ASSERT_FALSE(r.trials.empty());
    for (const Trial& t : r.trials) {
      EXPECT_LE(t.residual, cfg.theta * delta * (1.0 + 1e-9)) << problem->kind();
      const Vector exact = problem->oracle_solution(t.a, np.f_delta);
      EXPECT_LE((t.v - exact).norm(), t.residual / t.a * (1.0 + 1e-6) + 1e-12)
          << problem->kind() << " a=" << t.a;
      // |approximate discrepancy - exact discrepancy| <= theta delta
      const double exact_phi = (np.op(exact) - np.f_delta).norm();
      EXPECT_LE(std::abs(t.phi - exact_phi), cfg.theta * delta * (1.0 + 1e-9) + 1e-12)
          << problem->kind() << " a=" << t.a;
    }
  }
}

TEST(SolveDiscrepancy, ConvergedResultsPassIndependentRecheck) {
  for (const auto& problem : small_suite()) {
    const bool cubic = problem->kind() == "cubic";
    const std::vector<double> deltas = cubic ? std::vector<double>{0.05}
                                             : std::vector<double>{1e-1, 1e-2, 1e-3};
    for (double delta : deltas) {
      for (std::uint64_t seed = 0; seed < (cubic ? 1u : 4u); ++seed) {
        const NoisyProblem np = problem->noisy(delta, seed);
        DiscrepancyConfig cfg;
        const IterationConfig solver = tight();
        const DiscrepancyResult r = solve_discrepancy(np.op, np.f_delta, delta, cfg, solver);
        if (r.status != DiscrepancyStatus::Converged) continue;
        EXPECT_TRUE(satisfies_stopping_conditions(np.op, np.f_delta, delta, cfg, solver, r.alpha,
                                                  r.v_delta))
            << problem->kind() << " delta=" << delta << " seed=" << seed;
        long sum = 0;
        for (const Trial& t : r.trials) sum += t.inner_iters;
        EXPECT_LE(r.total_inner_iters, sum);
      }
    }
  }
}

TEST(SatisfiesStoppingConditions, RejectsPerturbedSolution) {
  const DiscrepancyResult r =
      solve_discrepancy(Operator::identity(2), vec({1, 0}), 0.1, DiscrepancyConfig{}, tight());
  const DiscrepancyConfig cfg;
  EXPECT_TRUE(satisfies_stopping_conditions(Operator::identity(2), vec({1, 0}), 0.1, cfg,
                                            tight(), r.alpha, r.v_delta));
  EXPECT_FALSE(satisfies_stopping_conditions(Operator::identity(2), vec({1, 0}), 0.1, cfg,
                                             tight(), r.alpha, r.v_delta + vec({0.1, 0})));
  EXPECT_FALSE(satisfies_stopping_conditions(Operator::identity(2), vec({1, 0}), 0.1, cfg,
                                             tight(), std::numeric_limits<double>::infinity(),
                                             r.v_delta));
}

TEST(Shifted, ZeroShiftMatchesPlainPipeline) {
  const DiagonalProblem p = build_diagonal(10, PolyDecay{2.0}, make_source(SourceShape::Ones, 10));
  const NoisyProblem np = p.noisy(0.01, 1);
  const DiscrepancyConfig cfg;
  const DiscrepancyResult plain = solve_discrepancy(np.op, np.f_delta, 0.01, cfg, tight());
  const DiscrepancyResult moved = solve_discrepancy_shifted(
      np.op, np.f_delta, 0.01, Vector::Zero(10), cfg, tight());
  EXPECT_EQ(plain.alpha, moved.alpha);
  EXPECT_EQ(plain.v_delta, moved.v_delta);
  EXPECT_EQ(plain.trials.size(), moved.trials.size());
}

TEST(Shifted, IdentityClosedForm) {
  const Vector fd = vec({3, 0});
  const Vector ubar = vec({1, 0});
  const DiscrepancyResult r =
      solve_discrepancy_shifted(Operator::identity(2), fd, 0.1, ubar, DiscrepancyConfig{}, tight());
  ASSERT_EQ(r.status, DiscrepancyStatus::Converged);
  const Vector expected = (fd + r.alpha * ubar) / (1.0 + r.alpha);
  EXPECT_LE((r.v_delta - expected).norm(), 1e-12);
}

TEST(Shifted, RankOneSelectsSolutionNearShift) {
  // Solutions of <u, p> p = p are p + t q; the shifted limit keeps the q
  // component of u_bar plus the c^-1 bias of the rule.
  const RankOneProblem p = build_rank_one(2);
  DiscrepancyConfig cfg;
  cfg.mode = DiscrepancyMode::Exact;
  cfg.gamma = 1.0;
  cfg.C = std::sqrt(2.0);
  const Vector ubar = 0.5 * p.q();
  const Vector limit = p.p() + 1.5 * p.q();
  double prev = std::numeric_limits<double>::infinity();
  for (double delta : {1e-1, 1e-2, 1e-3}) {
    const NoisyProblem np = p.noisy(delta, 0);
    const DiscrepancyResult r =
        solve_discrepancy_shifted(np.op, np.f_delta, delta, ubar, cfg, tight());
    const double err = (r.v_delta - limit).norm();
    EXPECT_LT(err, prev) << delta;
    prev = err;
  }
  EXPECT_LT(prev, 2e-3);
}

TEST(TrialCache, NearestInLogScale) {
  TrialCache cache;
  EXPECT_FALSE(cache.nearest(1.0).has_value());
  Trial t;
  t.a = 0.01;
  t.v = vec({1});
  cache.insert(t);
  t.a = 1.0;
  t.v = vec({2});
  cache.insert(t);
  EXPECT_EQ(cache.size(), 2u);
  EXPECT_EQ((*cache.nearest(0.05))[0], 1.0);  // log distance 0.7 vs 1.3
  EXPECT_EQ((*cache.nearest(0.2))[0], 2.0);
  EXPECT_EQ((*cache.nearest(100.0))[0], 2.0);
  EXPECT_EQ((*cache.nearest(1e-5))[0], 1.0);
  EXPECT_TRUE(cache.find(1.0).has_value());
  EXPECT_FALSE(cache.find(0.5).has_value());
}

}  // namespace
}  // namespace monoreg
