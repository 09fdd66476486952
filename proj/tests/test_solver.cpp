#include <gtest/gtest.h>

#include <cmath>

#include "regional/solver.hpp"

using namespace regional;

namespace {

const ProblemParams kParams(1, 0.4, 10, 3);

SolverConfig centred_seeds() {
  SolverConfig cfg;
  cfg.seeds = {{SeedKind::talenti, 1.0, 0.0}, {SeedKind::gaussian, 1.0, 0.0}};
  return cfg;
}

}  // namespace

TEST(Solver, ConstantScopeGroundState) {
  const GridSpec g(1, 8.0, 129);
  const auto scope = ScopeFunction::constant(1.0);
  const auto rep = solve_ground_state(kParams, scope, g, centred_seeds());
  ASSERT_TRUE(rep.converged);
  EXPECT_LE(rep.grad_norm, 1e-8);
  EXPECT_GT(rep.c_value, 0.0);
  EXPECT_EQ(rep.positivity_violation, 0.0);
  EXPECT_LE(rep.nehari_residual, 1e-8);
  EXPECT_EQ(rep.clamp_events, 0u);

  const auto S = estimate_sobolev_constant(kParams, g).S_est;
  EXPECT_LT(rep.c_value, critical_bound(kParams, S));

  // The ground state sits at the top of its own ray.
  const auto rm = ray_max_energy(rep.u_star, kParams, scope);
  EXPECT_NEAR(rm.value, rep.c_value, 1e-9 * rep.c_value);
  EXPECT_NEAR(rm.t_star, 1.0, 1e-6);

  for (std::size_t k = 1; k < rep.energy_trace.size(); ++k)
    EXPECT_LE(rep.energy_trace[k], rep.energy_trace[k - 1] + 1e-14 * std::abs(rep.energy_trace[k - 1]));
}

TEST(Solver, NehariLevelBelowOtherRays) {
  const GridSpec g(1, 8.0, 129);
  const auto scope = ScopeFunction::constant(1.0);
  const auto rep = solve_ground_state(kParams, scope, g, centred_seeds());
  for (double w : {0.5, 2.0, 3.0}) {
    const auto trial = talenti_extremal(kParams, g, 1.0, w);
    EXPECT_GE(ray_max_energy(trial, kParams, scope).value, rep.c_value);
  }
}

TEST(Solver, TranslationCovariance) {
  const GridSpec g(1, 8.0, 129);
  const auto scope = ScopeFunction::constant(1.0);
  const auto rep = solve_ground_state(kParams, scope, g, centred_seeds());
  // The decaying tail crosses the box edge after a shift, so agreement is
  // limited by the mass left outside.
  const auto shifted = shift_lattice(rep.u_star, {8, 0, 0});
  const auto e = energy(shifted, kParams, scope).total;
  EXPECT_NEAR(e, rep.c_value, 1e-3 * rep.c_value);
}

TEST(Solver, LimitProblemIsStableUnderRefinement) {
  const auto coarse = solve_limit_ground_state(kParams, GridSpec(1, 8.0, 129), centred_seeds());
  const auto fine = solve_limit_ground_state(kParams, GridSpec(1, 8.0, 257), centred_seeds());
  EXPECT_GT(coarse.c_value, 0.0);
  EXPECT_LT(std::abs(fine.c_value / coarse.c_value - 1.0), 0.05);
}

TEST(Solver, RegionalLevelBelowLimitLevel) {
  const GridSpec g(1, 8.0, 129);
  const auto reg = solve_ground_state(kParams, ScopeFunction::constant(2.0), g, centred_seeds());
  const auto full = solve_limit_ground_state(kParams, g, centred_seeds());
  EXPECT_LT(reg.c_value, full.c_value);
}

TEST(Solver, LambdaScan) {
  const GridSpec g(1, 8.0, 129);
  const auto scope = ScopeFunction::constant(1.0);
  const auto S = estimate_sobolev_constant(kParams, g).S_est;
  const std::vector<double> lambdas = {2.0, 5.0, 10.0, 20.0};
  const auto a = lambda_scan(kParams, lambdas, scope, g, centred_seeds(), S);
  const auto b = lambda_scan(kParams, lambdas, scope, g, centred_seeds(), S);
  ASSERT_EQ(a.rows.size(), lambdas.size());
  EXPECT_TRUE(a.monotone);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].c_value, b.rows[i].c_value);
  ASSERT_TRUE(a.lambda0.has_value());
  EXPECT_THROW(lambda_scan(kParams, {5.0, 2.0}, scope, g, centred_seeds(), S), ValidationError);
  EXPECT_THROW(lambda_scan(kParams, {0.0, 2.0}, scope, g, centred_seeds(), S), ValidationError);
  EXPECT_THROW(lambda_scan(kParams, {}, scope, g, centred_seeds(), S), ValidationError);
}

TEST(Solver, ConfigValidation) {
  SolverConfig cfg;
  cfg.grad_tol = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.seeds.clear();
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.jitter = 0.7;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_EQ(seed_kind_from_string("shifted"), SeedKind::shifted_gaussian);
  try {
    seed_kind_from_string("bogus");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "solver.seeds");
  }
}

TEST(Solver, NonConvergenceIsReported) {
  SolverConfig cfg = centred_seeds();
  cfg.max_iters = 1;
  try {
    solve_ground_state(kParams, ScopeFunction::constant(1.0), GridSpec(1, 8.0, 129), cfg);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("talenti"), std::string::npos);
  }
}

TEST(Solver, DeterministicAcrossThreadCounts) {
  const GridSpec g(1, 8.0, 129);
  const auto scope = ScopeFunction::radial_well(1.0, 2.0, 1.0);
  set_num_threads(1);
  const auto a = solve_ground_state(kParams, scope, g);
  set_num_threads(4);
  const auto b = solve_ground_state(kParams, scope, g);
  set_num_threads(0);
  EXPECT_EQ(a.c_value, b.c_value);
  EXPECT_EQ(a.best_seed, b.best_seed);
  for (std::size_t i = 0; i < a.u_star.size(); ++i) ASSERT_EQ(a.u_star[i], b.u_star[i]);
}
