#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "regional/functionals.hpp"

using namespace regional;

namespace {

const ProblemParams kParams(1, 0.4, 10, 3);
const ScopeFunction kWell = ScopeFunction::radial_well(1, 2, 1);

GridFunction bump(const GridSpec& g, double amp, double width, double c = 0.0) {
  return GridFunction::sample(g, [&](const Point& x) { return amp * std::exp(-(x[0] - c) * (x[0] - c) / (width * width)); });
}

}  // namespace

TEST(Functionals, GradientMatchesCentralDifferences) {
  const GridSpec g(1, 8.0, 64);
  std::mt19937_64 rng(31);
  for (const Scope& scope : {Scope{kWell}, Scope{FullRange{}}}) {
    const auto F = Functional::for_scope(kParams, g, scope);
    for (int trial = 0; trial < 20; ++trial) {
      auto u = oracle::random_smooth(g, rng, true);
      u *= 0.5;
      const auto v = oracle::random_smooth(g, rng);
      const double analytic = F.derivative(u, v);
      const double t = 1e-4;
      const double fd = F.energy_difference(u + t * v, u - t * v) / (2.0 * t);
      EXPECT_LE(std::abs(fd - analytic), 1e-5 * std::max(1e-3, std::abs(analytic)));
    }
  }
}

TEST(Functionals, EnergyBreakdownAddsUp) {
  const GridSpec g(1, 8.0, 64);
  const auto F = Functional::for_scope(kParams, g, kWell);
  const auto u = bump(g, 0.7, 1.0);
  const auto e = F.energy(u);
  EXPECT_DOUBLE_EQ(e.total, e.quad - e.sub - e.crit);
  EXPECT_NEAR(e.quad, 0.5 * rho_norm_sq(u, kWell, 0.4), 1e-14);
  EXPECT_EQ(F.energy(GridFunction(g)).total, 0.0);
  // Only the positive part enters the nonlinear terms.
  EXPECT_EQ(F.sub_integral(-1.0 * u), 0.0);
}

TEST(Functionals, DiffusionScalesQuadraticTerm) {
  const GridSpec g(1, 8.0, 64);
  const auto u = bump(g, 0.7, 1.0);
  const auto F1 = Functional::for_scope(kParams, g, kWell);
  const auto F2 = Functional::for_scope(kParams.with_eps(0.5), g, kWell);
  const double B = F1.form()(u, u);
  EXPECT_NEAR(F2.quadratic(u) - l2_inner(u, u), std::pow(0.5, 0.8) * B, 1e-13);
}

TEST(Functionals, RegionalEnergyBelowFullEnergy) {
  const GridSpec g(1, 8.0, 64);
  std::mt19937_64 rng(5);
  const auto Fr = Functional::for_scope(kParams, g, kWell);
  const auto Ff = Functional::for_scope(kParams, g, FullRange{});
  for (int trial = 0; trial < 20; ++trial) {
    const auto u = oracle::random_function(g, rng);
    EXPECT_LE(Fr.energy(u).total, Ff.energy(u).total);
  }
}

TEST(Functionals, NehariProjection) {
  const GridSpec g(1, 8.0, 64);
  std::mt19937_64 rng(41);
  const auto F = Functional::for_scope(kParams, g, kWell);
  for (int trial = 0; trial < 10; ++trial) {
    const auto u = oracle::random_smooth(g, rng, true);
    const auto np = F.nehari_project(u);
    EXPECT_LE(np.residual, 1e-12 * np.scale);
    for (double s : {0.01, 3.0, 250.0}) {
      const auto ns = F.nehari_project(s * u);
      EXPECT_NEAR(ns.t * s / np.t, 1.0, 1e-10);
    }
    for (std::size_t k = 1; k < np.bracket_widths.size(); ++k)
      EXPECT_LT(np.bracket_widths[k], np.bracket_widths[k - 1]);
    const auto id = F.nehari_energy_identity(np.t * u);
    EXPECT_TRUE(id.precondition_met);
    EXPECT_LE(id.gap, 1e-10 * std::max({1.0, std::abs(id.lhs), std::abs(id.rhs)}));
  }
  EXPECT_THROW(F.nehari_project(-1.0 * bump(g, 1.0, 1.0)), DomainError);
  EXPECT_THROW(F.nehari_project(GridFunction(g)), DomainError);
}

TEST(Functionals, NehariClosedFormWithoutSubcriticalTerm) {
  const GridSpec g(1, 8.0, 64);
  const auto F = Functional::for_scope(kParams.with_lambda(0.0), g, kWell);
  const auto u = bump(g, 0.4, 1.2);
  const double t = std::pow(F.quadratic(u) / F.crit_integral(u), 1.0 / 8.0);
  EXPECT_NEAR(F.nehari_project(u).t / t, 1.0, 1e-12);
}

TEST(Functionals, IdentityGapAtSmallNorm) {
  const GridSpec g(1, 8.0, 64);
  const auto F = Functional::for_scope(kParams, g, kWell);
  const auto u = bump(g, 1e-8, 1.0);
  const auto id = F.nehari_energy_identity(u);
  EXPECT_LT(std::abs(id.lhs), 1e-14);
  EXPECT_LT(std::abs(id.rhs), 1e-14);
}

TEST(Functionals, RayMaximum) {
  const GridSpec g(1, 8.0, 64);
  std::mt19937_64 rng(43);
  const auto F = Functional::for_scope(kParams, g, kWell);
  for (int trial = 0; trial < 10; ++trial) {
    const auto u = oracle::random_smooth(g, rng, true);
    const auto rm = F.ray_max_energy(u);
    EXPECT_TRUE(rm.dominates);
    EXPECT_GT(rm.value, 0.0);
    const auto scaled = F.ray_max_energy(7.5 * u);
    EXPECT_NEAR(scaled.value, rm.value, 1e-12 * rm.value);
    EXPECT_NEAR(scaled.t_star * 7.5, rm.t_star, 1e-10 * rm.t_star);
  }
}

TEST(Functionals, MountainPassGeometry) {
  const GridSpec g(1, 8.0, 64);
  std::mt19937_64 rng(47);
  const auto F = Functional::for_scope(kParams, g, kWell);
  const double delta = 0.05;
  double beta = 1e300;
  for (int trial = 0; trial < 50; ++trial) {
    auto u = oracle::random_function(g, rng);
    u *= delta / std::sqrt(F.quadratic(u));
    beta = std::min(beta, F.energy(u).total);
  }
  EXPECT_GT(beta, 0.0);
  EXPECT_LT(F.energy(bump(g, 5.0, 1.0)).total, 0.0);
}

TEST(Functionals, ClampIsCounted) {
  const GridSpec g(1, 8.0, 64);
  const auto F = Functional::for_scope(kParams, g, kWell);
  EXPECT_EQ(F.clamp_events(), 0u);
  (void)F.energy(bump(g, 1e7, 1.0));
  EXPECT_GT(F.clamp_events(), 0u);
}

TEST(Functionals, FreeFunctionSurface) {
  const GridSpec g(1, 8.0, 64);
  const auto u = bump(g, 0.7, 1.0);
  const auto F = Functional::for_scope(kParams, g, kWell);
  EXPECT_EQ(energy(u, kParams, kWell).total, F.energy(u).total);
  EXPECT_EQ(nehari_project(u, kParams, kWell).t, F.nehari_project(u).t);
  EXPECT_EQ(ray_max_energy(u, kParams, kWell).value, F.ray_max_energy(u).value);
  const auto gu = gradient(u, kParams, FullRange{});
  EXPECT_EQ(gu.size(), u.size());
}

TEST(Sobolev, QuotientProperties) {
  const GridSpec g(1, 8.0, 129);
  const auto full = NonlocalForm::full(g, 0.4);
  const auto u0 = talenti_extremal(kParams, g, 1.0, 0.5);
  const double q = sobolev_quotient(u0, full, 10.0);
  for (double s : {1e-3, 2.0, 1e4}) EXPECT_NEAR(sobolev_quotient(s * u0, full, 10.0) / q, 1.0, 1e-12);
  const auto est = estimate_sobolev_constant(kParams, g);
  EXPECT_LE(est.S_minimized, est.S_extremal);
  EXPECT_EQ(est.S_est, std::min(est.S_minimized, est.S_extremal));
  EXPECT_GT(est.S_est, 0.0);
  SobolevOptions tight;
  tight.theta = 2.0 * g.h();
  EXPECT_THROW(estimate_sobolev_constant(kParams, g, tight), DomainError);
}

// The extremal's slow algebraic tail makes the box truncation dominate the
// theta-drift; the drift is recorded here rather than held to a tight bound.
TEST(Sobolev, ThetaDriftIsBounded) {
  const GridSpec g(1, 64.0, 1025);
  SobolevOptions a, b;
  a.theta = 0.5;
  b.theta = 1.0;
  a.minimize = b.minimize = false;
  const double s1 = estimate_sobolev_constant(kParams, g, a).S_extremal;
  const double s2 = estimate_sobolev_constant(kParams, g, b).S_extremal;
  RecordProperty("theta_drift", std::to_string(std::abs(s2 / s1 - 1.0)));
  EXPECT_LT(std::abs(s2 / s1 - 1.0), 0.15);
}
