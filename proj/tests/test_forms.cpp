#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "regional/forms.hpp"
#include "regional/parallel.hpp"

using namespace regional;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

const ScopeFunction kWell = ScopeFunction::radial_well(0.5, 1.0, 0.6, {0.3, 0, 0});

}  // namespace

TEST(Forms, MatchesNaiveDoubleLoop1D) {
  const GridSpec g(1, 2.0, 16);
  std::mt19937_64 rng(11);
  const double alpha = 0.4;
  const auto rl = [](const Point&) { return 0.0; };
  for (int trial = 0; trial < 5; ++trial) {
    const auto u = oracle::random_function(g, rng), v = oracle::random_function(g, rng);
    const double reg = regional_form(u, v, kWell, alpha);
    const double reg_ref = oracle::naive_form(u, v, alpha, rl, [](const Point& x) { return kWell(x, 1); });
    EXPECT_LE(rel(reg, reg_ref), 1e-12);
    const double full = full_form(u, v, alpha);
    const double full_ref = oracle::naive_form(u, v, alpha, rl, [](const Point&) { return kInfinity; });
    EXPECT_LE(rel(full, full_ref), 1e-12);
    const double comp = complement_form(u, kWell, 1.0, alpha);
    const double comp_ref = oracle::naive_form(u, u, alpha, [](const Point& x) { return kWell(x, 1); },
                                               [](const Point&) { return 1.0; });
    EXPECT_LE(rel(comp, comp_ref), 1e-12);
  }
}

TEST(Forms, MatchesNaiveDoubleLoop2D) {
  const GridSpec g(2, 1.5, 8);
  std::mt19937_64 rng(12);
  const auto rho = ScopeFunction::radial_well(0.5, 1.0, 0.6, {0.2, -0.1, 0});
  const auto u = oracle::random_function(g, rng), v = oracle::random_function(g, rng);
  const double reg = regional_form(u, v, rho, 0.5);
  const double ref = oracle::naive_form(u, v, 0.5, [](const Point&) { return 0.0; },
                                        [&](const Point& x) { return rho(x, 2); });
  EXPECT_LE(rel(reg, ref), 1e-12);
}

TEST(Forms, SymmetricBilinearPositive) {
  const GridSpec g(1, 4.0, 48);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto u = oracle::random_function(g, rng), v = oracle::random_function(g, rng),
               w = oracle::random_function(g, rng);
    const auto form = NonlocalForm::regional(g, 0.4, kWell);
    EXPECT_LE(rel(form(u, v), form(v, u)), 1e-13);
    const double a = 1.7, b = -0.6;
    EXPECT_LE(rel(form(a * u + b * w, v), a * form(u, v) + b * form(w, v)), 1e-12);
    EXPECT_GE(form(u, u), 0.0);
  }
}

TEST(Forms, ApplyAndDenseMatrixAgree) {
  const GridSpec g(1, 4.0, 40);
  std::mt19937_64 rng(5);
  const auto form = NonlocalForm::regional(g, 0.4, kWell);
  const auto u = oracle::random_function(g, rng), v = oracle::random_function(g, rng);
  EXPECT_LE(rel(form(u, v), l2_inner(form.apply(u), v)), 1e-12);
  const Eigen::MatrixXd A = form.dense_matrix();
  EXPECT_LE((A - A.transpose()).cwiseAbs().maxCoeff(), 1e-14 * A.cwiseAbs().maxCoeff());
  const auto Au = form.apply(u);
  for (std::size_t i = 0; i < u.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) s += A(i, j) * u[j];
    EXPECT_NEAR(s, Au[i], 1e-11 * (1.0 + std::abs(Au[i])));
  }
}

TEST(Forms, PartitionIdentity) {
  const GridSpec g(1, 4.0, 40);
  std::mt19937_64 rng(7);
  const double alpha = 0.4;
  const auto rho = ScopeFunction::radial_well(0.8, 1.6, 1.0);
  const auto table = std::make_shared<const KernelTable>(g, alpha);
  const NonlocalForm full(g, table, FormMode::full, [](const Point&) { return 0.0; },
                          [](const Point&) { return kInfinity; });
  const NonlocalForm reg(g, table, FormMode::regional, [](const Point&) { return 0.0; },
                         [&](const Point& x) { return rho(x, 1); });
  const NonlocalForm c1(g, table, FormMode::complement, [&](const Point& x) { return rho(x, 1); },
                        [](const Point&) { return 1.6; });
  const NonlocalForm c2(g, table, FormMode::complement, [](const Point&) { return 1.6; },
                        [](const Point&) { return kInfinity; });
  for (int trial = 0; trial < 20; ++trial) {
    const auto u = oracle::random_function(g, rng);
    EXPECT_LE(rel(reg(u, u) + c1(u, u) + c2(u, u), full(u, u)), 1e-10);
  }
}

TEST(Forms, KernelWeightsSymmetricAndPositive) {
  for (int n : {1, 2}) {
    const GridSpec g(n, 2.0, 9);
    const KernelTable t(g, 0.5 * 0.9 * n);
    for (std::size_t j = 0; j < t.size(); ++j) {
      EXPECT_GT(t.weights()[j], 0.0);
      EXPECT_TRUE(std::isfinite(t.weights()[j]));
      auto k = t.offsets()[j];
      for (int d = 0; d < n; ++d) k[d] = -k[d];
      bool found = false;
      for (std::size_t i = 0; i < t.size(); ++i)
        if (t.offsets()[i] == k) {
          EXPECT_EQ(t.weights()[i], t.weights()[j]);
          found = true;
        }
      EXPECT_TRUE(found);
    }
  }
}

TEST(Forms, OneDimensionalWeightsAreExact) {
  const double h = 0.1, a = 0.4;
  const double w1 = detail::cell_weight({1, 0, 0}, 1, h, a);
  EXPECT_NEAR(w1, (std::pow(0.05, -0.8) - std::pow(0.15, -0.8)) / 0.8, 1e-12);
  // Sum over |k| >= 1 up to K telescopes to the integral over [h/2, (K+1/2) h] on both sides.
  double s = 0.0;
  for (int k = 1; k <= 50; ++k) s += 2.0 * detail::cell_weight({k, 0, 0}, 1, h, a);
  EXPECT_NEAR(s, 2.0 * (std::pow(0.05, -0.8) - std::pow(5.05, -0.8)) / 0.8, 1e-10);
}

TEST(Forms, TwoDimensionalWeightsMatchKernelFarAway) {
  const double h = 0.2, a = 0.5;
  for (std::array<int, 3> k : {std::array<int, 3>{6, 0, 0}, {5, 4, 0}, {9, 9, 0}}) {
    const double r = h * std::sqrt(double(k[0] * k[0] + k[1] * k[1]));
    EXPECT_NEAR(detail::cell_weight(k, 2, h, a) / (std::pow(r, -3.0) * h * h), 1.0, 0.02);
  }
}

TEST(Forms, ConstantHasNoInteriorEnergy) {
  // With v supported farther than rho_inf from the boundary, only interior
  // differences of u can meet v, and those vanish.
  const GridSpec g(1, 6.0, 97);
  const GridFunction one = GridFunction::sample(g, [](const Point&) { return 1.0; });
  const GridFunction v = GridFunction::sample(g, [](const Point& x) { return std::abs(x[0]) < 2.0 ? 1.0 + x[0] : 0.0; });
  EXPECT_EQ(regional_form(one, v, kWell, 0.4), 0.0);
  EXPECT_EQ(regional_form(GridFunction(g), v, kWell, 0.4), 0.0);
}

TEST(Forms, NormMonotoneInScope) {
  const GridSpec g(1, 4.0, 48);
  std::mt19937_64 rng(9);
  const auto small = ScopeFunction::radial_well(0.5, 1.0, 1.0);
  const auto large = ScopeFunction::radial_well(0.9, 1.5, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto u = oracle::random_function(g, rng);
    const double a = rho_norm_sq(u, small, 0.4), b = rho_norm_sq(u, large, 0.4);
    EXPECT_LE(a, b);
    EXPECT_LE(b, full_form(u, u, 0.4) + l2_inner(u, u));
  }
  EXPECT_EQ(rho_norm_sq(GridFunction(g), small, 0.4), 0.0);
}

TEST(Forms, SignPairingNeverPositive) {
  const GridSpec g(1, 4.0, 48);
  std::mt19937_64 rng(13);
  const auto form = NonlocalForm::regional(g, 0.4, kWell);
  for (int trial = 0; trial < 20; ++trial) EXPECT_LE(form.max_sign_pairing(oracle::random_function(g, rng)), 0.0);
}

TEST(Forms, ErrorsAndDiagnostics) {
  const GridSpec g(1, 4.0, 32), g2(1, 4.0, 33);
  const GridFunction u(g), w(g2);
  EXPECT_THROW(regional_form(u, w, kWell, 0.4), ShapeError);
  EXPECT_THROW(NonlocalForm::full(g2, 0.4)(u, u), ShapeError);
  EXPECT_THROW(NonlocalForm::complement(g, 0.4, ScopeFunction::radial_well(1, 2, 1), 1.5), DomainError);
  EXPECT_THROW(KernelTable(g, 1.0), DomainError);
  std::mt19937_64 rng(2);
  const auto r = oracle::random_smooth(g, rng);
  const auto form = NonlocalForm::full(g, 0.4);
  EXPECT_GT(form.tail_bound(r), 0.0);
  const GridSpec fine(1, 4.0, 127);
  const auto rf = GridFunction::sample(fine, [](const Point& x) { return std::exp(-x[0] * x[0]); });
  const auto rc = GridFunction::sample(g, [](const Point& x) { return std::exp(-x[0] * x[0]); });
  EXPECT_LT(NonlocalForm::full(fine, 0.4).core_error_estimate(rf), form.core_error_estimate(rc));
}

TEST(Forms, LpNorm) {
  const GridSpec g(1, 1.0, 1001);
  const auto one = GridFunction::sample(g, [](const Point&) { return 1.0; });
  EXPECT_NEAR(lp_norm(one, 2.0), std::sqrt(2.0), 1e-3);
  EXPECT_THROW(lp_norm(one, 0.5), DomainError);
  std::mt19937_64 rng(4);
  const GridSpec h(1, 4.0, 64);
  const double q = 3.0, crit = 10.0;
  const double theta = (0.5 - 1.0 / (q + 1.0)) / (0.5 - 1.0 / crit);
  for (int trial = 0; trial < 20; ++trial) {
    const auto u = oracle::random_function(h, rng), v = oracle::random_function(h, rng);
    EXPECT_LE(lp_norm(u + v, 3.0), lp_norm(u, 3.0) + lp_norm(v, 3.0) + 1e-14);
    EXPECT_LE(lp_norm(u, q + 1.0),
              std::pow(lp_norm(u, 2.0), 1.0 - theta) * std::pow(lp_norm(u, crit), theta) * (1.0 + 1e-12));
  }
}

// max ||u||_{2*} / (B(u,u)^{1/2} + ||u||_2) over a family of bumps, at two resolutions.
TEST(Forms, DiscreteSobolevConstantStableUnderRefinement) {
  auto constant = [](int m) {
    const GridSpec g(1, 8.0, m);
    const auto full = NonlocalForm::full(g, 0.4);
    double best = 0.0;
    for (double w : {0.5, 1.0, 2.0}) {
      const auto u = GridFunction::sample(g, [&](const Point& x) { return std::exp(-x[0] * x[0] / (w * w)); });
      best = std::max(best, lp_norm(u, 10.0) / (std::sqrt(full(u, u)) + lp_norm(u, 2.0)));
    }
    return best;
  };
  const double c1 = constant(129), c2 = constant(257);
  EXPECT_NEAR(c2 / c1, 1.0, 0.10);
}

TEST(Forms, BitIdenticalAcrossThreadCounts) {
  const GridSpec g(1, 4.0, 200);
  std::mt19937_64 rng(21);
  const auto u = oracle::random_function(g, rng), v = oracle::random_function(g, rng);
  const auto form = NonlocalForm::regional(g, 0.4, kWell);
  set_num_threads(1);
  const double a = form(u, v);
  const auto Au = form.apply(u);
  set_num_threads(4);
  const double b = form(u, v);
  const auto Bu = form.apply(u);
  set_num_threads(1);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(Au[i], Bu[i]);
}
