#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "jacobi_ldp/equilibrium.hpp"
#include "oracles/distributions.hpp"
#include "oracles/quadrature.hpp"

using namespace jacobi_ldp;

namespace {

const double kLog4 = std::log(4.0);

const EquilibriumSolution& zero_field_512() {
  static const EquilibriumSolution sol = solve_equilibrium(LimitParams(1, 0, 0), 512, 1e-3, 20000);
  return sol;
}

const EquilibriumSolution& symmetric_1024() {
  static const EquilibriumSolution sol = solve_equilibrium(LimitParams(1, 1, 1), 1024, 1e-3, 20000);
  return sol;
}

GridMeasure arcsine(std::size_t cells) { return GridMeasure::from_cdf(cells, oracle::arcsine_cdf); }

}  // namespace

TEST(LogKernels, GalerkinKernelMatchesDoubleIntegral) {
  const double h = 1.0 / 64;
  const oracle::Rule rule = oracle::gauss_legendre(40);
  EXPECT_NEAR(kernels::galerkin_kernel(0, h), -std::log(h) + 1.5, 1e-14);
  for (long k : {1L, 2L, 7L, 15L, 16L, 40L}) {
    EXPECT_EQ(kernels::galerkin_kernel(k, h), kernels::galerkin_kernel(-k, h));
    const double value = oracle::integrate(
        [&](double u) {
          return oracle::integrate([&](double v) { return -std::log(std::abs(u - v)); }, k * h, (k + 1) * h, rule, 8);
        },
        0.0, h, rule, 8);
    EXPECT_NEAR(kernels::galerkin_kernel(k, h), value / (h * h), 2e-6) << "k = " << k;
  }
}

TEST(LogKernels, CollocationKernelMatchesCellAverage) {
  const double h = 1.0 / 128;
  const oracle::Rule rule = oracle::gauss_legendre(40);
  EXPECT_NEAR(kernels::collocation_kernel(0, h), -std::log(0.5 * h) + 1.0, 1e-14);
  for (long k : {1L, 3L, 15L, 16L, 100L}) {
    const double x = 0.5 * h;
    const double value =
        oracle::integrate([&](double v) { return -std::log(std::abs(x - v)); }, k * h, (k + 1) * h, rule, 4);
    EXPECT_NEAR(kernels::collocation_kernel(k, h), value / h, 1e-10) << "k = " << k;
  }
}

TEST(LogPotential, UniformMeasure) {
  const GridMeasure u = GridMeasure::uniform(1000);
  EXPECT_NEAR(log_potential(u, 0.0).value(), -1.0, 1e-6);
  EXPECT_NEAR(log_potential(u, 0.5).value(), std::log(0.5) - 1.0, 1e-6);
  EXPECT_NEAR(log_potential(u, 0.3).value(), 0.3 * std::log(0.3) + 0.7 * std::log(0.7) - 1.0, 1e-6);
}

TEST(LogPotential, ArcsineMeasureIsConstantInside) {
  const GridMeasure mu = arcsine(4096);
  for (double x = 0.1; x <= 0.9; x += 0.05) EXPECT_NEAR(log_potential(mu, x).value(), -kLog4, 2e-3) << x;

  // Dense quadrature of the arcsine density 1/(pi sqrt(y(1-y))), y = sin^2(t).
  const oracle::Rule rule = oracle::gauss_legendre(40);
  for (double x : {0.2, 0.55}) {
    const double value = oracle::integrate_singular(
        [&](double t) {
          const double y = std::sin(t) * std::sin(t);
          return 2.0 / std::numbers::pi * std::log(std::abs(x - y));
        },
        0.0, 0.5 * std::numbers::pi, std::asin(std::sqrt(x)), rule);
    EXPECT_NEAR(value, -kLog4, 1e-10);
  }
}

TEST(SmoothingKernel, Examples) {
  EXPECT_NEAR(smoothing_kernel_H(0.5, 0.1, 0.5), std::log(0.1) - 1.0, 1e-13);
  for (double t : {0.0, 0.03, 0.1, 0.25, 0.7}) {
    EXPECT_NEAR(smoothing_kernel_H(0.4, 0.1, 0.4 + t), smoothing_kernel_H(0.4, 0.1, 0.4 - t), 1e-13);
  }
  EXPECT_THROW(smoothing_kernel_H(0.5, 0.0, 0.2), std::invalid_argument);
}

TEST(SmoothingKernel, MatchesQuadratureAndConvergesQuadratically) {
  const oracle::Rule rule = oracle::gauss_legendre(30);
  for (double delta : {0.05, 0.2}) {
    for (double eta : {0.9, 0.52}) {
      // eta = 0.52 lies inside the window: grade the panels toward it.
      auto f = [&](double xi) { return std::log(std::abs(xi - eta)); };
      const double value =
          oracle::integrate_singular(f, 0.5 - delta, 0.5 + delta, std::clamp(eta, 0.5 - delta, 0.5 + delta), rule);
      EXPECT_NEAR(smoothing_kernel_H(0.5, delta, eta), value / (2 * delta), 1e-8);
    }
  }
  double previous = 0.0;
  for (double delta : {1e-2, 1e-3, 1e-4}) {
    const double err = std::abs(smoothing_kernel_H(0.5, delta, 0.9) - std::log(0.4));
    if (previous > 0.0) EXPECT_NEAR(previous / err, 100.0, 2.0);
    previous = err;
  }
  // Continuity across the window edge (the slope blows up like log there).
  EXPECT_NEAR(smoothing_kernel_H(0.5, 0.1, 0.6 - 1e-12), smoothing_kernel_H(0.5, 0.1, 0.6 + 1e-12), 1e-9);
}

TEST(EnergyFunctional, UniformAndArcsine) {
  const LimitParams free(1, 0, 0);
  EXPECT_NEAR(energy_functional(GridMeasure::uniform(1000), free).value(), 1.5, 1e-6);
  EXPECT_NEAR(energy_functional(arcsine(4096), free).value(), kLog4, 5e-3);
}

TEST(EnergyFunctional, HomogeneityInRho) {
  const GridMeasure mu = GridMeasure::from_cdf(256, [](double x) { return x * x * (3 - 2 * x); });
  const double interaction = energy_functional(mu, LimitParams(1, 0, 0)).value();
  const double field = energy_functional(mu, LimitParams(1, 0.7, 1.3)).value() - interaction;
  for (double c : {0.5, 2.0, 3.5}) {
    EXPECT_NEAR(energy_functional(mu, LimitParams(c, 0.7, 1.3)).value(), c * c * interaction + c * field, 1e-11);
  }
}

TEST(SolveEquilibrium, ZeroFieldIsArcsine) {
  const auto& sol = zero_field_512();
  EXPECT_TRUE(sol.converged()) << to_string(sol.status) << " residual " << sol.kkt_residual;
  const auto cdf = sol.mu0.cdf_at_upper_edges();
  double worst = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    worst = std::max(worst, std::abs(cdf[i] - oracle::arcsine_cdf(sol.mu0.grid().upper(i))));
    worst = std::max(worst, std::abs(sol.mu0.cdf(sol.mu0.node(i)) - oracle::arcsine_cdf(sol.mu0.node(i))));
  }
  EXPECT_LE(worst, 1e-2);
  EXPECT_NEAR(sol.B, -kLog4, 5e-3);
  EXPECT_NEAR(sol.D, -sol.B, 1e-15);
  EXPECT_NEAR(sol.D, kLog4, 5e-3);
}

TEST(SolveEquilibrium, ZeroFieldCdfIsCauchyUnderRefinement) {
  const auto fine = solve_equilibrium(LimitParams(1, 0, 0), 4096, 1e-3, 20000);
  const auto& coarse = zero_field_512();
  double worst = 0.0;
  for (std::size_t i = 0; i < coarse.mu0.cells(); ++i) {
    const double x = coarse.mu0.grid().upper(i);
    worst = std::max(worst, std::abs(coarse.mu0.cdf(x) - fine.mu0.cdf(x)));
  }
  EXPECT_LE(worst, 1e-2);
}

TEST(SolveEquilibrium, SymmetricFieldGivesSymmetricMeasure) {
  const auto& sol = symmetric_1024();
  ASSERT_TRUE(sol.converged());
  const std::size_t m = sol.mu0.cells();
  for (std::size_t i = 0; i < m; ++i) ASSERT_NEAR(sol.mu0.weight(i), sol.mu0.weight(m - 1 - i), 1e-8);
}

TEST(SolveEquilibrium, FrostmanConditions) {
  for (const LimitParams& lp : {LimitParams(1, 1, 1), LimitParams(1, 0.5, 2), LimitParams(2, 1, 0)}) {
    const auto sol = solve_equilibrium(lp, 1024, 1e-3, 20000);
    ASSERT_TRUE(sol.converged()) << to_string(sol.status) << " residual " << sol.kkt_residual;
    EXPECT_LE(sol.kkt_residual, 1e-3);
    for (std::size_t i = 0; i < sol.veff_table.size(); ++i) {
      const ExtendedReal v = sol.veff_table[i].value;
      EXPECT_GE(v, ExtendedReal(-1e-3));
      if (sol.support_mask[i]) EXPECT_LE(std::abs(v.value()), 1e-3);
    }
  }
}

TEST(SolveEquilibrium, IteratesStayFeasibleAndDescend) {
  const auto sol = solve_equilibrium(LimitParams(1, 0.5, 2), 512, 1e-3, 20000);
  ASSERT_FALSE(sol.energy_history.empty());
  for (double w : sol.min_weight_history) EXPECT_GE(w, 0.0);
  for (double e : sol.mass_error_history) EXPECT_LE(e, 1e-12);
  for (std::size_t k = 1; k < sol.energy_history.size(); ++k) {
    const double prev = sol.energy_history[k - 1];
    EXPECT_LE(sol.energy_history[k], prev + 1e-12 * std::abs(prev)) << "iteration " << k;
  }
}

TEST(SolveEquilibrium, ReportsGridLimitedResidual) {
  const auto sol = solve_equilibrium(LimitParams(1, 0, 0), 64, 1e-9, 20000);
  EXPECT_EQ(sol.status, SolverStatus::GridLimited);
  EXPECT_GT(sol.kkt_residual, 1e-9);
  EXPECT_THROW(solve_equilibrium(LimitParams(1, 0, 0), 32, 1e-3, 100), std::invalid_argument);
}

TEST(SolveEquilibrium, RefinementOfZeroFieldB) {
  const auto r = refine_B(LimitParams(1, 0, 0), 256, 1e-3, 20000);
  EXPECT_LE(std::abs(r.b_fine - r.b_mid), std::abs(r.b_mid - r.b_coarse));
  EXPECT_LE(std::abs(r.b_fine - (-kLog4)), std::abs(r.b_coarse - (-kLog4)));
  EXPECT_NEAR(r.b_extrapolated, -kLog4, 5e-4);
  EXPECT_LE(std::abs(r.b_fine - (-kLog4)), 3 * r.error_estimate + 1e-6);
}

TEST(RateFunction, VanishesAtEquilibrium) {
  for (const LimitParams& lp : {LimitParams(1, 1, 1), LimitParams(1, 0.5, 2), LimitParams(2, 1, 0)}) {
    const auto sol = solve_equilibrium(lp, 512, 1e-3, 20000);
    const auto k = compute_constants(sol.mu0, lp);
    EXPECT_EQ(k.B, sol.B);
    EXPECT_LE(std::abs(rate_function(sol.mu0, sol, lp).value()), 1e-10);
    EXPECT_GE(rate_function(GridMeasure::uniform(512), sol, lp).value(), 0.0);
  }
}

TEST(RateFunction, UniformMeasureInZeroField) {
  const auto& sol = zero_field_512();
  EXPECT_NEAR(rate_function(GridMeasure::uniform(512), sol, LimitParams(1, 0, 0)).value(), 1.5 - kLog4, 1e-3);
}

TEST(EffectivePotential, SupportAndEndpoints) {
  const LimitParams lp(1, 1, 1);
  const auto& sol = symmetric_1024();
  EXPECT_NEAR(effective_potential(0.5, sol, lp).value(), 0.0, 1e-3);
  EXPECT_TRUE(effective_potential(0.0, sol, lp).is_pos_inf());
  EXPECT_TRUE(effective_potential(1.0, sol, lp).is_pos_inf());
  for (double x : {0.01, 0.03, 0.97, 0.99}) EXPECT_GT(effective_potential(x, sol, lp).value(), 0.0);

  const LimitParams half(1, 0, 1);
  const auto one_sided = solve_equilibrium(half, 512, 1e-3, 20000);
  EXPECT_TRUE(effective_potential(0.0, one_sided, half).is_finite());
  EXPECT_TRUE(effective_potential(1.0, one_sided, half).is_pos_inf());
}

TEST(TruncatedEffectivePotential, MonotoneInMAndConvergent) {
  const LimitParams lp(1, 1, 1);
  const auto& sol = symmetric_1024();
  const std::vector<double> ms = {1.5, 3.0, 10.0, 100.0, 1e4};
  for (std::size_t i = 0; i < sol.mu0.cells(); i += 7) {
    const double x = sol.mu0.node(i);
    for (std::size_t k = 1; k < ms.size(); ++k) {
      EXPECT_LE(truncated_effective_potential(x, ms[k - 1], sol, lp),
                truncated_effective_potential(x, ms[k], sol, lp) + 1e-12);
    }
  }
  EXPECT_NEAR(truncated_effective_potential(0.5, 1e8, sol, lp), effective_potential(0.5, sol, lp).value(), 1e-6);
  for (double x : {0.2, 0.5, 0.8, 0.98}) {
    EXPECT_NEAR(truncated_effective_potential(x, 1e8, sol, lp), effective_potential(x, sol, lp).value(), 1e-6);
  }
  EXPECT_THROW(truncated_effective_potential(0.5, 1.0, sol, lp), std::invalid_argument);
}

TEST(TruncatedEffectivePotential, FiniteAndContinuousOnClosedInterval) {
  const LimitParams lp(1, 1, 1);
  const auto& sol = symmetric_1024();
  // Caps small enough that V reaches them within 1e-16 of either endpoint.
  for (double m : {2.0, 10.0}) {
    for (std::size_t i = 0; i < sol.mu0.cells(); ++i) {
      EXPECT_TRUE(std::isfinite(truncated_effective_potential(sol.mu0.node(i), m, sol, lp)));
    }
    // Away from the endpoints the slope is moderate; a 4.5e-5 step should move V_eff by under 1e-3.
    double prev = truncated_effective_potential(0.05, m, sol, lp);
    for (int k = 1; k <= 20000; ++k) {
      const double x = 0.05 + 0.9 * k / 20000.0;
      const double v = truncated_effective_potential(x, m, sol, lp);
      ASSERT_LT(std::abs(v - prev), 1e-3) << "x = " << x;
      prev = v;
    }
    // The cap makes the endpoint value the limit from inside.
    EXPECT_NEAR(truncated_effective_potential(0.0, m, sol, lp), truncated_effective_potential(1e-300, m, sol, lp),
                1e-9);
    EXPECT_NEAR(truncated_effective_potential(1.0, m, sol, lp),
                truncated_effective_potential(1.0 - 1e-16, m, sol, lp), 1e-6);
  }
}
