#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "jacobi_ldp/ldp.hpp"
#include "oracles/determinantal.hpp"
#include "oracles/quadrature.hpp"
#include "oracles/selberg.hpp"

using namespace jacobi_ldp;

namespace {

ScalingFamily jacobi_family(std::vector<int> sizes) { return ScalingFamily::exact_ratio(LimitParams(1, 1, 1), sizes); }

const EquilibriumSolution& symmetric_solution() {
  static const EquilibriumSolution sol = solve_equilibrium(LimitParams(1, 1, 1), 1024, 1e-3, 20000);
  return sol;
}

OutlierEstimate synthetic(int big_n, double p, std::size_t trials) {
  OutlierEstimate e;
  e.N = big_n;
  e.trials = trials;
  e.p_hat = p;
  e.hits = static_cast<std::size_t>(std::llround(p * trials));
  e.std_err = std::sqrt(p * (1 - p) / trials);
  e.ess = static_cast<double>(trials);
  return e;
}

}  // namespace

TEST(Region, Validation) {
  EXPECT_THROW(Region({{0.5, 0.4}}), std::invalid_argument);
  EXPECT_THROW(Region({{0.0, 0.5}, {0.5, 0.7}}), std::invalid_argument);
  EXPECT_THROW(Region({{0.9, 1.1}}), std::invalid_argument);
  const Region r({{0.8, 0.9}, {0.1, 0.2}});
  EXPECT_EQ(r.intervals().front().lo, 0.1);
  EXPECT_TRUE(r.contains(0.85));
  EXPECT_FALSE(r.contains(0.5));
  EXPECT_TRUE(Region({{0.82, 0.85}}).subset_of(r));
  EXPECT_FALSE(Region({{0.82, 0.95}}).subset_of(r));
}

TEST(EstimateOutlierProbability, DegenerateRegions) {
  const auto fam = jacobi_family({8});
  const ChainSettings s = ChainSettings::defaults_for(8, 3);
  const auto all = estimate_outlier_probability(fam, 8, Region::unit(), 500, s);
  EXPECT_EQ(all.p_hat, 1.0);
  EXPECT_EQ(all.hits, 500u);
  const auto none = estimate_outlier_probability(fam, 8, Region(), 500, s);
  EXPECT_EQ(none.p_hat, 0.0);
  EXPECT_EQ(none.hits, 0u);
  EXPECT_EQ(none.trials, 500u);
  EXPECT_THROW(estimate_outlier_probability(fam, 8, Region::unit(), 0, s), std::invalid_argument);
  EXPECT_THROW(estimate_outlier_probability(fam, 9, Region::unit(), 10, s), std::out_of_range);
}

TEST(EstimateOutlierProbability, SingleParticleBetaTail) {
  const ScalingFamily fam({{1, 1, 1, 1}}, LimitParams(1, 1, 1), 1e-12);
  const auto e = estimate_outlier_probability(fam, 1, Region({{0.9, 1.0}}), 40000, ChainSettings::defaults_for(1, 5));
  EXPECT_NEAR(e.p_hat, 1.0 - 0.972, 3 * e.std_err);
  EXPECT_EQ(static_cast<double>(e.hits) / e.trials, e.p_hat);
  EXPECT_GT(e.ess, 0.0);
}

TEST(EstimateOutlierProbability, MatchesDeterminantalOracle) {
  const auto fam = jacobi_family({8});
  const Region x({{0.85, 1.0}});
  const auto e = estimate_outlier_probability(fam, 8, x, 30000, ChainSettings::defaults_for(8, 17));
  const double exact = oracle::JacobiEnsemble(8, 8, 8).outlier_probability({{0.85, 1.0}});
  EXPECT_NEAR(e.p_hat, exact, 3 * e.std_err);
}

TEST(EstimateOutlierProbability, MonotoneInRegionOnSharedSamples) {
  const auto fam = jacobi_family({10});
  const std::vector<Region> regions = {Region({{0.9, 1.0}}), Region({{0.85, 1.0}}), Region({{0.0, 0.1}, {0.85, 1.0}})};
  const auto est = estimate_outlier_probabilities(fam, 10, regions, 3000, ChainSettings::defaults_for(10, 23));
  ASSERT_EQ(est.size(), 3u);
  EXPECT_LE(est[0].hits, est[1].hits);
  EXPECT_LE(est[1].hits, est[2].hits);
  EXPECT_GT(est[0].hits, 0u);
}

TEST(EstimateGamma, FullRegionGivesIdenticalValues) {
  const auto fam = jacobi_family({8});
  const auto g = estimate_gamma(fam, 8, Region::unit(), 50, 128, ChainSettings::defaults_for(7, 2));
  EXPECT_EQ(g.log_gamma_X, g.log_gamma_full);
  EXPECT_EQ(g.ratio, 1.0);
  EXPECT_TRUE(std::isfinite(g.log_gamma_full));
}

TEST(EstimateGamma, NormalizationMatchesSelberg) {
  for (int big_n : {4, 8, 16}) {
    const auto fam = jacobi_family({big_n});
    const auto g = estimate_gamma(fam, big_n, Region::unit(), 2000, 256,
                                  ChainSettings::defaults_for(big_n - 1, 29 + big_n));
    const double exact = oracle::log_gamma_full(big_n, big_n, big_n);
    EXPECT_NEAR(g.log_gamma_full, exact, 3 * g.log_gamma_full_std_err + 1e-3) << "N = " << big_n;
    EXPECT_FALSE(g.warning.has_value());
  }
}

TEST(EstimateGamma, RatioIsOneParticleProbability) {
  const auto fam = jacobi_family({8});
  const auto g = estimate_gamma(fam, 8, Region({{0.8, 1.0}}), 3000, 256, ChainSettings::defaults_for(7, 31));
  const double exact = oracle::JacobiEnsemble(8, 8, 8).one_particle_probability({{0.8, 1.0}});
  EXPECT_NEAR(g.ratio, exact, 3 * g.ratio_std_err);
  EXPECT_LT(g.log_gamma_X, g.log_gamma_full);
}

TEST(EstimateGamma, WarnsOnCoarseQuadrature) {
  const auto fam = jacobi_family({16});
  const auto g = estimate_gamma(fam, 16, Region::unit(), 20, 4, ChainSettings::defaults_for(15, 1));
  ASSERT_TRUE(g.warning.has_value());
  EXPECT_GT(g.recommended_cells, 4u);
  EXPECT_LE(1.0 / g.recommended_cells, g.mean_min_spacing);
  const ScalingFamily single({{1, 1, 1, 1}}, LimitParams(1, 1, 1), 1e-12);
  EXPECT_THROW(estimate_gamma(single, 1, Region::unit(), 10, 64, ChainSettings::defaults_for(1, 1)),
               std::invalid_argument);
}

TEST(GammaQuadrature, MatchesHighOrderOracle) {
  const FiniteParams p(6, 6, 3);
  const std::vector<double> atoms = {0.12, 0.3, 0.31, 0.55, 0.9};
  const oracle::Rule rule = oracle::gauss_legendre(60);
  auto integrand = [&](double xi) {
    double v = std::pow(xi, 6) * std::pow(1 - xi, 3);
    for (double a : atoms) v *= (xi - a) * (xi - a);
    return v;
  };
  for (const Region& r : {Region::unit(), Region({{0.28, 0.6}}), Region({{0.0, 0.2}, {0.85, 1.0}})}) {
    double exact = 0.0;
    for (const Interval& iv : r.intervals()) exact += oracle::integrate(integrand, iv.lo, iv.hi, rule, 50);
    std::vector<double> scratch;
    for (std::size_t cells : {16u, 256u}) {
      const double got = detail::log_gamma_integral(r, atoms, p, cells, scratch);
      EXPECT_NEAR(got, std::log(exact), 1e-10) << "cells " << cells;
    }
  }
}

TEST(Sandwich, SyntheticVerdicts) {
  GammaEstimate g;
  g.ratio = 0.01;
  g.ratio_std_err = 0.0;
  EXPECT_TRUE(check_sandwich(synthetic(8, 0.05, 1000000), g, 8).ok());
  const auto below = check_sandwich(synthetic(8, 0.005, 1000000), g, 8);
  EXPECT_FALSE(below.lower_ok);
  EXPECT_TRUE(below.upper_ok);
  const auto above = check_sandwich(synthetic(8, 0.2, 1000000), g, 8);
  EXPECT_TRUE(above.lower_ok);
  EXPECT_FALSE(above.upper_ok);
  // A violation inside the error band is tolerated.
  EXPECT_TRUE(check_sandwich(synthetic(8, 0.0099, 1000), g, 8).ok());
}

TEST(Sandwich, HoldsForSmallEnsemble) {
  const auto fam = jacobi_family({8});
  const Region x({{0.9, 1.0}});
  const auto p = estimate_outlier_probability(fam, 8, x, 20000, ChainSettings::defaults_for(8, 41));
  const auto g = estimate_gamma(fam, 8, x, 2000, 256, ChainSettings::defaults_for(7, 43));
  const auto c = check_sandwich(p, g, 8);
  EXPECT_TRUE(c.ok()) << c.lower_bound << " <= " << c.p_hat << " <= " << c.upper_bound;
}

TEST(TruncatedFieldFunctional, BoundedBelowByCappedPotential) {
  const std::vector<GridMeasure> measures = {GridMeasure::uniform(128),
                                             GridMeasure::from_cdf(128, [](double x) { return x * x; }),
                                             GridMeasure(UniformGrid(4), {0.0, 0.0, 0.0, 1.0})};
  for (const FiniteParams& p : {FiniteParams(5, 3, 1), FiniteParams(20, 0, 0), FiniteParams(3, 0.5, 8)}) {
    double min_v = std::numeric_limits<double>::infinity();
    for (int k = 1; k < 2000; ++k) min_v = std::min(min_v, potential_VN(k / 2000.0, p).value());
    const double c = std::max(0.0, -min_v);
    for (double L : {1.5, 10.0, 1e3}) {
      for (const GridMeasure& mu : measures) {
        for (int k = 0; k <= 200; ++k) {
          const double xi = k / 200.0;
          const double phi = truncated_field_functional(xi, mu, L, p);
          ASSERT_TRUE(std::isfinite(phi));
          const ExtendedReal v = potential_VN(xi, p);
          const double capped = v.is_pos_inf() ? L : std::min(v.value(), L);
          EXPECT_LE(-phi, -capped + 1e-12);
          EXPECT_LE(-capped, c + 1e-12);
        }
      }
    }
  }
  EXPECT_THROW(truncated_field_functional(0.5, measures[0], 1.0, FiniteParams(2, 1, 1)), std::invalid_argument);
}

TEST(TruncatedFieldFunctional, LargeLLimit) {
  const GridMeasure mu = GridMeasure::from_cdf(256, [](double x) { return x * x * (3 - 2 * x); });
  const FiniteParams p(6, 2, 5);
  for (double xi : {0.2, 0.5, 0.77}) {
    const double limit = potential_VN(xi, p).value() - 5.0 / 6.0 * log_potential(mu, xi).value();
    EXPECT_NEAR(truncated_field_functional(xi, mu, 1e9, p), limit, 1e-7);
  }
}

TEST(TruncatedFieldFunctional, UniformConvergenceInN) {
  const LimitParams lp(0.5, 1, 2);
  const std::vector<int> sizes = {8, 32, 128, 512};
  const auto fam = ScalingFamily::exact_ratio(lp, sizes);
  const GridMeasure mu = GridMeasure::uniform(200);
  double previous = std::numeric_limits<double>::infinity();
  for (int big_n : sizes) {
    double worst = 0.0;
    for (int k = 0; k <= 400; ++k) {
      const double xi = k / 400.0;
      worst = std::max(worst, std::abs(truncated_field_functional(xi, mu, 5.0, fam.params_at(big_n)) -
                                       limit_truncated_field_functional(xi, mu, 5.0, lp)));
    }
    EXPECT_LT(worst, previous);
    previous = worst;
  }
  EXPECT_LT(previous, 0.02);
}

TEST(FitRate, RecoversExactExponentialDecay) {
  const auto& sol = symmetric_solution();
  const double c = 0.37;
  std::vector<OutlierEstimate> est;
  for (int big_n : {10, 20, 30, 40}) est.push_back(synthetic(big_n, std::exp(-c * big_n), 1000000000000ull));
  const auto r = fit_rate(est, Region({{0.96, 1.0}}), sol, LimitParams(1, 1, 1));
  ASSERT_TRUE(r.fitted()) << r.message;
  EXPECT_NEAR(r.fitted_slope, -c, 1e-12);
  EXPECT_EQ(r.used_N.size(), 4u);
}

TEST(FitRate, RefusesWithTooFewUsablePoints) {
  const auto& sol = symmetric_solution();
  const LimitParams lp(1, 1, 1);
  std::vector<OutlierEstimate> est = {synthetic(16, 1e-3, 100000), synthetic(24, 2e-4, 100000),
                                      synthetic(32, 3e-5, 100000)};
  const auto r = fit_rate(est, Region({{0.955, 1.0}}), sol, lp);
  EXPECT_FALSE(r.fitted());
  EXPECT_EQ(r.needs_more_trials, std::vector<int>{32});
  EXPECT_NE(r.message.find("32"), std::string::npos);

  std::vector<OutlierEstimate> ones = {synthetic(8, 1.0, 100), synthetic(16, 1.0, 100), synthetic(32, 1.0, 100)};
  const auto full = fit_rate(ones, Region::unit(), sol, lp);
  EXPECT_FALSE(full.fitted());
  EXPECT_EQ(full.theoretical_rate, 0.0);
}

TEST(FitRate, TheoreticalRate) {
  const auto& sol = symmetric_solution();
  const LimitParams lp(1, 1, 1);
  std::vector<OutlierEstimate> est;
  for (int big_n : {10, 20, 30}) est.push_back(synthetic(big_n, 0.5, 1000));
  const auto inside = fit_rate(est, Region({{0.4, 0.6}}), sol, lp);
  EXPECT_TRUE(inside.region_meets_support);
  EXPECT_EQ(inside.theoretical_rate, 0.0);

  const auto outside = fit_rate(est, Region({{0.955, 1.0}}), sol, lp);
  EXPECT_FALSE(outside.region_meets_support);
  EXPECT_NEAR(outside.theoretical_rate, -2.0 * effective_potential(0.955, sol, lp).value(), 1e-12);
  EXPECT_GT(outside.inf_veff, 0.0);
  const auto both = fit_rate(est, Region({{0.0, 0.045}, {0.955, 1.0}}), sol, lp);
  EXPECT_NEAR(both.theoretical_rate, outside.theoretical_rate, 1e-6);
}
