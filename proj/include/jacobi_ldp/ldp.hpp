#ifndef JACOBI_LDP_LDP_HPP
#define JACOBI_LDP_LDP_HPP

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "equilibrium.hpp"
#include "extended_real.hpp"
#include "grid_measure.hpp"
#include "sampler.hpp"

namespace jacobi_ldp {

struct Interval {
  double lo;
  double hi;

  bool contains(double x) const { return x >= lo && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Finite union of disjoint closed subintervals of [0,1].
class Region {
 public:
  Region() = default;
  explicit Region(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
    std::sort(intervals_.begin(), intervals_.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    for (std::size_t i = 0; i < intervals_.size(); ++i) {
      const Interval& iv = intervals_[i];
      if (!(iv.lo >= 0.0 && iv.hi <= 1.0 && iv.lo <= iv.hi)) {
        throw std::invalid_argument("Region: interval must satisfy 0 <= lo <= hi <= 1");
      }
      if (i > 0 && intervals_[i - 1].hi >= iv.lo) throw std::invalid_argument("Region: intervals must be disjoint");
    }
  }

  static Region unit() { return Region({{0.0, 1.0}}); }

  const std::vector<Interval>& intervals() const { return intervals_; }
  bool empty() const { return intervals_.empty(); }

  bool contains(double x) const {
    return std::any_of(intervals_.begin(), intervals_.end(), [x](const Interval& iv) { return iv.contains(x); });
  }

  bool contains_any(std::span<const double> xs) const {
    return std::any_of(xs.begin(), xs.end(), [this](double x) { return contains(x); });
  }

  bool subset_of(const Region& other) const {
    return std::all_of(intervals_.begin(), intervals_.end(), [&](const Interval& iv) {
      return std::any_of(other.intervals_.begin(), other.intervals_.end(),
                         [&](const Interval& o) { return o.lo <= iv.lo && iv.hi <= o.hi; });
    });
  }

  friend bool operator==(const Region&, const Region&) = default;

 private:
  std::vector<Interval> intervals_;
};

struct OutlierEstimate {
  int N = 0;
  std::size_t trials = 0;
  std::size_t hits = 0;
  double p_hat = 0.0;
  double std_err = 0.0;
  double ess = 0.0;  // effective sample size behind std_err
};

namespace detail {

// Batch-means accumulator for a stream of indicators. The standard error is
// the larger of the batch-means and binomial values.
class BatchMeans {
 public:
  explicit BatchMeans(std::size_t total) {
    batches_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(total))));
    batch_size_ = std::max<std::size_t>(1, total / batches_);
    batches_ = std::max<std::size_t>(1, std::min(batches_, total / batch_size_));
    means_.reserve(batches_);
  }

  void add(double v) {
    sum_ += v;
    ++count_;
    if (means_.size() < batches_) {
      current_ += v;
      if (++in_batch_ == batch_size_) {
        means_.push_back(current_ / static_cast<double>(batch_size_));
        current_ = 0.0;
        in_batch_ = 0;
      }
    }
  }

  double mean() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }
  std::size_t count() const { return count_; }

  // Variance of the overall mean from batch means (0 with fewer than 2 batches).
  double batch_variance_of_mean() const {
    if (means_.size() < 2) return 0.0;
    double mu = 0.0;
    for (double m : means_) mu += m;
    mu /= static_cast<double>(means_.size());
    double ss = 0.0;
    for (double m : means_) ss += (m - mu) * (m - mu);
    return ss / static_cast<double>(means_.size() - 1) / static_cast<double>(means_.size());
  }

 private:
  std::size_t batches_ = 1;
  std::size_t batch_size_ = 1;
  std::vector<double> means_;
  double current_ = 0.0;
  std::size_t in_batch_ = 0;
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

inline OutlierEstimate finish_outlier_estimate(int big_n, const BatchMeans& acc) {
  OutlierEstimate e;
  e.N = big_n;
  e.trials = acc.count();
  e.p_hat = acc.mean();
  e.hits = static_cast<std::size_t>(std::llround(e.p_hat * static_cast<double>(e.trials)));
  const double binomial = e.p_hat * (1.0 - e.p_hat) / static_cast<double>(e.trials);
  const double var = std::max(binomial, acc.batch_variance_of_mean());
  e.std_err = std::sqrt(var);
  e.ess = var > 0.0 ? e.p_hat * (1.0 - e.p_hat) / var : static_cast<double>(e.trials);
  return e;
}

}  // namespace detail

/// Outlier probabilities for several regions from one shared set of chain states.
inline std::vector<OutlierEstimate> estimate_outlier_probabilities(const ScalingFamily& family, int big_n,
                                                                   std::span<const Region> regions,
                                                                   std::size_t trials, const ChainSettings& s) {
  if (trials < 1) throw std::invalid_argument("estimate_outlier_probability: trials must be >= 1");
  const FiniteParams p = family.params_at(big_n);
  std::vector<detail::BatchMeans> acc(regions.size(), detail::BatchMeans(trials));
  const bool all_empty = std::all_of(regions.begin(), regions.end(), [](const Region& r) { return r.empty(); });
  if (all_empty) {
    for (auto& a : acc) {
      for (std::size_t t = 0; t < trials; ++t) a.add(0.0);
    }
  } else {
    stream_chain(p, s, trials, [&](std::span<const double> x) {
      for (std::size_t r = 0; r < regions.size(); ++r) acc[r].add(regions[r].contains_any(x) ? 1.0 : 0.0);
    });
  }
  std::vector<OutlierEstimate> out;
  out.reserve(regions.size());
  for (const auto& a : acc) out.push_back(detail::finish_outlier_estimate(big_n, a));
  return out;
}

/// Fraction of thinned P_N chain states with at least one particle in X.
inline OutlierEstimate estimate_outlier_probability(const ScalingFamily& family, int big_n, const Region& region,
                                                    std::size_t trials, const ChainSettings& s) {
  return estimate_outlier_probabilities(family, big_n, std::span<const Region>(&region, 1), trials, s).front();
}

struct GammaEstimate {
  int N = 0;
  std::size_t samples = 0;
  double log_gamma_X = 0.0;      // log gamma_N(X); -inf for an empty region
  double log_gamma_full = 0.0;   // log gamma_N([0,1])
  double log_gamma_full_std_err = 0.0;
  double ratio = 0.0;            // gamma_N(X) / gamma_N([0,1])
  double ratio_std_err = 0.0;
  double mean_min_spacing = 0.0;
  std::size_t recommended_cells = 0;
  std::optional<std::string> warning;
};

namespace detail {

// 20-point Gauss-Legendre rule on [-1,1].
struct PanelRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  PanelRule() {
    using rule = boost::math::quadrature::gauss<double, 20>;
    const auto& a = rule::abscissa();
    const auto& w = rule::weights();
    for (std::size_t i = 0; i < a.size(); ++i) {
      nodes.push_back(a[i]);
      weights.push_back(w[i]);
      if (a[i] != 0.0) {
        nodes.push_back(-a[i]);
        weights.push_back(w[i]);
      }
    }
  }

  static const PanelRule& get() {
    static const PanelRule rule;
    return rule;
  }
};

inline double log_sum_exp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

// log of exp(-2 n V_N(xi) + 2 sum_i log|xi - atom_i|).
inline double gamma_log_integrand(double xi, std::span<const double> atoms, const FiniteParams& p) {
  const ExtendedReal field = (-2.0 * p.n()) * potential_VN(xi, p);
  if (field.is_neg_inf()) return -std::numeric_limits<double>::infinity();
  double product = 1.0;
  int exponent = 0;
  unsigned since = 0;
  for (double a : atoms) {
    product *= std::abs(xi - a);
    if (++since == 4) {
      int e = 0;
      product = std::frexp(product, &e);
      exponent += e;
      since = 0;
    }
  }
  if (product == 0.0) return -std::numeric_limits<double>::infinity();
  return field.value() + 2.0 * (std::log(product) + exponent * std::numbers::ln2);
}

// log integral_region exp(gamma_log_integrand) d xi. Panels come from a
// uniform grid of `cells` cells, clipped to the region and split at every atom
// so each piece integrates a smooth function.
inline double log_gamma_integral(const Region& region, std::span<const double> sorted_atoms,
                                 const FiniteParams& p, std::size_t cells, std::vector<double>& scratch) {
  const PanelRule& rule = PanelRule::get();
  scratch.clear();
  const double width = 1.0 / static_cast<double>(cells);
  for (const Interval& iv : region.intervals()) {
    if (iv.hi <= iv.lo) continue;
    const auto first = static_cast<std::size_t>(std::floor(iv.lo / width));
    for (std::size_t c = std::min(first, cells - 1); c < cells; ++c) {
      const double lo = std::max(iv.lo, static_cast<double>(c) * width);
      const double hi = std::min(iv.hi, static_cast<double>(c + 1) * width);
      if (lo >= iv.hi) break;
      if (hi <= lo) continue;
      double a = lo;
      auto it = std::upper_bound(sorted_atoms.begin(), sorted_atoms.end(), lo);
      while (true) {
        const bool split = it != sorted_atoms.end() && *it < hi;
        const double b = split ? *it : hi;
        if (b > a) {
          const double half = 0.5 * (b - a);
          const double mid = 0.5 * (a + b);
          for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            scratch.push_back(std::log(half * rule.weights[q]) +
                              gamma_log_integrand(mid + half * rule.nodes[q], sorted_atoms, p));
          }
        }
        if (!split) break;
        a = b;
        ++it;
      }
    }
  }
  return log_sum_exp(scratch);
}

}  // namespace detail

/// Monte Carlo estimate of gamma_N(X) and gamma_N([0,1]) over Q_N samples.
///
/// gamma_N(X) = Q_N[ integral_X exp(-2 n V_N(xi) + 2 (n-1) int log|xi - eta| dmu_{n-1}(eta)) dxi ].
/// Everything is carried in log space with a max shift; the ratio
/// gamma_N(X)/gamma_N([0,1]) equals P_N(x_n in X).
inline GammaEstimate estimate_gamma(const ScalingFamily& family, int big_n, const Region& region,
                                    std::size_t trials, std::size_t quad_cells, const ChainSettings& s) {
  if (trials < 1) throw std::invalid_argument("estimate_gamma: trials must be >= 1");
  if (quad_cells < 1) throw std::invalid_argument("estimate_gamma: quad_cells must be >= 1");
  const FiniteParams p = family.params_at(big_n);
  if (p.n() < 2) throw std::invalid_argument("estimate_gamma: requires n(N) >= 2");

  const Region full = Region::unit();
  const bool same_as_full = region == full;
  std::vector<double> log_x;
  std::vector<double> log_full;
  log_x.reserve(trials);
  log_full.reserve(trials);
  std::vector<double> scratch;
  double spacing_sum = 0.0;
  std::vector<double> atoms;

  stream_reduced_chain(p, s, trials, [&](std::span<const double> x) {
    atoms.assign(x.begin(), x.end());
    std::sort(atoms.begin(), atoms.end());
    double min_gap = 1.0;
    for (std::size_t i = 1; i < atoms.size(); ++i) min_gap = std::min(min_gap, atoms[i] - atoms[i - 1]);
    spacing_sum += min_gap;
    const double lf = detail::log_gamma_integral(full, atoms, p, quad_cells, scratch);
    log_full.push_back(lf);
    if (same_as_full) {
      log_x.push_back(lf);
    } else if (region.empty()) {
      log_x.push_back(-std::numeric_limits<double>::infinity());
    } else {
      log_x.push_back(detail::log_gamma_integral(region, atoms, p, quad_cells, scratch));
    }
  });

  GammaEstimate g;
  g.N = big_n;
  g.samples = trials;
  const double log_count = std::log(static_cast<double>(trials));
  g.log_gamma_full = detail::log_sum_exp(log_full) - log_count;
  g.log_gamma_X = detail::log_sum_exp(log_x) - log_count;

  // Shift by the largest full-range value so the scaled integrals stay in range.
  double shift = -std::numeric_limits<double>::infinity();
  for (double v : log_full) shift = std::max(shift, v);
  detail::BatchMeans acc_full(trials);
  detail::BatchMeans acc_x(trials);
  for (std::size_t k = 0; k < trials; ++k) {
    acc_full.add(std::exp(log_full[k] - shift));
    acc_x.add(std::isfinite(log_x[k]) ? std::exp(log_x[k] - shift) : 0.0);
  }
  g.ratio = same_as_full ? 1.0 : std::exp(g.log_gamma_X - g.log_gamma_full);
  // Delta method on batch means of x_k - ratio * full_k.
  {
    detail::BatchMeans resid(trials);
    double ss = 0.0;
    for (std::size_t k = 0; k < trials; ++k) {
      const double fx = std::isfinite(log_x[k]) ? std::exp(log_x[k] - shift) : 0.0;
      const double ff = std::exp(log_full[k] - shift);
      const double r = fx - g.ratio * ff;
      resid.add(r);
      ss += r * r;
    }
    const double mean_full = acc_full.mean();
    const double iid_var = trials > 1 ? ss / static_cast<double>(trials - 1) / static_cast<double>(trials) : 0.0;
    const double var = std::max(iid_var, resid.batch_variance_of_mean());
    g.ratio_std_err = same_as_full ? 0.0 : std::sqrt(var) / mean_full;

    double ss_full = 0.0;
    for (std::size_t k = 0; k < trials; ++k) {
      const double d = std::exp(log_full[k] - shift) - mean_full;
      ss_full += d * d;
    }
    const double iid_full = trials > 1 ? ss_full / static_cast<double>(trials - 1) / static_cast<double>(trials) : 0.0;
    g.log_gamma_full_std_err = std::sqrt(std::max(iid_full, acc_full.batch_variance_of_mean())) / mean_full;
  }

  g.mean_min_spacing = spacing_sum / static_cast<double>(trials);
  const double width = 1.0 / static_cast<double>(quad_cells);
  if (p.n() >= 3 && width > g.mean_min_spacing) {
    std::size_t rec = quad_cells;
    while (1.0 / static_cast<double>(rec) > g.mean_min_spacing) rec *= 2;
    g.recommended_cells = rec;
    g.warning = "quadrature cell width " + std::to_string(width) + " exceeds mean minimal atom spacing " +
                std::to_string(g.mean_min_spacing) + "; use at least " + std::to_string(rec) + " cells";
  } else {
    g.recommended_cells = quad_cells;
  }
  return g;
}

/// Phi_N^L(xi, mu) = (V_N(xi) ^ L) - ((n-1)/n) integral log(|xi - eta| v 1/L) dmu(eta).
inline double truncated_field_functional(double xi, const GridMeasure& mu, double L, const FiniteParams& p) {
  if (!(L > 1.0)) throw std::invalid_argument("truncated_field_functional: L must be > 1");
  const ExtendedReal v = potential_VN(xi, p);
  const double capped = v.is_pos_inf() ? L : std::min(v.value(), L);
  const double factor = static_cast<double>(p.n() - 1) / static_cast<double>(p.n());
  return capped - factor * truncated_log_potential(mu, xi, 1.0 / L);
}

/// The N -> infinity limit of truncated_field_functional:
/// (V(xi) ^ L) - integral log(|xi - eta| v 1/L) dmu(eta).
inline double limit_truncated_field_functional(double xi, const GridMeasure& mu, double L, const LimitParams& lp) {
  if (!(L > 1.0)) throw std::invalid_argument("limit_truncated_field_functional: L must be > 1");
  const ExtendedReal v = potential_V(xi, lp);
  const double capped = v.is_pos_inf() ? L : std::min(v.value(), L);
  return capped - truncated_log_potential(mu, xi, 1.0 / L);
}

struct SandwichCheck {
  double lower_bound = 0.0;  // gamma(X)/gamma([0,1])
  double upper_bound = 0.0;  // n gamma(X)/gamma([0,1])
  double p_hat = 0.0;
  double lower_band = 0.0;   // allowed excess of lower_bound over p_hat
  double upper_band = 0.0;   // allowed excess of p_hat over upper_bound
  bool lower_ok = false;
  bool upper_ok = false;

  bool ok() const { return lower_ok && upper_ok; }
};

/// gamma(X)/gamma([0,1]) <= p_hat <= n gamma(X)/gamma([0,1]) within `sigmas`
/// joint standard errors. The error of p_hat is floored at the binomial
/// error of a single hit, so a run with no hits still carries an error bar.
inline SandwichCheck check_sandwich(const OutlierEstimate& p, const GammaEstimate& g, int n, double sigmas = 3.0) {
  SandwichCheck c;
  c.p_hat = p.p_hat;
  c.lower_bound = g.ratio;
  c.upper_bound = n * g.ratio;
  const double t = std::max<double>(1.0, static_cast<double>(p.trials));
  const double p_err = std::max(p.std_err, std::sqrt((1.0 / t) * (1.0 - 1.0 / t) / t));
  c.lower_band = sigmas * std::hypot(p_err, g.ratio_std_err);
  c.upper_band = sigmas * std::hypot(p_err, n * g.ratio_std_err);
  c.lower_ok = c.lower_bound <= c.p_hat + c.lower_band;
  c.upper_ok = c.p_hat <= c.upper_bound + c.upper_band;
  return c;
}

enum class FitStatus { Fitted, InsufficientData };

struct RateEstimate {
  std::vector<OutlierEstimate> per_N;
  FitStatus status = FitStatus::InsufficientData;
  double fitted_slope = 0.0;
  double slope_std_err = 0.0;
  double intercept = 0.0;
  double inf_veff = 0.0;
  double theoretical_rate = 0.0;  // -2 rho inf_X V_eff
  bool region_meets_support = false;
  std::vector<int> used_N;
  std::vector<int> needs_more_trials;
  std::string message;

  bool fitted() const { return status == FitStatus::Fitted; }
  double relative_error() const {
    return theoretical_rate == 0.0 ? std::numeric_limits<double>::infinity()
                                   : std::abs(fitted_slope - theoretical_rate) / std::abs(theoretical_rate);
  }
};

/// Whether any interval of X overlaps a support cell of mu0.
inline bool region_meets_support(const Region& region, const EquilibriumSolution& sol) {
  const UniformGrid& g = sol.mu0.grid();
  for (std::size_t i = 0; i < sol.support_mask.size(); ++i) {
    if (!sol.support_mask[i]) continue;
    for (const Interval& iv : region.intervals()) {
      if (iv.lo <= g.upper(i) && iv.hi >= g.lower(i)) return true;
    }
  }
  return false;
}

/// inf over X of V_eff: grid nodes inside X plus the interval endpoints;
/// exactly 0 when X meets the support.
inline ExtendedReal infimum_effective_potential(const Region& region, const EquilibriumSolution& sol,
                                                const LimitParams& lp) {
  if (region.empty()) return ExtendedReal::pos_inf();
  if (region_meets_support(region, sol)) return ExtendedReal(0.0);
  ExtendedReal best = ExtendedReal::pos_inf();
  for (const VeffRow& row : sol.veff_table) {
    if (region.contains(row.node)) best = min(best, row.value);
  }
  for (const Interval& iv : region.intervals()) {
    best = min(best, effective_potential(iv.lo, sol, lp));
    best = min(best, effective_potential(iv.hi, sol, lp));
  }
  // V_eff >= 0 off the support; small negatives are discretization error.
  return max(best, ExtendedReal(0.0));
}

/// Weighted least squares of log p_hat against N with weights from the delta
/// method, var(log p_hat) = (std_err / p_hat)^2. Entries need at least 5 hits
/// and at least one miss (p_hat = 1 has no spread to weight by).
inline RateEstimate fit_rate(std::span<const OutlierEstimate> estimates, const Region& region,
                             const EquilibriumSolution& sol, const LimitParams& lp) {
  RateEstimate r;
  r.per_N.assign(estimates.begin(), estimates.end());
  r.region_meets_support = region_meets_support(region, sol);
  const ExtendedReal inf_v = infimum_effective_potential(region, sol, lp);
  r.inf_veff = inf_v.to_double();
  r.theoretical_rate = (-2.0 * lp.rho() * inf_v).to_double();

  double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
  for (const OutlierEstimate& e : estimates) {
    const bool usable = e.hits >= 5 && e.hits < e.trials && e.std_err > 0.0;
    if (!usable) {
      if (e.hits < 5) r.needs_more_trials.push_back(e.N);
      continue;
    }
    r.used_N.push_back(e.N);
    const double rel = e.std_err / e.p_hat;
    const double w = 1.0 / (rel * rel);
    const double x = e.N;
    const double y = std::log(e.p_hat);
    s0 += w;
    s1 += w * x;
    s2 += w * x * x;
    t0 += w * y;
    t1 += w * x * y;
  }
  if (r.used_N.size() < 3) {
    r.status = FitStatus::InsufficientData;
    r.message = "fit refused: " + std::to_string(r.used_N.size()) +
                " usable N values (need 3 with hits >= 5 and at least one miss)";
    if (!r.needs_more_trials.empty()) {
      r.message += "; more trials needed at N =";
      for (int n : r.needs_more_trials) r.message += " " + std::to_string(n);
    }
    return r;
  }
  const double det = s0 * s2 - s1 * s1;
  r.fitted_slope = (s0 * t1 - s1 * t0) / det;
  r.intercept = (s2 * t0 - s1 * t1) / det;
  r.slope_std_err = std::sqrt(s0 / det);
  r.status = FitStatus::Fitted;
  r.message = "fitted on " + std::to_string(r.used_N.size()) + " N values";
  return r;
}

}  // namespace jacobi_ldp

#endif  // JACOBI_LDP_LDP_HPP
