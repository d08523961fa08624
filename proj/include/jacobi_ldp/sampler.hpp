#ifndef JACOBI_LDP_SAMPLER_HPP
#define JACOBI_LDP_SAMPLER_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "grid_measure.hpp"
#include "rng.hpp"

namespace jacobi_ldp {

struct ChainSettings {
  std::size_t burn_in = 0;      // sweeps
  std::size_t thinning = 1;     // sweeps between retained states
  double initial_step = 0.1;    // proposal half-width
  double target_acceptance = 0.4;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;     // xoshiro jump count; distinct per concurrent chain

  /// burn_in = 200 n sweeps, thinning = n sweeps.
  static ChainSettings defaults_for(int n, std::uint64_t seed, std::uint64_t stream = 0) {
    ChainSettings s;
    s.burn_in = 200 * static_cast<std::size_t>(n);
    s.thinning = static_cast<std::size_t>(n);
    s.initial_step = std::min(0.5, 1.0 / n);
    s.target_acceptance = 0.4;
    s.seed = seed;
    s.stream = stream;
    return s;
  }

  void validate() const {
    if (thinning < 1) throw std::invalid_argument("ChainSettings: thinning must be >= 1");
    if (!(initial_step > 0.0) || !std::isfinite(initial_step)) {
      throw std::invalid_argument("ChainSettings: initial_step must be > 0");
    }
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
      throw std::invalid_argument("ChainSettings: target_acceptance must lie in (0,1)");
    }
  }
};

struct ChainDiagnostics {
  double acceptance_rate = 0.0;  // over post-burn-in moves
  double final_step = 0.0;
  std::size_t sweeps_run = 0;
  double max_resync_drift = 0.0;  // largest |incremental - recomputed| log-density seen
};

namespace detail {

// Splits v > 0 into m * 2^e with m in [0.5, 1) using the IEEE bit layout;
// zero and subnormals fall back to std::frexp.
inline double split_exponent(double v, long& e) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  const auto biased = static_cast<long>((bits >> 52) & 0x7ff);
  if (biased == 0 || biased == 0x7ff) {
    int ei = 0;
    const double m = std::frexp(v, &ei);
    e += ei;
    return m;
  }
  e += biased - 1022;
  return std::bit_cast<double>((bits & ~(std::uint64_t{0x7ff} << 52)) | (std::uint64_t{1022} << 52));
}

// log(prod_j |y - x_j| / prod_j |x - x_j|) over xs, or -inf when y hits a
// point of xs. Four independent product lanes for numerator and
// denominator; lanes are renormalized every 16 factors so nothing underflows.
inline ExtendedReal log_distance_ratio(std::span<const double> a, std::span<const double> b, double y, double x) {
  double num[4] = {1.0, 1.0, 1.0, 1.0};
  double den[4] = {1.0, 1.0, 1.0, 1.0};
  long exponent = 0;  // exponent of num minus exponent of den
  auto renormalize = [&] {
    for (int k = 0; k < 4; ++k) {
      long en = 0;
      long ed = 0;
      num[k] = num[k] == 0.0 ? 0.0 : split_exponent(num[k], en);
      den[k] = split_exponent(den[k], ed);
      exponent += en - ed;
    }
  };
  for (std::span<const double> xs : {a, b}) {
    std::size_t j = 0;
    while (j < xs.size()) {
      const std::size_t block_end = std::min(xs.size(), j + 64);
      for (; j + 4 <= block_end; j += 4) {
        for (std::size_t k = 0; k < 4; ++k) {
          num[k] *= std::abs(y - xs[j + k]);
          den[k] *= std::abs(x - xs[j + k]);
        }
      }
      for (; j < block_end; ++j) {
        num[0] *= std::abs(y - xs[j]);
        den[0] *= std::abs(x - xs[j]);
      }
      renormalize();
    }
  }
  renormalize();
  // Each lane now lies in [0.5, 1), so the lane products cannot underflow.
  const double n_all = (num[0] * num[1]) * (num[2] * num[3]);
  if (n_all == 0.0) return ExtendedReal::neg_inf();
  const double d_all = (den[0] * den[1]) * (den[2] * den[3]);
  return ExtendedReal(std::log(n_all / d_all) + static_cast<double>(exponent) * std::numbers::ln2);
}

}  // namespace detail

/// Single-coordinate random-walk Metropolis for the Jacobi log-gas.
///
/// The target is exp(sum_i c(x_i) + 2 sum_{i<j} log|x_i - x_j|) on [0,1]^m with
/// c(x) = -2 M V_N(x) for field parameters p and field multiplier M. With
/// m = p.n and M = p.n this is P_N; with m = p.n - 1 and M = p.n it is the
/// reduced measure Q_N.
///
/// A sweep visits the coordinates in order; proposals are uniform on
/// [x - step, x + step] reflected at 0 and 1, which keeps them symmetric. The
/// step adapts by factors of 1.1 per 100-sweep window during burn-in only.
class MetropolisChain {
 public:
  static constexpr std::size_t kAdaptWindow = 100;
  static constexpr std::size_t kResyncInterval = 1000;

  MetropolisChain(std::size_t particles, int field_multiplier, FiniteParams field, const ChainSettings& settings)
      : field_params_(field), multiplier_(field_multiplier), settings_(settings),
        rng_(Xoshiro256::for_stream(settings.seed, settings.stream)), step_(std::min(settings.initial_step, 1.0)) {
    settings_.validate();
    if (particles < 1) throw std::invalid_argument("MetropolisChain: need at least one particle");
    x_.resize(particles);
    for (std::size_t i = 0; i < particles; ++i) {
      x_[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(particles);
    }
    refresh_field_cache();
    log_density_ = recompute_log_density().value();
  }

  std::span<const double> state() const { return x_; }
  std::size_t particles() const { return x_.size(); }
  double log_density() const { return log_density_; }
  double step() const { return step_; }
  std::size_t sweeps_run() const { return sweeps_; }

  /// Log-weight of one coordinate in the external field.
  ExtendedReal field_log_weight(double x) const { return (-2.0 * multiplier_) * potential_VN(x, field_params_); }

  ExtendedReal recompute_log_density() const {
    ExtendedReal total(0.0);
    double pairs = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      total += field_log_weight(x_[i]);
      for (std::size_t j = i + 1; j < x_.size(); ++j) {
        const double d = std::abs(x_[i] - x_[j]);
        if (d == 0.0) return ExtendedReal::neg_inf();
        pairs += std::log(d);
      }
    }
    return total + ExtendedReal(2.0 * pairs);
  }

  /// Log-density change if coordinate i moved to y. Touches only the
  /// n - 1 pair terms involving i.
  ExtendedReal log_density_change(std::size_t i, double y) const {
    if (!(y >= 0.0 && y <= 1.0)) return ExtendedReal::neg_inf();
    const ExtendedReal field_new = field_log_weight(y);
    if (field_new.is_neg_inf()) return field_new;
    const double xi = x_[i];
    const std::span<const double> all(x_);
    const ExtendedReal ratio = detail::log_distance_ratio(all.first(i), all.subspan(i + 1), y, xi);
    if (ratio.is_neg_inf()) return ratio;
    const double pair_change = 2.0 * ratio.value();
    return ExtendedReal(field_new.value() - field_[i] + pair_change);
  }

  /// Metropolis decision for moving coordinate i to y given a uniform draw u
  /// in [0,1). Returns whether the move was accepted (and applies it).
  bool try_move(std::size_t i, double y, double u) {
    const ExtendedReal delta = log_density_change(i, y);
    if (delta.is_neg_inf()) return false;
    const double d = delta.value();
    if (d < 0.0 && !(u < std::exp(d))) return false;
    x_[i] = y;
    field_[i] = field_log_weight(y).value();
    log_density_ += d;
    return true;
  }

  double reflect(double y) const {
    if (y < 0.0) y = -y;
    if (y > 1.0) y = 2.0 - y;
    return y;
  }

  /// One systematic sweep; returns the number of accepted moves.
  std::size_t sweep() {
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double y = reflect(x_[i] + step_ * (2.0 * rng_.uniform() - 1.0));
      if (try_move(i, y, rng_.uniform())) ++accepted;
    }
    ++sweeps_;
    if (sweeps_ % kResyncInterval == 0) resync();
    return accepted;
  }

  void burn_in() {
    std::size_t window_accepted = 0;
    for (std::size_t s = 1; s <= settings_.burn_in; ++s) {
      window_accepted += sweep();
      if (s % kAdaptWindow == 0) {
        const double rate = static_cast<double>(window_accepted) / static_cast<double>(kAdaptWindow * x_.size());
        step_ = rate > settings_.target_acceptance ? step_ * 1.1 : step_ / 1.1;
        step_ = std::clamp(step_, 1e-12, 1.0);
        window_accepted = 0;
      }
    }
  }

  /// Runs burn-in, then calls visit(state) for `count` states spaced by the
  /// thinning interval. The step stays frozen after burn-in.
  template <class Visitor>
  ChainDiagnostics run(std::size_t count, Visitor&& visit) {
    burn_in();
    std::size_t accepted = 0;
    std::size_t moves = 0;
    for (std::size_t k = 0; k < count; ++k) {
      for (std::size_t t = 0; t < settings_.thinning; ++t) {
        accepted += sweep();
        moves += x_.size();
      }
      visit(std::span<const double>(x_));
    }
    ChainDiagnostics d;
    d.acceptance_rate = moves == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(moves);
    d.final_step = step_;
    d.sweeps_run = sweeps_;
    d.max_resync_drift = max_drift_;
    return d;
  }

  double max_resync_drift() const { return max_drift_; }

 private:
  void refresh_field_cache() {
    field_.resize(x_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) field_[i] = field_log_weight(x_[i]).value();
  }

  void resync() {
    const double fresh = recompute_log_density().value();
    max_drift_ = std::max(max_drift_, std::abs(fresh - log_density_));
    log_density_ = fresh;
  }

  FiniteParams field_params_;
  std::vector<double> field_;  // field_log_weight of each current coordinate
  int multiplier_;
  ChainSettings settings_;
  Xoshiro256 rng_;
  std::vector<double> x_;
  double log_density_ = 0.0;
  double step_;
  std::size_t sweeps_ = 0;
  double max_drift_ = 0.0;
};

struct ChainOutput {
  std::vector<Configuration> samples;
  ChainDiagnostics diagnostics;
};

/// Chain targeting P_N, streaming each retained state to `visit`.
template <class Visitor>
ChainDiagnostics stream_chain(const FiniteParams& p, const ChainSettings& s, std::size_t count, Visitor&& visit) {
  MetropolisChain chain(static_cast<std::size_t>(p.n()), p.n(), p, s);
  return chain.run(count, std::forward<Visitor>(visit));
}

/// Chain targeting Q_N: n - 1 particles in the n-particle field -2 n V_N^{(n)}.
template <class Visitor>
ChainDiagnostics stream_reduced_chain(const FiniteParams& p, const ChainSettings& s, std::size_t count,
                                      Visitor&& visit) {
  if (p.n() < 2) throw std::invalid_argument("reduced chain requires n >= 2");
  MetropolisChain chain(static_cast<std::size_t>(p.n() - 1), p.n(), p, s);
  return chain.run(count, std::forward<Visitor>(visit));
}

inline ChainOutput sample_chain(const FiniteParams& p, const ChainSettings& s, std::size_t count) {
  if (count < 1) throw std::invalid_argument("sample_chain: count must be >= 1");
  ChainOutput out;
  out.samples.reserve(count);
  out.diagnostics = stream_chain(p, s, count, [&](std::span<const double> x) {
    out.samples.emplace_back(std::vector<double>(x.begin(), x.end()));
  });
  return out;
}

inline ChainOutput sample_reduced_chain(const FiniteParams& p, const ChainSettings& s, std::size_t count) {
  if (count < 1) throw std::invalid_argument("sample_reduced_chain: count must be >= 1");
  ChainOutput out;
  out.samples.reserve(count);
  out.diagnostics = stream_reduced_chain(p, s, count, [&](std::span<const double> x) {
    out.samples.emplace_back(std::vector<double>(x.begin(), x.end()));
  });
  return out;
}

/// Empirical measure (1/n) sum delta_{x_i}, binned onto `grid`.
inline GridMeasure empirical_measure(const Configuration& c, const UniformGrid& grid) {
  if (c.empty()) throw std::invalid_argument("empirical_measure: empty configuration");
  std::vector<double> w(grid.cells(), 0.0);
  const double mass = 1.0 / static_cast<double>(c.size());
  for (double x : c.positions()) w[grid.cell_of(x)] += mass;
  return GridMeasure(grid, std::move(w));
}

}  // namespace jacobi_ldp

#endif  // JACOBI_LDP_SAMPLER_HPP
