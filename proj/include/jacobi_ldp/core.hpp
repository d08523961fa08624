#ifndef JACOBI_LDP_CORE_HPP
#define JACOBI_LDP_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "extended_real.hpp"

namespace jacobi_ldp {

/// Finite-N parameters (n, kappa(N), lambda(N)) of the Jacobi log-gas.
class FiniteParams {
 public:
  FiniteParams(int n, double kappa_n, double lambda_n) : n_(n), kappa_n_(kappa_n), lambda_n_(lambda_n) {
    if (n < 1) throw std::invalid_argument("FiniteParams: n must be >= 1");
    if (!(kappa_n >= 0.0) || !std::isfinite(kappa_n)) throw std::invalid_argument("FiniteParams: kappaN must be >= 0");
    if (!(lambda_n >= 0.0) || !std::isfinite(lambda_n)) throw std::invalid_argument("FiniteParams: lambdaN must be >= 0");
  }

  int n() const { return n_; }
  double kappa_n() const { return kappa_n_; }
  double lambda_n() const { return lambda_n_; }

  friend bool operator==(const FiniteParams&, const FiniteParams&) = default;

 private:
  int n_;
  double kappa_n_;
  double lambda_n_;
};

/// Limiting ratios rho = lim n/N, kappa = lim kappa(N)/N, lambda = lim lambda(N)/N.
class LimitParams {
 public:
  LimitParams(double rho, double kappa, double lambda) : rho_(rho), kappa_(kappa), lambda_(lambda) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("LimitParams: rho must be > 0");
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("LimitParams: kappa must be >= 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("LimitParams: lambda must be >= 0");
  }

  double rho() const { return rho_; }
  double kappa() const { return kappa_; }
  double lambda() const { return lambda_; }

  friend bool operator==(const LimitParams&, const LimitParams&) = default;

 private:
  double rho_;
  double kappa_;
  double lambda_;
};

/// The sequences n(N), kappa(N), lambda(N) sampled at finitely many N, together
/// with their declared limits.
class ScalingFamily {
 public:
  struct Entry {
    int N;
    int n;
    double kappa_n;
    double lambda_n;
  };

  // The consistency check compares the largest stored N against the limits.
  ScalingFamily(std::vector<Entry> entries, LimitParams limits, double tolerance)
      : entries_(std::move(entries)), limits_(limits), tolerance_(tolerance) {
    if (entries_.empty()) throw std::invalid_argument("ScalingFamily: no entries");
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) { return a.N < b.N; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const Entry& e = entries_[i];
      if (e.N < 1) throw std::invalid_argument("ScalingFamily: N must be >= 1");
      if (i > 0 && entries_[i - 1].N == e.N) throw std::invalid_argument("ScalingFamily: duplicate N");
      FiniteParams(e.n, e.kappa_n, e.lambda_n);  // validates the entry
    }
    const Entry& last = entries_.back();
    const double big_n = last.N;
    if (std::abs(last.n / big_n - limits_.rho()) > tolerance_ ||
        std::abs(last.kappa_n / big_n - limits_.kappa()) > tolerance_ ||
        std::abs(last.lambda_n / big_n - limits_.lambda()) > tolerance_) {
      throw std::invalid_argument("ScalingFamily: largest N is inconsistent with the declared limits");
    }
  }

  /// n = ceil(rho N), kappa(N) = kappa N, lambda(N) = lambda N.
  static ScalingFamily exact_ratio(const LimitParams& limits, std::span<const int> sizes) {
    std::vector<Entry> entries;
    int largest = 1;
    for (int big_n : sizes) {
      if (big_n < 1) throw std::invalid_argument("ScalingFamily: N must be >= 1");
      // Subtracting a few ulps keeps rho*N that is integral up to rounding from jumping up by one.
      const double scaled = limits.rho() * big_n;
      const int n = std::max(1, static_cast<int>(std::ceil(scaled - 1e-9 * scaled)));
      entries.push_back({big_n, n, limits.kappa() * big_n, limits.lambda() * big_n});
      largest = std::max(largest, big_n);
    }
    return ScalingFamily(std::move(entries), limits, 1.0 / largest + 1e-12);
  }

  const std::vector<Entry>& entries() const { return entries_; }
  const LimitParams& limits() const { return limits_; }
  double tolerance() const { return tolerance_; }

  bool contains(int big_n) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.N == big_n; });
  }

  FiniteParams params_at(int big_n) const {
    for (const Entry& e : entries_) {
      if (e.N == big_n) return FiniteParams(e.n, e.kappa_n, e.lambda_n);
    }
    throw std::out_of_range("ScalingFamily: N = " + std::to_string(big_n) + " not in family");
  }

 private:
  std::vector<Entry> entries_;
  LimitParams limits_;
  double tolerance_;
};

/// A point of [0,1]^n stored in ascending order. The Gibbs density is
/// symmetric under permutations, so sorting loses nothing.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::vector<double> positions) : positions_(std::move(positions)) {
    for (double x : positions_) {
      if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("Configuration: coordinate outside [0,1]");
    }
    std::sort(positions_.begin(), positions_.end());
  }

  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }
  double operator[](std::size_t i) const { return positions_[i]; }
  std::span<const double> positions() const { return positions_; }

  friend bool operator==(const Configuration&, const Configuration&) = default;

 private:
  std::vector<double> positions_;
};

/// (n, kappa(N), lambda(N)) of the beta-Jacobi ensemble with density
/// prod x^a (1-x)^b prod |x_i - x_j|^beta.
inline FiniteParams beta_jacobi_to_params(int big_n, double a, double b, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta_jacobi_to_params: beta must be > 0");
  return FiniteParams(big_n, 2.0 * a / beta, 2.0 * b / beta);
}

namespace detail {

inline void check_unit_interval(double x, const char* who) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error(std::string(who) + ": x outside [0,1]");
}

// c_left * log x + c_right * log(1 - x), with 0 * log 0 = 0.
inline ExtendedReal log_field(double x, double c_left, double c_right) {
  double acc = 0.0;
  if (c_left > 0.0) {
    if (x == 0.0) return ExtendedReal::neg_inf();
    acc += c_left * std::log(x);
  }
  if (c_right > 0.0) {
    if (x == 1.0) return ExtendedReal::neg_inf();
    acc += c_right * std::log1p(-x);
  }
  return ExtendedReal(acc);
}

}  // namespace detail

/// V_N(x) = -kappa(N)/(2n) log x - lambda(N)/(2n) log(1-x).
inline ExtendedReal potential_VN(double x, const FiniteParams& p) {
  detail::check_unit_interval(x, "potential_VN");
  return (-1.0 / (2.0 * p.n())) * detail::log_field(x, p.kappa_n(), p.lambda_n());
}

/// V(x) = -kappa/(2 rho) log x - lambda/(2 rho) log(1-x).
inline ExtendedReal potential_V(double x, const LimitParams& lp) {
  detail::check_unit_interval(x, "potential_V");
  return (-1.0 / (2.0 * lp.rho())) * detail::log_field(x, lp.kappa(), lp.lambda());
}

/// Log of the Gibbs weight without the normalizer:
/// -2n sum V_N(x_i) + 2 sum_{i<j} log|x_i - x_j|.
inline ExtendedReal log_unnormalized_density(std::span<const double> x, const FiniteParams& p) {
  if (x.size() != static_cast<std::size_t>(p.n())) {
    throw std::invalid_argument("log_unnormalized_density: configuration has " + std::to_string(x.size()) +
                                " coordinates, params expect " + std::to_string(p.n()));
  }
  ExtendedReal total(0.0);
  for (double xi : x) {
    total += (-2.0 * p.n()) * potential_VN(xi, p);
    if (total.is_neg_inf()) return total;
  }
  double pairs = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double d = std::abs(x[i] - x[j]);
      if (d == 0.0) return ExtendedReal::neg_inf();
      pairs += std::log(d);
    }
  }
  return total + ExtendedReal(2.0 * pairs);
}

inline ExtendedReal log_unnormalized_density(const Configuration& c, const FiniteParams& p) {
  return log_unnormalized_density(c.positions(), p);
}

}  // namespace jacobi_ldp

#endif  // JACOBI_LDP_CORE_HPP
