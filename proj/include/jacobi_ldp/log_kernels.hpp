#ifndef JACOBI_LDP_LOG_KERNELS_HPP
#define JACOBI_LDP_LOG_KERNELS_HPP

#include <cmath>
#include <stdexcept>

// Closed-form integrals of the logarithmic kernel used to discretize
// measures on uniform cells without evaluating log at a singular point.

namespace jacobi_ldp::kernels {

/// Antiderivative of log|t|: t log|t| - t, continuous with value 0 at t = 0.
inline double log_antiderivative(double t) {
  if (t == 0.0) return 0.0;
  return t * std::log(std::abs(t)) - t;
}

/// F_eta(x) = integral_0^x log|xi - eta| d xi.
inline double F(double eta, double x) { return log_antiderivative(x - eta) - log_antiderivative(-eta); }

/// Second antiderivative of log|t|: t^2 log|t| / 2 - 3 t^2 / 4.
inline double log_second_antiderivative(double t) {
  if (t == 0.0) return 0.0;
  return 0.5 * t * t * std::log(std::abs(t)) - 0.75 * t * t;
}

/// integral_a^b log|t| dt.
inline double log_integral(double a, double b) { return log_antiderivative(b) - log_antiderivative(a); }

/// Antiderivative of log(max(|t|, floor)), odd in t, zero at t = 0.
inline double truncated_log_antiderivative(double t, double floor) {
  const double at = std::abs(t);
  const double value = at <= floor ? at * std::log(floor) : at * std::log(at) - at + floor;
  return t < 0 ? -value : value;
}

/// Mean of log|x - y| for y uniform on [lo, hi].
inline double cell_mean_log(double x, double lo, double hi) {
  return (log_antiderivative(hi - x) - log_antiderivative(lo - x)) / (hi - lo);
}

/// Mean of log(max(|x - y|, floor)) for y uniform on [lo, hi].
inline double cell_mean_truncated_log(double x, double lo, double hi, double floor) {
  return (truncated_log_antiderivative(hi - x, floor) - truncated_log_antiderivative(lo - x, floor)) / (hi - lo);
}

/// Mean of -log|u - v| for u, v uniform on two cells of width h whose
/// left edges are k cells apart. Diagonal: -log h + 3/2.
inline double galerkin_kernel(long k, double h) {
  k = k < 0 ? -k : k;
  if (k == 0) return -std::log(h) + 1.5;
  if (k < 16) {
    const double kd = static_cast<double>(k);
    const double second_difference = log_second_antiderivative((kd + 1) * h) -
                                     2.0 * log_second_antiderivative(kd * h) +
                                     log_second_antiderivative((kd - 1) * h);
    return -second_difference / (h * h);
  }
  // Even moments of the triangular difference law: E[log(1 + s/(kh))] series.
  const double inv2 = 1.0 / (static_cast<double>(k) * static_cast<double>(k));
  const double series = inv2 * (1.0 / 12 + inv2 * (1.0 / 60 + inv2 * (1.0 / 168 + inv2 / 360)));
  return -std::log(static_cast<double>(k) * h) + series;
}

/// Mean of -log|x_i - v| for v uniform on a cell of width h and x_i the
/// midpoint of a cell k cells away. Diagonal: -log(h/2) + 1.
inline double collocation_kernel(long k, double h) {
  k = k < 0 ? -k : k;
  if (k == 0) return -std::log(0.5 * h) + 1.0;
  if (k < 16) {
    const double c = static_cast<double>(k) * h;
    return -(log_antiderivative(c + 0.5 * h) - log_antiderivative(c - 0.5 * h)) / h;
  }
  const double inv2 = 1.0 / (static_cast<double>(k) * static_cast<double>(k));
  const double series = inv2 * (1.0 / 24 + inv2 * (1.0 / 320 + inv2 * (1.0 / 2688 + inv2 / 18432)));
  return -std::log(static_cast<double>(k) * h) + series;
}

}  // namespace jacobi_ldp::kernels

#endif  // JACOBI_LDP_LOG_KERNELS_HPP
