#ifndef JACOBI_LDP_TESTS_ORACLES_SELBERG_HPP
#define JACOBI_LDP_TESTS_ORACLES_SELBERG_HPP

#include <cmath>

namespace oracle {

// log of integral over [0,1]^n of prod x_i^a (1-x_i)^b prod_{i<j} |x_i-x_j|^2.
inline double log_selberg(int n, double a, double b) {
  double s = 0.0;
  for (int j = 0; j < n; ++j) {
    s += std::lgamma(a + 1 + j) + std::lgamma(b + 1 + j) + std::lgamma(j + 2.0) - std::lgamma(a + b + n + j + 1) -
         std::lgamma(2.0);
  }
  return s;
}

// gamma_N([0,1]) for field exponents kappa(N) = a, lambda(N) = b: the ratio
// of the n- and (n-1)-particle normalizations with the same a, b.
inline double log_gamma_full(int n, double a, double b) { return log_selberg(n, a, b) - log_selberg(n - 1, a, b); }

}  // namespace oracle

#endif
