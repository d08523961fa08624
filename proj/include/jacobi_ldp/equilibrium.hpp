#ifndef JACOBI_LDP_EQUILIBRIUM_HPP
#define JACOBI_LDP_EQUILIBRIUM_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "extended_real.hpp"
#include "grid_measure.hpp"
#include "log_kernels.hpp"

namespace jacobi_ldp {

/// U(x) = integral log|x - y| d mu(y), with each cell integrated exactly.
inline ExtendedReal log_potential(const GridMeasure& mu, double x) {
  const UniformGrid& g = mu.grid();
  double acc = 0.0;
  for (std::size_t j = 0; j < mu.cells(); ++j) {
    const double w = mu.weight(j);
    if (w == 0.0) continue;
    acc += w * kernels::cell_mean_log(x, g.lower(j), g.upper(j));
  }
  return ExtendedReal(acc);
}

/// Integral of log(max(|x - y|, floor)) d mu(y).
inline double truncated_log_potential(const GridMeasure& mu, double x, double floor) {
  const UniformGrid& g = mu.grid();
  double acc = 0.0;
  for (std::size_t j = 0; j < mu.cells(); ++j) {
    const double w = mu.weight(j);
    if (w == 0.0) continue;
    acc += w * kernels::cell_mean_truncated_log(x, g.lower(j), g.upper(j), floor);
  }
  return acc;
}

/// H_{x,delta}(eta): mean of log|xi - eta| over xi in [x - delta, x + delta].
inline double smoothing_kernel_H(double x, double delta, double eta) {
  if (!(delta > 0.0)) throw std::invalid_argument("smoothing_kernel_H: delta must be > 0");
  return (kernels::F(eta, x + delta) - kernels::F(eta, x - delta)) / (2.0 * delta);
}

namespace detail {

// Cell means of log x and log(1 - x), exact.
inline double cell_mean_log_left(const UniformGrid& g, std::size_t i) {
  return kernels::log_integral(g.lower(i), g.upper(i)) / g.width();
}
inline double cell_mean_log_right(const UniformGrid& g, std::size_t i) {
  return kernels::log_integral(1.0 - g.upper(i), 1.0 - g.lower(i)) / g.width();
}

// Cell mean of V; finite even on the endpoint cells.
inline double cell_mean_V(const UniformGrid& g, std::size_t i, const LimitParams& lp) {
  double acc = 0.0;
  if (lp.kappa() > 0.0) acc += lp.kappa() * cell_mean_log_left(g, i);
  if (lp.lambda() > 0.0) acc += lp.lambda() * cell_mean_log_right(g, i);
  return -acc / (2.0 * lp.rho());
}

// w^T K w for the Galerkin (double cell average) -log kernel.
inline double galerkin_self_energy(const GridMeasure& mu) {
  const std::size_t m = mu.cells();
  const double h = mu.cell_width();
  std::vector<double> table(m);
  for (std::size_t k = 0; k < m; ++k) table[k] = kernels::galerkin_kernel(static_cast<long>(k), h);
  const auto w = mu.weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (w[i] == 0.0) continue;
    double row = table[0] * w[i];
    for (std::size_t j = i + 1; j < m; ++j) row += 2.0 * table[j - i] * w[j];
    acc += w[i] * row;
  }
  return acc;
}

// integral V d mu with cell-exact field integrals.
inline double field_energy(const GridMeasure& mu, const LimitParams& lp) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.cells(); ++i) {
    if (mu.weight(i) != 0.0) acc += mu.weight(i) * cell_mean_V(mu.grid(), i, lp);
  }
  return acc;
}

}  // namespace detail

/// -rho^2 iint log|x-y| dmu dmu - rho int (kappa log x + lambda log(1-x)) dmu,
/// i.e. the rate functional without its additive constant.
inline ExtendedReal energy_functional(const GridMeasure& mu, const LimitParams& lp) {
  const double rho = lp.rho();
  // -rho int (kappa log x + lambda log(1-x)) = 2 rho^2 int V.
  return ExtendedReal(rho * rho * detail::galerkin_self_energy(mu) + 2.0 * rho * rho * detail::field_energy(mu, lp));
}

struct EquilibriumConstants {
  double B;
  double D;
};

/// B from I(mu0) = 0 and D = -B - int V dmu0.
inline EquilibriumConstants compute_constants(const GridMeasure& mu0, const LimitParams& lp) {
  const double log_energy = -detail::galerkin_self_energy(mu0);  // iint log|x-y|
  const double v_mean = detail::field_energy(mu0, lp);
  // (1/rho) int (kappa log x + lambda log(1-x)) = -2 int V.
  const double b = log_energy - 2.0 * v_mean;
  return {b, -b - v_mean};
}

enum class SolverStatus { Converged, GridLimited, MaxIterations };

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::GridLimited: return "grid_limited";
    default: return "max_iterations";
  }
}

struct VeffRow {
  double node;
  ExtendedReal value;
};

struct EquilibriumSolution {
  GridMeasure mu0;
  double B = 0.0;
  double D = 0.0;
  std::vector<VeffRow> veff_table;
  std::vector<bool> support_mask;
  double kkt_residual = 0.0;
  // Discrete stationarity gap of the solver's own objective.
  double discrete_gap = 0.0;
  SolverStatus status = SolverStatus::MaxIterations;
  std::size_t iterations = 0;
  std::vector<double> energy_history;
  std::vector<double> min_weight_history;
  std::vector<double> mass_error_history;

  bool converged() const { return status == SolverStatus::Converged; }
  double support_threshold() const { return 0.01 / static_cast<double>(mu0.cells()); }
  /// Outermost support nodes (first and last node flagged in support_mask).
  std::pair<double, double> support_hull() const {
    double lo = 1.0;
    double hi = 0.0;
    for (std::size_t i = 0; i < support_mask.size(); ++i) {
      if (!support_mask[i]) continue;
      lo = std::min(lo, mu0.node(i));
      hi = std::max(hi, mu0.node(i));
    }
    return {lo, hi};
  }
};

/// V_eff(x) = V(x) - integral log|x-y| dmu0(y) - D.
inline ExtendedReal effective_potential(double x, const EquilibriumSolution& sol, const LimitParams& lp) {
  return potential_V(x, lp) - log_potential(sol.mu0, x) - ExtendedReal(sol.D);
}

/// (V(x) ^ M) - integral log(|x-y| v 1/M) dmu0(y) - D. Finite for every x in [0,1].
inline double truncated_effective_potential(double x, double M, const EquilibriumSolution& sol,
                                            const LimitParams& lp) {
  if (!(M > 1.0)) throw std::invalid_argument("truncated_effective_potential: M must be > 1");
  const ExtendedReal v = potential_V(x, lp);
  const double capped = v.is_pos_inf() ? M : std::min(v.value(), M);
  return capped - truncated_log_potential(sol.mu0, x, 1.0 / M) - sol.D;
}

/// I(mu) = energy_functional(mu) + rho^2 B.
inline ExtendedReal rate_function(const GridMeasure& mu, const EquilibriumSolution& sol, const LimitParams& lp) {
  return energy_functional(mu, lp) + ExtendedReal(lp.rho() * lp.rho() * sol.B);
}

namespace detail {

// Discrete problem minimized by the solver:
//   E(w) = rho^2 (w^T A w + 2 w^T v),  A_ij = collocation_kernel(i - j), v_i = V(x_i).
// Its gradient is 2 rho^2 (A w + v) and (A w + v)_i = V(x_i) - U_w(x_i), so the
// discrete KKT conditions are the Frostman conditions at the nodes.
class DiscreteEnergy {
 public:
  DiscreteEnergy(const LimitParams& lp, std::size_t cells) : grid_(cells), rho2_(lp.rho() * lp.rho()) {
    const double h = grid_.width();
    const auto m = static_cast<Eigen::Index>(cells);
    std::vector<double> table(cells);
    for (std::size_t k = 0; k < cells; ++k) table[k] = kernels::collocation_kernel(static_cast<long>(k), h);
    a_.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) a_(i, j) = table[static_cast<std::size_t>(std::abs(i - j))];
    }
    v_.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) v_(i) = potential_V(grid_.node(static_cast<std::size_t>(i)), lp).value();
  }

  const UniformGrid& grid() const { return grid_; }
  const Eigen::MatrixXd& matrix() const { return a_; }
  const Eigen::VectorXd& field() const { return v_; }

  // Reduced gradient A w + v.
  Eigen::VectorXd reduced_gradient(const Eigen::VectorXd& w) const { return a_ * w + v_; }

  double energy(const Eigen::VectorXd& w) const { return rho2_ * (w.dot(a_ * w) + 2.0 * w.dot(v_)); }

 private:
  UniformGrid grid_;
  double rho2_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd v_;
};

// Stationarity gap: spread of the reduced gradient over the support and the
// worst violation below the multiplier elsewhere.
inline double stationarity_gap(const Eigen::VectorXd& w, const Eigen::VectorXd& g, double support_floor) {
  const double c = w.dot(g) / w.sum();
  double gap = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) > support_floor) gap = std::max(gap, std::abs(g(i) - c));
    gap = std::max(gap, c - g(i));
  }
  return gap;
}

}  // namespace detail

/// Minimizes the discretized weighted log-energy over the probability simplex
/// on a uniform grid of `cells` cells.
///
/// Phase one is entropic mirror descent w <- w exp(-eta g) / Z with eta
/// chosen by backtracking so that the energy never increases. Phase two
/// polishes with a primal active-set method: exact minimization on the face
/// spanned by the current support, a ratio test when that minimizer leaves
/// the simplex, and re-admission of nodes whose gradient falls below the
/// Lagrange multiplier. Both phases keep the iterate feasible and the energy
/// non-increasing.
inline EquilibriumSolution solve_equilibrium(const LimitParams& lp, std::size_t cells, double tol,
                                             std::size_t max_iters) {
  if (cells < 64) throw std::invalid_argument("solve_equilibrium: need at least 64 cells");
  if (!(tol > 0.0)) throw std::invalid_argument("solve_equilibrium: tol must be > 0");
  if (max_iters < 1) throw std::invalid_argument("solve_equilibrium: max_iters must be >= 1");

  const detail::DiscreteEnergy problem(lp, cells);
  const auto m = static_cast<Eigen::Index>(cells);
  const double stationarity_tol = 1e-11;
  const double tiny_weight = 1e-14;

  std::vector<double> energies;
  std::vector<double> min_weights;
  std::vector<double> mass_errors;
  auto record = [&](const Eigen::VectorXd& w, double e) {
    energies.push_back(e);
    min_weights.push_back(w.minCoeff());
    mass_errors.push_back(std::abs(w.sum() - 1.0));
  };

  Eigen::VectorXd w = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  double energy = problem.energy(w);
  record(w, energy);

  std::size_t iter = 0;
  bool done = false;

  // Phase one: mirror descent.
  const std::size_t mirror_budget = std::min<std::size_t>(max_iters, 300);
  double eta = 1.0;
  for (; iter < mirror_budget; ++iter) {
    const Eigen::VectorXd g = problem.reduced_gradient(w);
    if (detail::stationarity_gap(w, g, tiny_weight) < stationarity_tol) {
      done = true;
      break;
    }
    const double g_min = g.minCoeff();
    bool accepted = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::VectorXd trial = w.array() * (-eta * (g.array() - g_min)).exp();
      trial /= trial.sum();
      const double e_trial = problem.energy(trial);
      if (e_trial <= energy) {
        w = std::move(trial);
        energy = e_trial;
        accepted = true;
        eta *= 1.5;
        break;
      }
      eta *= 0.5;
    }
    record(w, energy);
    if (!accepted) break;  // no descent possible at machine precision
  }

  // Phase two: active-set polish, starting from the mirror-descent support.
  std::vector<char> active(cells, 0);
  if (!done) {
    const Eigen::VectorXd g = problem.reduced_gradient(w);
    const double c = w.dot(g);
    Eigen::VectorXd truncated = w;
    for (Eigen::Index i = 0; i < m; ++i) {
      // Dropping a node is only a descent move when its gradient exceeds the multiplier.
      if (w(i) < 1e-10 && g(i) > c) truncated(i) = 0.0;
    }
    truncated /= truncated.sum();
    const double e_truncated = problem.energy(truncated);
    if (e_truncated <= energy) {
      w = truncated;
      energy = e_truncated;
      record(w, energy);
    }
    for (Eigen::Index i = 0; i < m; ++i) active[static_cast<std::size_t>(i)] = w(i) > 0.0 ? 1 : 0;
  }

  while (!done && iter < max_iters) {
    ++iter;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (active[static_cast<std::size_t>(i)]) idx.push_back(i);
    }
    const auto s = static_cast<Eigen::Index>(idx.size());
    const Eigen::MatrixXd a_ss = problem.matrix()(idx, idx);
    const Eigen::VectorXd v_s = problem.field()(idx);
    Eigen::LLT<Eigen::MatrixXd> llt(a_ss);
    Eigen::VectorXd y;
    Eigen::VectorXd z;
    if (llt.info() == Eigen::Success) {
      y = llt.solve(Eigen::VectorXd::Ones(s));
      z = llt.solve(v_s);
    } else {
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(a_ss);
      y = lu.solve(Eigen::VectorXd::Ones(s));
      z = lu.solve(v_s);
    }
    // Face minimizer: A_ss w = c 1 - v_s with 1^T w = 1.
    const double multiplier = (1.0 + z.sum()) / y.sum();
    Eigen::VectorXd face = multiplier * y - z;

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index k = 0; k < s; ++k) {
      if (face(k) < -tiny_weight) {
        const double wk = w(idx[static_cast<std::size_t>(k)]);
        const double ratio = wk / (wk - face(k));
        if (ratio < alpha) {
          alpha = ratio;
          blocking = k;
        }
      } else if (face(k) < 0.0) {
        face(k) = 0.0;
      }
    }
    Eigen::VectorXd next = Eigen::VectorXd::Zero(m);
    for (Eigen::Index k = 0; k < s; ++k) {
      const Eigen::Index i = idx[static_cast<std::size_t>(k)];
      next(i) = w(i) + alpha * (face(k) - w(i));
    }
    if (blocking >= 0) {
      for (Eigen::Index k = 0; k < s; ++k) {
        const Eigen::Index i = idx[static_cast<std::size_t>(k)];
        if (k == blocking || next(i) <= 0.0) {
          next(i) = 0.0;
          active[static_cast<std::size_t>(i)] = 0;
        }
      }
    }
    next /= next.sum();
    // The segment from w toward the face minimizer is a descent direction of
    // a convex quadratic, so this step cannot raise the energy beyond round-off.
    w = std::move(next);
    energy = problem.energy(w);
    record(w, energy);
    if (blocking >= 0) continue;

    const Eigen::VectorXd g = problem.reduced_gradient(w);
    bool added = false;
    const double eps = stationarity_tol * (1.0 + std::abs(multiplier));
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!active[static_cast<std::size_t>(i)] && g(i) < multiplier - eps) {
        active[static_cast<std::size_t>(i)] = 1;
        added = true;
      }
    }
    if (!added) done = true;
  }

  std::vector<double> weights(cells);
  for (Eigen::Index i = 0; i < m; ++i) weights[static_cast<std::size_t>(i)] = std::max(0.0, w(i));
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& x : weights) x /= total;

  EquilibriumSolution sol{GridMeasure(UniformGrid(cells), std::move(weights))};
  const EquilibriumConstants k = compute_constants(sol.mu0, lp);
  sol.B = k.B;
  sol.D = k.D;
  sol.iterations = iter;
  sol.energy_history = std::move(energies);
  sol.min_weight_history = std::move(min_weights);
  sol.mass_error_history = std::move(mass_errors);
  {
    Eigen::VectorXd wf(m);
    for (Eigen::Index i = 0; i < m; ++i) wf(i) = sol.mu0.weight(static_cast<std::size_t>(i));
    sol.discrete_gap = detail::stationarity_gap(wf, problem.reduced_gradient(wf), 0.0);
  }

  const double threshold = sol.support_threshold();
  sol.support_mask.resize(cells);
  sol.veff_table.reserve(cells);
  double residual = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    const double x = sol.mu0.node(i);
    const ExtendedReal v = effective_potential(x, sol, lp);
    const bool in_support = sol.mu0.weight(i) > threshold;
    sol.support_mask[i] = in_support;
    sol.veff_table.push_back({x, v});
    if (v.is_finite()) {
      residual = std::max(residual, std::max(0.0, -v.value()));
      if (in_support) residual = std::max(residual, std::abs(v.value()));
    } else if (v.is_neg_inf() || in_support) {
      residual = std::numeric_limits<double>::infinity();
    }
  }
  sol.kkt_residual = residual;
  if (!done) {
    sol.status = SolverStatus::MaxIterations;
  } else {
    sol.status = residual <= tol ? SolverStatus::Converged : SolverStatus::GridLimited;
  }
  return sol;
}

/// B at cells, 2 cells and 4 cells with the observed convergence order and a
/// Richardson extrapolation.
struct RefinementReport {
  double b_coarse;
  double b_mid;
  double b_fine;
  double observed_order;
  double b_extrapolated;
  double error_estimate;  // estimated |B_fine - B_limit|
};

inline RefinementReport refine_B(const LimitParams& lp, std::size_t cells, double tol, std::size_t max_iters) {
  const double b1 = solve_equilibrium(lp, cells, tol, max_iters).B;
  const double b2 = solve_equilibrium(lp, 2 * cells, tol, max_iters).B;
  const double b4 = solve_equilibrium(lp, 4 * cells, tol, max_iters).B;
  const double d12 = b2 - b1;
  const double d24 = b4 - b2;
  double order = 1.0;
  if (d24 != 0.0 && d12 / d24 > 1.0) order = std::log2(d12 / d24);
  const double factor = std::pow(2.0, order) - 1.0;
  return {b1, b2, b4, order, b4 + d24 / factor, std::abs(d24) / factor};
}

}  // namespace jacobi_ldp

#endif  // JACOBI_LDP_EQUILIBRIUM_HPP
