#ifndef JACOBI_LDP_GRID_MEASURE_HPP
#define JACOBI_LDP_GRID_MEASURE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace jacobi_ldp {

/// Uniform partition of [0,1] into `cells` cells of width 1/cells. Cell i is
/// [i h, (i+1) h), the last cell is closed.
class UniformGrid {
 public:
  explicit UniformGrid(std::size_t cells) : cells_(cells) {
    if (cells == 0) throw std::invalid_argument("UniformGrid: need at least one cell");
  }

  std::size_t cells() const { return cells_; }
  double width() const { return 1.0 / static_cast<double>(cells_); }
  double lower(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(cells_); }
  double upper(std::size_t i) const { return static_cast<double>(i + 1) / static_cast<double>(cells_); }
  double node(std::size_t i) const { return (static_cast<double>(i) + 0.5) / static_cast<double>(cells_); }

  std::size_t cell_of(double x) const {
    if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("UniformGrid: x outside [0,1]");
    const auto i = static_cast<std::size_t>(x * static_cast<double>(cells_));
    return std::min(i, cells_ - 1);
  }

 private:
  std::size_t cells_;
};

/// A probability measure with constant density on each cell of a uniform grid.
class GridMeasure {
 public:
  GridMeasure(UniformGrid grid, std::vector<double> weights) : grid_(grid), weights_(std::move(weights)) {
    if (weights_.size() != grid_.cells()) throw std::invalid_argument("GridMeasure: one weight per cell required");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw std::invalid_argument("GridMeasure: negative or NaN weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("GridMeasure: weights sum to " + std::to_string(total) + ", expected 1");
    }
  }

  static GridMeasure uniform(std::size_t cells) {
    return GridMeasure(UniformGrid(cells), std::vector<double>(cells, 1.0 / static_cast<double>(cells)));
  }

  /// Cell masses cdf(upper) - cdf(lower) of a continuous distribution on [0,1].
  static GridMeasure from_cdf(std::size_t cells, const std::function<double(double)>& cdf) {
    UniformGrid grid(cells);
    std::vector<double> w(cells);
    for (std::size_t i = 0; i < cells; ++i) w[i] = std::max(0.0, cdf(grid.upper(i)) - cdf(grid.lower(i)));
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& wi : w) wi /= total;
    return GridMeasure(grid, std::move(w));
  }

  const UniformGrid& grid() const { return grid_; }
  std::size_t cells() const { return grid_.cells(); }
  double cell_width() const { return grid_.width(); }
  double node(std::size_t i) const { return grid_.node(i); }
  std::span<const double> weights() const { return weights_; }
  double weight(std::size_t i) const { return weights_[i]; }

  std::vector<double> nodes() const {
    std::vector<double> out(cells());
    for (std::size_t i = 0; i < cells(); ++i) out[i] = node(i);
    return out;
  }

  /// Distribution function, linear inside each cell.
  double cdf(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const std::size_t c = grid_.cell_of(x);
    double below = 0.0;
    for (std::size_t i = 0; i < c; ++i) below += weights_[i];
    return below + weights_[c] * (x - grid_.lower(c)) / grid_.width();
  }

  /// Distribution function at every cell's upper edge.
  std::vector<double> cdf_at_upper_edges() const {
    std::vector<double> out(cells());
    std::partial_sum(weights_.begin(), weights_.end(), out.begin());
    return out;
  }

 private:
  UniformGrid grid_;
  std::vector<double> weights_;
};

/// Kolmogorov distance between the empirical law of `c` and `mu`.
inline double kolmogorov_distance(const Configuration& c, const GridMeasure& mu) {
  if (c.empty()) throw std::invalid_argument("kolmogorov_distance: empty configuration");
  const double n = static_cast<double>(c.size());
  const std::vector<double> edges = mu.cdf_at_upper_edges();
  const UniformGrid& g = mu.grid();
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double x = c[i];
    const std::size_t cell = g.cell_of(x);
    const double below = cell == 0 ? 0.0 : edges[cell - 1];
    const double f = below + mu.weight(cell) * (x - g.lower(cell)) / g.width();
    worst = std::max({worst, std::abs(static_cast<double>(i + 1) / n - f), std::abs(static_cast<double>(i) / n - f)});
  }
  return worst;
}

}  // namespace jacobi_ldp

#endif  // JACOBI_LDP_GRID_MEASURE_HPP
