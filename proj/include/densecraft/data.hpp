#ifndef DENSECRAFT_DATA_HPP
#define DENSECRAFT_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "densecraft/common.hpp"

namespace densecraft {

/// Observed univariate data with its working interval [a,b].
struct SampleSet {
  Vector values;
  double a = 0.0;
  double b = 1.0;

  SampleSet() = default;

  SampleSet(Vector v, double lo, double hi) : values(std::move(v)), a(lo), b(hi) {
    require(values.size() >= 2, "SampleSet: need at least 2 observations");
    require(a < b, "SampleSet: interval must satisfy a < b");
    for (double x : values)
      require(x >= a && x <= b, "SampleSet: observation outside working interval");
  }

  /// Pads the data range by 5% on each side, the default working interval.
  static SampleSet with_default_interval(Vector v) {
    require(v.size() >= 2, "SampleSet: need at least 2 observations");
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    double lo = *mn, hi = *mx;
    double range = hi - lo;
    if (range <= 0.0) range = std::max(1.0, std::abs(lo));
    return SampleSet(std::move(v), lo - 0.05 * range, hi + 0.05 * range);
  }

  /// For nonnegative-support data: interval [0, max + 5% of range].
  static SampleSet with_nonnegative_interval(Vector v) {
    require(v.size() >= 2, "SampleSet: need at least 2 observations");
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    require(*mn >= 0.0, "SampleSet: negative observation with nonnegative interval");
    double range = *mx - *mn;
    if (range <= 0.0) range = std::max(1.0, *mx);
    return SampleSet(std::move(v), 0.0, *mx + 0.05 * range);
  }

  std::size_t n() const { return values.size(); }
};

/// Free-form per-run diagnostics: named scalars plus named trace vectors.
struct Diagnostics {
  std::map<std::string, double> scalars;
  std::map<std::string, Vector> traces;
};

constexpr std::size_t kEvalGridSize = 512;

/// Posterior-mean density on an evaluation grid, with pointwise 2.5%/97.5%
/// bands, optionally thinned per-draw densities, and diagnostics.
struct DensityEstimate {
  Vector grid;
  Vector mean_density;
  Vector band_lower;
  Vector band_upper;
  std::vector<Vector> draws;  ///< thinned retained draws (may be empty)
  Diagnostics diagnostics;

  /// Linear interpolation on the grid; zero outside (a density vanishes off
  /// its support). Out-of-grid queries are counted in `extrapolations`.
  double evaluate(double x, std::size_t* extrapolations = nullptr) const {
    if (grid.size() < 2) return 0.0;
    if (x < grid.front() || x > grid.back()) {
      if (extrapolations) ++(*extrapolations);
      return 0.0;
    }
    const double h = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
    std::size_t i = static_cast<std::size_t>((x - grid.front()) / h);
    if (i >= grid.size() - 1) i = grid.size() - 2;
    const double w = (x - grid[i]) / (grid[i + 1] - grid[i]);
    return mean_density[i] * (1.0 - w) + mean_density[i + 1] * w;
  }
};

/// Builds mean, pointwise bands, and thinned stored draws from the full set
/// of retained density draws.
inline DensityEstimate summarize_density_draws(Vector grid,
                                               const std::vector<Vector>& all_draws,
                                               std::size_t thin = 10) {
  require(!all_draws.empty(), "summarize_density_draws: no retained draws");
  const std::size_t g = grid.size();
  DensityEstimate est;
  est.grid = std::move(grid);
  est.mean_density.assign(g, 0.0);
  est.band_lower.assign(g, 0.0);
  est.band_upper.assign(g, 0.0);

  for (const Vector& d : all_draws)
    for (std::size_t i = 0; i < g; ++i) est.mean_density[i] += d[i];
  for (std::size_t i = 0; i < g; ++i)
    est.mean_density[i] /= static_cast<double>(all_draws.size());

  Vector column(all_draws.size());
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t k = 0; k < all_draws.size(); ++k) column[k] = all_draws[k][i];
    est.band_lower[i] = quantile(column, 0.025);
    est.band_upper[i] = quantile(column, 0.975);
  }

  if (thin > 0)
    for (std::size_t k = 0; k < all_draws.size(); k += thin) est.draws.push_back(all_draws[k]);
  return est;
}

}  // namespace densecraft

#endif  // DENSECRAFT_DATA_HPP
