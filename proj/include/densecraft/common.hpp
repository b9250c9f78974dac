#ifndef DENSECRAFT_COMMON_HPP
#define DENSECRAFT_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace densecraft {

using Vector = std::vector<double>;

/// Thrown when a computation fails numerically (singular system, degenerate
/// truncation, non-PSD matrix). Distinct from std::invalid_argument, which
/// signals a caller error.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sq_norm(const Vector& a) { return dot(a, a); }

inline double max_abs(const Vector& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

/// Composite trapezoid rule over an equally spaced grid.
inline double trapezoid(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("trapezoid: need matching grids with >= 2 points");
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    s += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
  return s;
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
inline double quantile(Vector sample, double p) {
  if (sample.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(sample.begin(), sample.end());
  const double h = p * (static_cast<double>(sample.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sample.size() - 1);
  return sample[lo] + (h - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

inline Vector linspace(double a, double b, std::size_t n) {
  Vector g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

/// 64-bit mixing (splitmix64 finalizer), used to derive disjoint seeds from
/// structured identifiers such as (base, density, n, replicate).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t seed_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
}

}  // namespace densecraft

#endif  // DENSECRAFT_COMMON_HPP
