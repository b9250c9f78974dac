#ifndef DENSECRAFT_RNG_HPP
#define DENSECRAFT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "densecraft/common.hpp"
#include "densecraft/special.hpp"

namespace densecraft {

/// Counter-based generator (splitmix64). Identical seed and call sequence
/// give bitwise-identical output; streams seeded seed+i are disjoint for any
/// realistic draw count, so parallel chains/replicates use seed+index.
/// One stream per chain: instances must not be shared across threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0,1); never returns an endpoint.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

 private:
  std::uint64_t state_;
};

/// One N(mean, sd^2) draw via Box-Muller (consumes exactly two uniforms).
inline double draw_normal(RngStream& rng, double mean, double sd) {
  require(sd > 0.0 && std::isfinite(sd), "draw_normal: sd must be positive");
  const double u1 = rng.uniform_pos();
  const double u2 = rng.uniform();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  return mean + sd * z;
}

/// Gamma(shape, rate) via Marsaglia-Tsang; shape < 1 boosted through
/// Gamma(shape+1) and a uniform power.
inline double draw_gamma(RngStream& rng, double shape, double rate) {
  require(shape > 0.0 && std::isfinite(shape), "draw_gamma: shape must be positive");
  require(rate > 0.0 && std::isfinite(rate), "draw_gamma: rate must be positive");
  if (shape < 1.0) {
    const double boost = std::pow(rng.uniform_pos(), 1.0 / shape);
    return draw_gamma(rng, shape + 1.0, rate) * boost;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = draw_normal(rng, 0.0, 1.0);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_pos();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

inline double draw_beta(RngStream& rng, double a, double b) {
  require(a > 0.0, "draw_beta: a must be positive");
  require(b > 0.0, "draw_beta: b must be positive");
  for (;;) {
    const double x = draw_gamma(rng, a, 1.0);
    const double y = draw_gamma(rng, b, 1.0);
    if (x + y > 0.0) return x / (x + y);
  }
}

/// IG(shape, scale) with density p(x) ~ x^{-(shape+1)} exp(-scale/x);
/// the reciprocal of a Gamma(shape, rate=scale) draw.
inline double draw_inverse_gamma(RngStream& rng, double shape, double scale) {
  require(shape > 0.0, "draw_inverse_gamma: shape must be positive");
  require(scale > 0.0, "draw_inverse_gamma: scale must be positive");
  return 1.0 / draw_gamma(rng, shape, scale);
}

namespace detail {

// Solves Q(a, t) = s for t >= lo by bracketed bisection. Q is monotone
// decreasing, so the root is unique.
inline double invert_gamma_q(double a, double s, double lo) {
  double hi = std::max(lo, a + 1.0);
  while (gamma_q(a, hi) > s) {
    hi *= 2.0;
    if (hi > 1e306) throw numeric_error("invert_gamma_q: bracket overflow");
  }
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_q(a, mid) > s)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// IG(shape, scale) restricted to (0, upper], sampled by inverse CDF on the
/// equivalent Gamma upper tail (bounded runtime even for tiny truncation mass).
inline double draw_truncated_inverse_gamma(RngStream& rng, double shape, double scale,
                                           double upper) {
  require(shape > 0.0, "draw_truncated_inverse_gamma: shape must be positive");
  require(scale > 0.0, "draw_truncated_inverse_gamma: scale must be positive");
  require(upper > 0.0, "draw_truncated_inverse_gamma: upper must be positive");
  // X <= upper  <=>  T = scale/X >= t0 with T ~ Gamma(shape, 1).
  const double t0 = scale / upper;
  const double mass = gamma_q(shape, t0);
  if (mass < 1e-12)
    throw numeric_error("draw_truncated_inverse_gamma: truncation mass below 1e-12 "
                        "(upper=" + std::to_string(upper) + ")");
  const double s = rng.uniform_pos() * mass;
  const double t = detail::invert_gamma_q(shape, s, t0);
  return std::min(scale / t, upper);
}

/// Index in [0, probs.size()) from a probability vector. Entries must be
/// nonnegative with a positive sum; the vector is renormalized internally,
/// so sums slightly off 1 are accepted.
inline std::size_t draw_categorical(RngStream& rng, const Vector& probs) {
  require(!probs.empty(), "draw_categorical: empty probability vector");
  double total = 0.0;
  for (double p : probs) {
    require(p >= 0.0 && std::isfinite(p), "draw_categorical: negative or non-finite probability");
    total += p;
  }
  require(total > 0.0, "draw_categorical: all probabilities are zero");
  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  return probs.size() - 1;
}

}  // namespace densecraft

#endif  // DENSECRAFT_RNG_HPP
