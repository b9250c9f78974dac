#ifndef DENSECRAFT_DPMM_HPP
#define DENSECRAFT_DPMM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "densecraft/common.hpp"
#include "densecraft/data.hpp"
#include "densecraft/rng.hpp"
#include "densecraft/special.hpp"

namespace densecraft {

/// Weights from stick fractions: pi_k = v_k prod_{l<k} (1 - v_l).
/// The last fraction must be 1 so the truncated weights sum to one exactly.
inline Vector stick_break(const Vector& v) {
  require(!v.empty(), "stick_break: empty stick vector");
  for (double f : v)
    require(f >= 0.0 && f <= 1.0, "stick_break: fractions must lie in [0,1]");
  require(v.back() == 1.0, "stick_break: the last fraction must equal 1");
  Vector pi(v.size());
  double remaining = 1.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    pi[k] = v[k] * remaining;
    remaining *= 1.0 - v[k];
  }
  return pi;
}

struct DpmmHyper {
  double sigma_mu2 = 1.0;  ///< variance of the component-mean prior
  double nu1 = 2.0;        ///< IG shape for component variances
  double nu2 = 0.01;       ///< IG scale for component variances
  double eta1 = 1.0;       ///< Gamma shape for the concentration
  double eta2 = 1.0;       ///< Gamma rate for the concentration
  double A = 1.0;          ///< variance of the theta prior

  /// Weakly informative defaults at the data's scale.
  static DpmmHyper defaults_for_interval(double a, double b) {
    require(a < b, "DpmmHyper: interval must satisfy a < b");
    const double range = b - a;
    DpmmHyper h;
    h.sigma_mu2 = range * range;
    h.nu1 = 2.0;
    h.nu2 = (0.1 * range) * (0.1 * range);
    h.eta1 = 1.0;
    h.eta2 = 1.0;
    h.A = range * range;
    return h;
  }
};

/// Truncated stick-breaking chain state.
struct DpmmState {
  Vector v;                    ///< stick fractions, v[N-1] == 1
  Vector pi;                   ///< weights from stick_break(v)
  Vector mu;                   ///< component means
  Vector sigma2;               ///< component variances
  std::vector<std::size_t> z;  ///< indicators, 0-based
  double theta = 0.0;          ///< prior mean of the component means
  double alpha = 1.0;          ///< concentration
  std::size_t clamp_events = 0;  ///< sticks clamped away from 1 (cumulative)

  std::size_t truncation() const { return v.size(); }
};

/// Mixture density of the current state at x.
inline double dpmm_density(const DpmmState& state, double x) {
  double f = 0.0;
  for (std::size_t k = 0; k < state.truncation(); ++k)
    f += state.pi[k] * normal_pdf(x, state.mu[k], std::sqrt(state.sigma2[k]));
  return f;
}

/// Posterior indicator probabilities for one observation.
inline Vector component_posterior(const DpmmState& state, double x) {
  const std::size_t N = state.truncation();
  Vector logp(N);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < N; ++k) {
    const double d = x - state.mu[k];
    logp[k] = std::log(state.pi[k]) - 0.5 * std::log(2.0 * M_PI * state.sigma2[k]) -
              0.5 * d * d / state.sigma2[k];
    mx = std::max(mx, logp[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    logp[k] = std::exp(logp[k] - mx);
    total += logp[k];
  }
  for (auto& p : logp) p /= total;
  return logp;
}

/// One blocked-Gibbs sweep (truncated stick-breaking sampler): indicators,
/// sticks, component means and variances, theta, then alpha. An empty data
/// vector runs the pure prior chain.
inline DpmmState gibbs_sweep(const DpmmState& state, const Vector& data,
                             const DpmmHyper& hyper, RngStream& rng) {
  const std::size_t N = state.truncation();
  require(N >= 2, "gibbs_sweep: truncation level must be at least 2");
  DpmmState next = state;

  // indicators
  next.z.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    next.z[i] = draw_categorical(rng, component_posterior(state, data[i]));

  Vector m(N, 0.0), sum(N, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    m[next.z[i]] += 1.0;
    sum[next.z[i]] += data[i];
  }

  // stick fractions; v_N stays pinned at 1
  double tail = data.empty() ? 0.0 : static_cast<double>(data.size());
  for (std::size_t k = 0; k + 1 < N; ++k) {
    tail -= m[k];
    double vk = draw_beta(rng, 1.0 + m[k], state.alpha + tail);
    if (vk > 1.0 - 1e-12) {
      vk = 1.0 - 1e-12;
      ++next.clamp_events;
    }
    next.v[k] = vk;
  }
  next.v[N - 1] = 1.0;
  next.pi = stick_break(next.v);

  // component means
  for (std::size_t k = 0; k < N; ++k) {
    const double prec = m[k] / state.sigma2[k] + 1.0 / hyper.sigma_mu2;
    const double mean = (sum[k] / state.sigma2[k] + state.theta / hyper.sigma_mu2) / prec;
    next.mu[k] = draw_normal(rng, mean, std::sqrt(1.0 / prec));
  }

  // component variances
  for (std::size_t k = 0; k < N; ++k) {
    double ss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (next.z[i] == k) {
        const double d = data[i] - next.mu[k];
        ss += d * d;
      }
    next.sigma2[k] = draw_inverse_gamma(rng, hyper.nu1 + 0.5 * m[k], hyper.nu2 + 0.5 * ss);
  }

  // theta (prior N(0, A), likelihood mu_k ~ N(theta, sigma_mu2))
  {
    const double prec = static_cast<double>(N) / hyper.sigma_mu2 + 1.0 / hyper.A;
    double mu_sum = 0.0;
    for (double v : next.mu) mu_sum += v;
    next.theta = draw_normal(rng, (mu_sum / hyper.sigma_mu2) / prec, std::sqrt(1.0 / prec));
  }

  // alpha | v ~ Gamma(eta1 + N - 1, eta2 - sum log(1 - v_k))
  {
    double log_tail = 0.0;
    for (std::size_t k = 0; k + 1 < N; ++k) log_tail += std::log(1.0 - next.v[k]);
    next.alpha = draw_gamma(rng, hyper.eta1 + static_cast<double>(N - 1),
                            hyper.eta2 - log_tail);
  }
  return next;
}

struct DpmmConfig {
  std::size_t N = 35;
  DpmmHyper hyper;
  bool hyper_from_interval = true;  ///< derive hyper defaults from [a,b]
  std::size_t iters = 5000;
  std::size_t burnin = 1000;
  std::uint64_t seed = 42;
  std::size_t thin = 10;
};

/// Truncated DPMM fit. Components initialize at data quantiles with uniform
/// weights; each retained sweep contributes the mixture density on the grid.
inline DensityEstimate fit_dpmm(const SampleSet& data, const DpmmConfig& config) {
  require(config.iters > config.burnin, "fit_dpmm: iters must exceed burnin");
  require(config.N >= 2, "fit_dpmm: truncation level must be at least 2");
  const std::size_t N = config.N;
  const DpmmHyper hyper = config.hyper_from_interval
                              ? DpmmHyper::defaults_for_interval(data.a, data.b)
                              : config.hyper;
  RngStream rng(config.seed);

  DpmmState state;
  state.v.assign(N, 0.0);
  for (std::size_t k = 0; k + 1 < N; ++k) state.v[k] = 1.0 / static_cast<double>(N - k);
  state.v[N - 1] = 1.0;
  state.pi = stick_break(state.v);

  Vector sorted = data.values;
  std::sort(sorted.begin(), sorted.end());
  state.mu.resize(N);
  for (std::size_t k = 0; k < N; ++k) {
    const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(N);
    state.mu[k] = sorted[static_cast<std::size_t>(q * static_cast<double>(sorted.size()))];
  }
  double sample_mean = 0.0;
  for (double x : data.values) sample_mean += x;
  sample_mean /= static_cast<double>(data.n());
  double sample_var = 0.0;
  for (double x : data.values) sample_var += (x - sample_mean) * (x - sample_mean);
  sample_var /= static_cast<double>(data.n() - 1);
  state.sigma2.assign(N, std::max(sample_var / 4.0, 1e-8));
  state.theta = sample_mean;
  state.alpha = 1.0;
  state.z.assign(data.n(), 0);
  for (std::size_t i = 0; i < data.n(); ++i) {
    std::size_t best = 0;
    double best_d = std::abs(data.values[i] - state.mu[0]);
    for (std::size_t k = 1; k < N; ++k) {
      const double d = std::abs(data.values[i] - state.mu[k]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    state.z[i] = best;
  }

  const Vector eval_grid = linspace(data.a, data.b, kEvalGridSize);
  std::vector<Vector> density_draws;
  density_draws.reserve(config.iters - config.burnin);
  Vector alpha_trace, occupied_trace;
  double min_integral = std::numeric_limits<double>::infinity();
  double max_integral = -std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < config.iters; ++iter) {
    state = gibbs_sweep(state, data.values, hyper, rng);
    if (iter < config.burnin) continue;

    Vector draw(kEvalGridSize);
    for (std::size_t p = 0; p < kEvalGridSize; ++p) draw[p] = dpmm_density(state, eval_grid[p]);
    density_draws.push_back(std::move(draw));

    // exact mass over a window wide enough to hold every component's tails
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < N; ++k) {
      const double sd = std::sqrt(state.sigma2[k]);
      lo = std::min(lo, state.mu[k] - 10.0 * sd);
      hi = std::max(hi, state.mu[k] + 10.0 * sd);
    }
    double integral = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const double sd = std::sqrt(state.sigma2[k]);
      integral += state.pi[k] * (normal_cdf(hi, state.mu[k], sd) -
                                 normal_cdf(lo, state.mu[k], sd));
    }
    min_integral = std::min(min_integral, integral);
    max_integral = std::max(max_integral, integral);

    alpha_trace.push_back(state.alpha);
    std::vector<bool> seen(N, false);
    for (std::size_t zi : state.z) seen[zi] = true;
    double occ = 0.0;
    for (bool s : seen) occ += s ? 1.0 : 0.0;
    occupied_trace.push_back(occ);
  }

  DensityEstimate est = summarize_density_draws(eval_grid, density_draws, config.thin);
  est.diagnostics.scalars["clamped_sticks"] = static_cast<double>(state.clamp_events);
  est.diagnostics.scalars["min_draw_integral"] = min_integral;
  est.diagnostics.scalars["max_draw_integral"] = max_integral;
  est.diagnostics.traces["alpha"] = std::move(alpha_trace);
  est.diagnostics.traces["occupied"] = std::move(occupied_trace);
  return est;
}

}  // namespace densecraft

#endif  // DENSECRAFT_DPMM_HPP
