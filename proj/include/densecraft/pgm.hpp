#ifndef DENSECRAFT_PGM_HPP
#define DENSECRAFT_PGM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "densecraft/common.hpp"
#include "densecraft/data.hpp"
#include "densecraft/linalg.hpp"
#include "densecraft/rng.hpp"
#include "densecraft/special.hpp"

namespace densecraft {

/// Equally spaced component means on [a,b] with the common scale
/// sigma = (2/3) * spacing.
struct PgmGrid {
  Vector means;
  double sigma = 1.0;

  std::size_t size() const { return means.size(); }
};

inline PgmGrid build_grid(double a, double b, std::size_t K) {
  require(K >= 4, "build_grid: K must be at least 4");
  require(a < b, "build_grid: interval must satisfy a < b");
  PgmGrid grid;
  grid.means = linspace(a, b, K);
  grid.sigma = (2.0 / 3.0) * (b - a) / static_cast<double>(K - 1);
  return grid;
}

/// Second-difference penalty: D is (K-3) x (K-1), P = D'D, and P* adds
/// 1/c to the first two diagonal entries, which makes it positive definite.
struct PenaltyMatrix {
  Matrix D;
  SymMatrix Pstar;
  double c = 100.0;

  std::size_t dim() const { return Pstar.dim(); }  // K-1
};

inline PenaltyMatrix build_penalty(std::size_t K, double c) {
  require(K >= 4, "build_penalty: K must be at least 4");
  require(c > 0.0, "build_penalty: c must be positive");
  PenaltyMatrix pen;
  pen.c = c;
  pen.D = Matrix(K - 3, K - 1);
  for (std::size_t r = 0; r < K - 3; ++r) {
    pen.D(r, r) = 1.0;
    pen.D(r, r + 1) = -2.0;
    pen.D(r, r + 2) = 1.0;
  }
  Matrix p = matmul(transpose(pen.D), pen.D);
  p(0, 0) += 1.0 / c;
  p(1, 1) += 1.0 / c;
  pen.Pstar = SymMatrix(std::move(p));
  return pen;
}

namespace detail {

// log softmax of the full logit vector (0, beta_2, ..., beta_K), computed
// with max subtraction.
inline Vector log_weights_from_beta(const Vector& beta) {
  const std::size_t K = beta.size() + 1;
  Vector logits(K);
  logits[0] = 0.0;
  for (std::size_t j = 1; j < K; ++j) {
    require(std::isfinite(beta[j - 1]), "weights_from_beta: non-finite entry");
    logits[j] = beta[j - 1];
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (auto& v : logits) v -= lse;
  return logits;
}

}  // namespace detail

/// Mixture weights c_j = exp(beta_j) / sum_h exp(beta_h), with beta_1 = 0
/// fixed for identifiability. Returns a length-K probability vector.
inline Vector weights_from_beta(const Vector& beta) {
  Vector w = detail::log_weights_from_beta(beta);
  for (auto& v : w) v = std::exp(v);
  return w;
}

inline double mixture_pdf(const PgmGrid& grid, const Vector& weights, double x) {
  require(weights.size() == grid.size(), "mixture_pdf: weight/grid size mismatch");
  double f = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j)
    f += weights[j] * normal_pdf(x, grid.means[j], grid.sigma);
  return f;
}

/// Negative log conditional posterior of beta given counts and tau^2:
/// U(beta) = -sum_j n_j log c_j + beta' P* beta / (2 tau^2).
inline double neg_log_posterior(const Vector& beta, const Vector& counts, double tau2,
                                const PenaltyMatrix& penalty) {
  require(counts.size() == beta.size() + 1, "neg_log_posterior: counts must have length K");
  require(beta.size() == penalty.dim(), "neg_log_posterior: beta/penalty size mismatch");
  const Vector logw = detail::log_weights_from_beta(beta);
  double u = 0.0;
  for (std::size_t j = 0; j < counts.size(); ++j)
    if (counts[j] != 0.0) u -= counts[j] * logw[j];
  u += 0.5 * penalty.Pstar.quad(beta) / tau2;
  return u;
}

/// Gradient of neg_log_posterior: component j is -(n_j - n c_j) + (P* beta / tau^2)_j.
inline Vector grad_neg_log_posterior(const Vector& beta, const Vector& counts, double tau2,
                                     const PenaltyMatrix& penalty) {
  require(counts.size() == beta.size() + 1, "grad_neg_log_posterior: counts must have length K");
  const Vector w = weights_from_beta(beta);
  double n = 0.0;
  for (double c : counts) n += c;
  Vector g = matvec(penalty.Pstar.matrix(), beta);
  for (auto& v : g) v /= tau2;
  for (std::size_t j = 1; j < counts.size(); ++j) g[j - 1] -= counts[j] - n * w[j];
  return g;
}

struct HmcConfig {
  double step_size = 0.018;     ///< leapfrog step size
  std::size_t leapfrog_steps = 10;
};

struct HmcResult {
  Vector beta;
  bool accepted = false;
  double energy_error = 0.0;  ///< H(proposal) - H(current)
  bool divergent = false;
};

/// L leapfrog steps with identity mass matrix; mutates position and momentum
/// in place. Exposed separately so the integrator's reversibility and energy
/// scaling can be checked directly.
template <typename Grad>
inline void leapfrog(Vector& position, Vector& momentum, const HmcConfig& cfg, Grad&& grad) {
  const double eps = cfg.step_size;
  Vector g = grad(position);
  for (std::size_t i = 0; i < position.size(); ++i) momentum[i] -= 0.5 * eps * g[i];
  for (std::size_t step = 0; step < cfg.leapfrog_steps; ++step) {
    for (std::size_t i = 0; i < position.size(); ++i) position[i] += eps * momentum[i];
    g = grad(position);
    const double scale = (step + 1 == cfg.leapfrog_steps) ? 0.5 * eps : eps;
    for (std::size_t i = 0; i < position.size(); ++i) momentum[i] -= scale * g[i];
  }
}

/// One HMC transition for an arbitrary potential. Momentum is drawn N(0, I);
/// non-finite trajectories are treated as rejections and flagged divergent.
template <typename Potential, typename Grad>
inline HmcResult hmc_transition(const Vector& current, Potential&& potential, Grad&& grad,
                                const HmcConfig& cfg, RngStream& rng) {
  require(cfg.step_size > 0.0, "hmc: step size must be positive");
  require(cfg.leapfrog_steps >= 1, "hmc: need at least one leapfrog step");

  Vector momentum(current.size());
  for (auto& p : momentum) p = draw_normal(rng, 0.0, 1.0);
  const double h_current = potential(current) + 0.5 * sq_norm(momentum);

  Vector proposal = current;
  leapfrog(proposal, momentum, cfg, grad);
  const double h_proposal = potential(proposal) + 0.5 * sq_norm(momentum);

  HmcResult result;
  result.energy_error = h_proposal - h_current;
  if (!std::isfinite(h_proposal)) {
    result.beta = current;
    result.divergent = true;
    return result;
  }
  if (std::log(rng.uniform_pos()) < -result.energy_error) {
    result.beta = std::move(proposal);
    result.accepted = true;
  } else {
    result.beta = current;
  }
  return result;
}

/// Chain state for the four-step PGM sampler.
struct PgmState {
  Vector beta;                 ///< beta_2..beta_K (beta_1 = 0)
  double tau2 = 1.0;
  double a_aux = 1.0;
  std::vector<std::size_t> z;  ///< component indicators, 0-based
};

/// HMC update of beta given indicator counts and tau^2.
inline HmcResult hmc_step(const PgmState& state, const Vector& counts,
                          const PenaltyMatrix& penalty, const HmcConfig& cfg, RngStream& rng) {
  const double tau2 = state.tau2;
  return hmc_transition(
      state.beta,
      [&](const Vector& b) { return neg_log_posterior(b, counts, tau2, penalty); },
      [&](const Vector& b) { return grad_neg_log_posterior(b, counts, tau2, penalty); }, cfg,
      rng);
}

/// tau^2 | beta, a  ~  IG((K + nu - 1)/2, nu/a + beta' P* beta / 2).
inline double sample_tau2(const Vector& beta, const PenaltyMatrix& penalty, double a_aux,
                          double nu, RngStream& rng) {
  const double K = static_cast<double>(beta.size() + 1);
  return draw_inverse_gamma(rng, 0.5 * (K + nu - 1.0),
                            nu / a_aux + 0.5 * penalty.Pstar.quad(beta));
}

/// a | tau^2  ~  IG((nu + 1)/2, 1/A^2 + nu/tau^2).
inline double sample_a(double tau2, double nu, double A, RngStream& rng) {
  require(A > 0.0, "sample_a: A must be positive");
  return draw_inverse_gamma(rng, 0.5 * (nu + 1.0), 1.0 / (A * A) + nu / tau2);
}

/// Indicators z_i ~ M(1, h_i1..h_iK) with
/// h_ij ~ c_j exp{-(x_i - mu_j)^2 / (2 sigma^2)}, computed in log space.
inline std::vector<std::size_t> sample_indicators(const SampleSet& data, const PgmGrid& grid,
                                                  const Vector& weights, RngStream& rng) {
  require(weights.size() == grid.size(), "sample_indicators: weight/grid size mismatch");
  const std::size_t K = grid.size();
  const double inv2s2 = 1.0 / (2.0 * grid.sigma * grid.sigma);
  Vector logw(K), logh(K), h(K);
  for (std::size_t j = 0; j < K; ++j) logw[j] = std::log(weights[j]);

  std::vector<std::size_t> z(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double x = data.values[i];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < K; ++j) {
      const double d = x - grid.means[j];
      logh[j] = logw[j] - d * d * inv2s2;
      mx = std::max(mx, logh[j]);
    }
    for (std::size_t j = 0; j < K; ++j) h[j] = std::exp(logh[j] - mx);
    z[i] = draw_categorical(rng, h);
  }
  return z;
}

inline Vector counts_from_indicators(const std::vector<std::size_t>& z, std::size_t K) {
  Vector counts(K, 0.0);
  for (std::size_t zi : z) counts[zi] += 1.0;
  return counts;
}

struct NewtonResult {
  Vector beta;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Damped Newton minimizer of neg_log_posterior, used to start the HMC chain
/// at the conditional maximizer. Step halving on non-decrease.
inline NewtonResult newton_map_beta(const Vector& counts, const PenaltyMatrix& penalty,
                                    double tau2, std::size_t max_iter = 200) {
  const std::size_t dim = penalty.dim();
  double n = 0.0;
  for (double c : counts) n += c;

  NewtonResult res;
  res.beta.assign(dim, 0.0);
  double u = neg_log_posterior(res.beta, counts, tau2, penalty);
  for (std::size_t it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    const Vector g = grad_neg_log_posterior(res.beta, counts, tau2, penalty);
    if (max_abs(g) <= 1e-8 * (1.0 + n)) {
      res.converged = true;
      return res;
    }
    const Vector w = weights_from_beta(res.beta);
    Matrix hess(dim, dim);
    for (std::size_t j = 0; j < dim; ++j)
      for (std::size_t l = 0; l < dim; ++l) {
        double v = -n * w[j + 1] * w[l + 1];
        if (j == l) v += n * w[j + 1];
        hess(j, l) = v + penalty.Pstar(j, l) / tau2;
      }
    Vector rhs(dim);
    for (std::size_t j = 0; j < dim; ++j) rhs[j] = -g[j];
    Vector step;
    try {
      step = solve_spd(hess, rhs);
    } catch (const numeric_error&) {
      return res;  // not converged; caller falls back
    }
    double t = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      Vector cand(dim);
      for (std::size_t j = 0; j < dim; ++j) cand[j] = res.beta[j] + t * step[j];
      const double u_cand = neg_log_posterior(cand, counts, tau2, penalty);
      if (std::isfinite(u_cand) && u_cand < u) {
        res.beta = std::move(cand);
        u = u_cand;
        moved = true;
        break;
      }
    }
    if (!moved) {
      // stationary up to line-search resolution
      res.converged = max_abs(g) <= 1e-6 * (1.0 + n);
      return res;
    }
  }
  return res;
}

struct PgmConfig {
  std::size_t K = 30;
  double c = 100.0;             ///< prior constant for beta_2, beta_3
  double nu = 2.0;              ///< Half-t degrees of freedom
  double A = 10.0;              ///< Half-t scale
  HmcConfig hmc;
  std::size_t iters = 5000;
  std::size_t burnin = 1000;
  std::uint64_t seed = 42;
  std::size_t thin = 10;        ///< thinning for stored density draws
};

/// Full PGM fit: beta initialized at the conditional maximizer, then the
/// four-step HMC-within-Gibbs scheme. Returns the posterior-mean density on
/// a 512-point grid plus chain diagnostics (acceptance rate, energy errors,
/// divergence count, posterior-mean weights, tau^2 trace).
inline DensityEstimate fit_pgm(const SampleSet& data, const PgmConfig& config) {
  require(config.iters > config.burnin, "fit_pgm: iters must exceed burnin");
  require(config.K >= 4, "fit_pgm: K must be at least 4");
  require(config.nu > 0.0 && config.A > 0.0 && config.c > 0.0,
          "fit_pgm: nu, A, c must be positive");

  const PgmGrid grid = build_grid(data.a, data.b, config.K);
  const PenaltyMatrix penalty = build_penalty(config.K, config.c);
  const std::size_t K = config.K;
  const std::size_t n = data.n();
  RngStream rng(config.seed);

  PgmState state;
  state.tau2 = 1.0;
  state.a_aux = 1.0;
  state.z.resize(n);
  const double spacing = grid.means[1] - grid.means[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = (data.values[i] - grid.means[0]) / spacing;
    const long idx = std::lround(pos);
    state.z[i] = static_cast<std::size_t>(std::clamp(idx, 0l, static_cast<long>(K - 1)));
  }
  Vector counts = counts_from_indicators(state.z, K);

  const NewtonResult start = newton_map_beta(counts, penalty, state.tau2);
  double newton_fallback = 0.0;
  if (start.converged) {
    state.beta = start.beta;
  } else {
    state.beta.assign(K - 1, 0.0);
    newton_fallback = 1.0;
  }

  // Component pdf values on the evaluation grid and component masses over an
  // extended window are fixed across the chain.
  const Vector eval_grid = linspace(data.a, data.b, kEvalGridSize);
  Matrix grid_pdf(kEvalGridSize, K);
  for (std::size_t p = 0; p < kEvalGridSize; ++p)
    for (std::size_t j = 0; j < K; ++j)
      grid_pdf(p, j) = normal_pdf(eval_grid[p], grid.means[j], grid.sigma);
  const double window_lo = grid.means.front() - 10.0 * grid.sigma;
  const double window_hi = grid.means.back() + 10.0 * grid.sigma;
  Vector window_mass(K);
  for (std::size_t j = 0; j < K; ++j)
    window_mass[j] = normal_cdf(window_hi, grid.means[j], grid.sigma) -
                     normal_cdf(window_lo, grid.means[j], grid.sigma);

  std::vector<Vector> density_draws;
  density_draws.reserve(config.iters - config.burnin);
  Vector weight_sum(K, 0.0);
  Vector tau2_trace;
  tau2_trace.reserve(config.iters - config.burnin);
  double accepted = 0.0, abs_energy = 0.0, divergences = 0.0;
  std::size_t energy_samples = 0;
  double min_integral = std::numeric_limits<double>::infinity();
  double max_integral = -std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < config.iters; ++iter) {
    HmcResult hmc = hmc_step(state, counts, penalty, config.hmc, rng);
    state.beta = std::move(hmc.beta);
    if (hmc.accepted) accepted += 1.0;
    if (hmc.divergent) {
      divergences += 1.0;
    } else {
      abs_energy += std::abs(hmc.energy_error);
      ++energy_samples;
    }

    state.tau2 = sample_tau2(state.beta, penalty, state.a_aux, config.nu, rng);
    state.a_aux = sample_a(state.tau2, config.nu, config.A, rng);
    const Vector weights = weights_from_beta(state.beta);
    state.z = sample_indicators(data, grid, weights, rng);
    counts = counts_from_indicators(state.z, K);

    if (iter >= config.burnin) {
      Vector draw(kEvalGridSize);
      for (std::size_t p = 0; p < kEvalGridSize; ++p) {
        double f = 0.0;
        for (std::size_t j = 0; j < K; ++j) f += weights[j] * grid_pdf(p, j);
        draw[p] = f;
      }
      density_draws.push_back(std::move(draw));
      for (std::size_t j = 0; j < K; ++j) weight_sum[j] += weights[j];
      tau2_trace.push_back(state.tau2);
      const double integral = dot(weights, window_mass);
      min_integral = std::min(min_integral, integral);
      max_integral = std::max(max_integral, integral);
    }
  }

  DensityEstimate est = summarize_density_draws(eval_grid, density_draws, config.thin);
  const double retained = static_cast<double>(config.iters - config.burnin);
  for (auto& w : weight_sum) w /= retained;
  est.diagnostics.scalars["acceptance_rate"] = accepted / static_cast<double>(config.iters);
  est.diagnostics.scalars["mean_abs_energy_error"] =
      energy_samples > 0 ? abs_energy / static_cast<double>(energy_samples) : 0.0;
  est.diagnostics.scalars["divergences"] = divergences;
  est.diagnostics.scalars["newton_fallback"] = newton_fallback;
  est.diagnostics.scalars["min_draw_integral"] = min_integral;
  est.diagnostics.scalars["max_draw_integral"] = max_integral;
  est.diagnostics.traces["tau2"] = std::move(tau2_trace);
  est.diagnostics.traces["mean_weights"] = std::move(weight_sum);
  return est;
}

/// Fixed-tau^2 beta chain on given multinomial counts; the sampler behind
/// the laplace-check comparison. Returns retained beta draws.
inline std::vector<Vector> sample_beta_fixed_tau2(const Vector& counts,
                                                  const PenaltyMatrix& penalty, double tau2,
                                                  const HmcConfig& cfg, std::size_t iters,
                                                  std::size_t burnin, RngStream& rng) {
  require(iters > burnin, "sample_beta_fixed_tau2: iters must exceed burnin");
  PgmState state;
  state.tau2 = tau2;
  const NewtonResult start = newton_map_beta(counts, penalty, tau2);
  state.beta = start.converged ? start.beta : Vector(penalty.dim(), 0.0);

  std::vector<Vector> draws;
  draws.reserve(iters - burnin);
  for (std::size_t iter = 0; iter < iters; ++iter) {
    HmcResult res = hmc_step(state, counts, penalty, cfg, rng);
    state.beta = std::move(res.beta);
    if (iter >= burnin) draws.push_back(state.beta);
  }
  return draws;
}

}  // namespace densecraft

#endif  // DENSECRAFT_PGM_HPP
