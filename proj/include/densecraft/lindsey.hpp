#ifndef DENSECRAFT_LINDSEY_HPP
#define DENSECRAFT_LINDSEY_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "densecraft/common.hpp"
#include "densecraft/data.hpp"
#include "densecraft/linalg.hpp"
#include "densecraft/rng.hpp"
#include "densecraft/stochastics.hpp"

namespace densecraft {

/// Equal-width binning with the regression responses
/// Y_j = sqrt(k/n) * sqrt(N_j + 1/4) and noise scale sigma0 = sqrt(k/(4n)).
struct BinnedData {
  std::size_t k = 0;
  Vector centers;                   ///< t_j, data units
  std::vector<std::size_t> counts;  ///< N_j, sum to n
  Vector responses;                 ///< Y_j
  double sigma0 = 0.0;
  double a = 0.0, b = 1.0;          ///< working interval
  std::size_t n = 0;                ///< raw sample size
};

/// Boundary convention: a value on a bin's right edge belongs to the left
/// bin, except b itself which belongs to bin k.
inline BinnedData bin_transform(const SampleSet& data, std::size_t k) {
  require(k >= 2, "bin_transform: need at least 2 bins");
  BinnedData out;
  out.k = k;
  out.n = data.n();
  out.a = data.a;
  out.b = data.b;
  const double width = (data.b - data.a) / static_cast<double>(k);
  out.centers.resize(k);
  for (std::size_t j = 0; j < k; ++j)
    out.centers[j] = data.a + (static_cast<double>(j) + 0.5) * width;
  out.counts.assign(k, 0);
  for (double x : data.values) {
    double pos = (x - data.a) / width;
    std::size_t j;
    if (pos <= 0.0) {
      j = 0;
    } else {
      j = static_cast<std::size_t>(std::ceil(pos)) - 1;
      if (j >= k) j = k - 1;
    }
    ++out.counts[j];
  }
  const double kn = static_cast<double>(k) / static_cast<double>(out.n);
  out.responses.resize(k);
  for (std::size_t j = 0; j < k; ++j)
    out.responses[j] = std::sqrt(kn) * std::sqrt(static_cast<double>(out.counts[j]) + 0.25);
  out.sigma0 = std::sqrt(kn / 4.0);
  return out;
}

/// Integrated-Wiener (cubic smoothing spline) covariance kernel on [0,1]:
/// Omega(s,t) = s^2 (t - s/3) / 2 for s <= t.
inline double wahba_kernel(double s, double t) {
  const double lo = std::min(s, t), hi = std::max(s, t);
  return 0.5 * lo * lo * (hi - lo / 3.0);
}

/// Regression design at the bin centers: X = [1 | s], Omega on the centers
/// rescaled to (0,1], and the reduced basis Z = Q_m D_m^{1/2} from the top-m
/// eigenpairs. Kept eigenpairs also evaluate the fitted spline off the knots.
struct SplineDesign {
  Matrix X;            ///< k x 2
  SymMatrix Omega;     ///< k x k
  Matrix Z;            ///< k x m
  std::size_t m = 0;

  Matrix eigvec_m;     ///< k x m, Q_m
  Vector inv_sqrt_eig; ///< 1/sqrt(lambda_j), zero for clipped eigenvalues
  Vector knots;        ///< rescaled centers s_j in (0,1]
  double origin = 0.0; ///< s(x) = (x - origin) / span
  double span = 1.0;

  double rescale(double x) const { return (x - origin) / span; }

  /// Row of the spline basis at an arbitrary point (already rescaled):
  /// omega(s)' Q_m D_m^{-1/2}. Coincides with rows of Z at the knots.
  Vector basis_row(double s) const {
    Vector omega(knots.size());
    for (std::size_t j = 0; j < knots.size(); ++j) omega[j] = wahba_kernel(s, knots[j]);
    Vector row(m, 0.0);
    for (std::size_t c = 0; c < m; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < knots.size(); ++j) acc += omega[j] * eigvec_m(j, c);
      row[c] = acc * inv_sqrt_eig[c];
    }
    return row;
  }
};

/// Builds the spline design. `m_request` empty means automatic: the smallest
/// m whose eigenvalue mass reaches 99.99% of the trace (at least 3).
inline SplineDesign build_spline_design(const BinnedData& binned,
                                        std::optional<std::size_t> m_request = std::nullopt) {
  const std::size_t k = binned.k;
  require(k >= 2, "build_spline_design: need at least 2 bins");

  SplineDesign design;
  design.origin = binned.a;
  design.span = binned.centers.back() - binned.a;  // maps centers to (0,1], last exactly 1
  design.knots.resize(k);
  for (std::size_t j = 0; j < k; ++j) design.knots[j] = design.rescale(binned.centers[j]);

  design.X = Matrix(k, 2);
  for (std::size_t j = 0; j < k; ++j) {
    design.X(j, 0) = 1.0;
    design.X(j, 1) = design.knots[j];
  }

  Matrix omega(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j)
      omega(i, j) = omega(j, i) = wahba_kernel(design.knots[i], design.knots[j]);
  design.Omega = SymMatrix(std::move(omega));

  const EigenDecomposition eig = sym_eigen(design.Omega);
  const double trace = design.Omega.trace();
  if (eig.values.back() < -1e-10 * trace)
    throw numeric_error("build_spline_design: Omega is not positive semidefinite");

  std::size_t m;
  if (m_request) {
    require(*m_request <= k, "build_spline_design: m cannot exceed the bin count");
    m = *m_request;
  } else {
    double mass = 0.0;
    m = k;
    for (std::size_t j = 0; j < k; ++j) {
      mass += std::max(eig.values[j], 0.0);
      if (mass >= 0.9999 * trace) {
        m = j + 1;
        break;
      }
    }
    m = std::max<std::size_t>(m, 3);
  }
  design.m = m;
  design.Z = Matrix(k, m);
  design.eigvec_m = Matrix(k, m);
  design.inv_sqrt_eig.assign(m, 0.0);
  for (std::size_t c = 0; c < m; ++c) {
    const double lambda = std::max(eig.values[c], 0.0);
    const double root = std::sqrt(lambda);
    design.inv_sqrt_eig[c] = lambda > 1e-14 * trace ? 1.0 / root : 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      design.eigvec_m(j, c) = eig.vectors(j, c);
      design.Z(j, c) = eig.vectors(j, c) * root;
    }
  }
  return design;
}

struct LindseyState {
  Vector beta;   ///< intercept and slope
  Vector u;      ///< spline coefficients, length m
  double sigma2 = 1.0;
  double tau2 = 1.0;
};

struct LindseyHyper {
  double sigma_beta2 = 1e6;
  double c_tau2 = 1e5;
  double c_sigma2 = 1e3;
  bool shape_uses_raw_n = false;  ///< IG shapes use raw n instead of the regression length k
};

/// One Gibbs sweep: (beta,u) jointly normal, then sigma^2 and tau^2 from
/// truncated inverse gammas. With m = 0 the spline block and the tau^2
/// update are skipped.
inline LindseyState gibbs_step(const LindseyState& state, const SplineDesign& design,
                               const BinnedData& binned, const LindseyHyper& hyper,
                               RngStream& rng) {
  const std::size_t k = binned.k;
  const std::size_t m = design.m;
  const std::size_t p = 2 + m;
  require(state.u.size() == m, "gibbs_step: state u has wrong length");

  // M = X*'X* + sigma^2 A^{-1}, A = diag(sb2, sb2, tau2...)
  Matrix xs(k, p);
  for (std::size_t j = 0; j < k; ++j) {
    xs(j, 0) = design.X(j, 0);
    xs(j, 1) = design.X(j, 1);
    for (std::size_t c = 0; c < m; ++c) xs(j, 2 + c) = design.Z(j, c);
  }
  Matrix M = matmul(transpose(xs), xs);
  M(0, 0) += state.sigma2 / hyper.sigma_beta2;
  M(1, 1) += state.sigma2 / hyper.sigma_beta2;
  for (std::size_t c = 0; c < m; ++c) M(2 + c, 2 + c) += state.sigma2 / state.tau2;

  const Vector xty = matvec_transposed(xs, binned.responses);
  const Matrix L = cholesky(M);
  const Vector mean = backward_solve_transposed(L, forward_solve(L, xty));

  Vector zdraw(p);
  for (auto& z : zdraw) z = draw_normal(rng, 0.0, 1.0);
  const Vector whitened = backward_solve_transposed(L, zdraw);
  const double sigma = std::sqrt(state.sigma2);

  LindseyState next;
  next.beta = {mean[0] + sigma * whitened[0], mean[1] + sigma * whitened[1]};
  next.u.resize(m);
  for (std::size_t c = 0; c < m; ++c) next.u[c] = mean[2 + c] + sigma * whitened[2 + c];

  Vector coef(p);
  coef[0] = next.beta[0];
  coef[1] = next.beta[1];
  for (std::size_t c = 0; c < m; ++c) coef[2 + c] = next.u[c];
  const Vector fitted = matvec(xs, coef);
  double rss = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double r = binned.responses[j] - fitted[j];
    rss += r * r;
  }

  const double reg_len = hyper.shape_uses_raw_n ? static_cast<double>(binned.n)
                                                : static_cast<double>(k);
  const double sigma_shape = 0.5 * reg_len - 1.0;
  require(sigma_shape > 0.0, "gibbs_step: nonpositive IG shape for sigma^2");
  next.sigma2 = draw_truncated_inverse_gamma(rng, sigma_shape, std::max(0.5 * rss, 1e-300),
                                             hyper.c_sigma2);

  if (m > 0) {
    const double tau_shape = 0.5 * static_cast<double>(m) - 1.0;
    require(tau_shape > 0.0, "gibbs_step: nonpositive IG shape for tau^2");
    next.tau2 = draw_truncated_inverse_gamma(rng, tau_shape,
                                             std::max(0.5 * sq_norm(next.u), 1e-300),
                                             hyper.c_tau2);
  } else {
    next.tau2 = state.tau2;
  }
  return next;
}

struct LindseyConfig {
  std::size_t k = 0;                    ///< 0 = default max(10, ceil(sqrt(n)))
  std::optional<std::size_t> m;         ///< empty = automatic
  std::size_t iters = 5000;
  std::size_t burnin = 1000;
  LindseyHyper hyper;
  std::uint64_t seed = 42;
  std::size_t thin = 10;
};

/// Full Lindsey fit: bin, regress with the Gibbs sampler, square and
/// normalize the positive part of each retained regression draw.
inline DensityEstimate fit_lindsey(const SampleSet& data, const LindseyConfig& config) {
  require(config.iters > config.burnin, "fit_lindsey: iters must exceed burnin");
  std::size_t k = config.k;
  if (k == 0)
    k = std::max<std::size_t>(
        10, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(data.n())))));
  require(k >= 4, "fit_lindsey: k must be at least 4");
  if (config.m) require(*config.m >= 3, "fit_lindsey: m must be at least 3");

  const BinnedData binned = bin_transform(data, k);
  const SplineDesign design = build_spline_design(binned, config.m);
  const std::size_t m = design.m;
  const double reg_len = config.hyper.shape_uses_raw_n ? static_cast<double>(data.n())
                                                       : static_cast<double>(k);
  require(0.5 * reg_len - 1.0 > 0.0, "fit_lindsey: IG shape for sigma^2 must be positive");
  require(0.5 * static_cast<double>(m) - 1.0 > 0.0,
          "fit_lindsey: IG shape for tau^2 must be positive");

  RngStream rng(config.seed);
  LindseyState state;
  state.beta = {0.0, 0.0};
  state.u.assign(m, 0.0);
  state.sigma2 = std::min(binned.sigma0 * binned.sigma0, config.hyper.c_sigma2);
  state.tau2 = 1.0;

  // Evaluation rows on the output grid are fixed across the chain.
  const Vector eval_grid = linspace(data.a, data.b, kEvalGridSize);
  Matrix eval_rows(kEvalGridSize, 2 + m);
  for (std::size_t pnt = 0; pnt < kEvalGridSize; ++pnt) {
    const double s = design.rescale(eval_grid[pnt]);
    eval_rows(pnt, 0) = 1.0;
    eval_rows(pnt, 1) = s;
    const Vector zrow = design.basis_row(s);
    for (std::size_t c = 0; c < m; ++c) eval_rows(pnt, 2 + c) = zrow[c];
  }

  std::vector<Vector> density_draws;
  density_draws.reserve(config.iters - config.burnin);
  Vector sigma2_trace, tau2_trace;
  double degenerate = 0.0;
  double min_integral = std::numeric_limits<double>::infinity();
  double max_integral = -std::numeric_limits<double>::infinity();

  Vector coef(2 + m);
  for (std::size_t iter = 0; iter < config.iters; ++iter) {
    state = gibbs_step(state, design, binned, config.hyper, rng);
    if (iter < config.burnin) continue;

    coef[0] = state.beta[0];
    coef[1] = state.beta[1];
    for (std::size_t c = 0; c < m; ++c) coef[2 + c] = state.u[c];
    Vector density = matvec(eval_rows, coef);
    for (auto& r : density) {
      const double rplus = std::max(r, 0.0);
      r = rplus * rplus;
    }
    const double integral = trapezoid(eval_grid, density);
    if (integral < 1e-12) {
      degenerate += 1.0;
    } else {
      for (auto& v : density) v /= integral;
      const double check = trapezoid(eval_grid, density);
      min_integral = std::min(min_integral, check);
      max_integral = std::max(max_integral, check);
      density_draws.push_back(std::move(density));
    }
    sigma2_trace.push_back(state.sigma2);
    tau2_trace.push_back(state.tau2);
  }

  if (density_draws.empty())
    throw numeric_error("fit_lindsey: every retained draw was degenerate");

  DensityEstimate est = summarize_density_draws(eval_grid, density_draws, config.thin);
  est.diagnostics.scalars["degenerate_draws"] = degenerate;
  est.diagnostics.scalars["retained_draws"] = static_cast<double>(density_draws.size());
  est.diagnostics.scalars["spline_columns"] = static_cast<double>(m);
  est.diagnostics.scalars["bins"] = static_cast<double>(k);
  est.diagnostics.scalars["min_draw_integral"] = min_integral;
  est.diagnostics.scalars["max_draw_integral"] = max_integral;
  est.diagnostics.traces["sigma2"] = std::move(sigma2_trace);
  est.diagnostics.traces["tau2"] = std::move(tau2_trace);
  return est;
}

}  // namespace densecraft

#endif  // DENSECRAFT_LINDSEY_HPP
