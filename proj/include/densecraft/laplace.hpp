#ifndef DENSECRAFT_LAPLACE_HPP
#define DENSECRAFT_LAPLACE_HPP

#include <cmath>
#include <cstddef>

#include "densecraft/common.hpp"
#include "densecraft/linalg.hpp"
#include "densecraft/pgm.hpp"

namespace densecraft {

struct MultinomialMle {
  Vector beta_hat;      ///< length K-1
  Vector c_hat;         ///< implied weights, length K
  bool smoothed = false;  ///< true when the half-count rule was applied
};

/// MLE of the softmax logits from multinomial counts:
/// beta_hat_j = log(n_j) - log(n_1). Zero counts trigger the half-count
/// smoothing rule (n_j + 1/2 for all j) so the MLE stays interior.
inline MultinomialMle multinomial_mle(const Vector& counts) {
  require(counts.size() >= 2, "multinomial_mle: need at least two categories");
  double total = 0.0;
  bool any_zero = false;
  for (double c : counts) {
    require(c >= 0.0, "multinomial_mle: negative count");
    total += c;
    if (c == 0.0) any_zero = true;
  }
  require(total > 0.0, "multinomial_mle: all counts are zero");

  MultinomialMle res;
  res.smoothed = any_zero;
  Vector n = counts;
  if (any_zero) {
    for (auto& c : n) c += 0.5;
    total += 0.5 * static_cast<double>(n.size());
  }
  res.c_hat.resize(n.size());
  for (std::size_t j = 0; j < n.size(); ++j) res.c_hat[j] = n[j] / total;
  res.beta_hat.resize(n.size() - 1);
  for (std::size_t j = 1; j < n.size(); ++j)
    res.beta_hat[j - 1] = std::log(n[j]) - std::log(n[0]);
  return res;
}

/// Observed information of the multinomial log likelihood at beta_hat:
/// J_{jl} = n (c_j delta_{jl} - c_j c_l) over the free block j,l = 2..K.
inline SymMatrix observed_information(const Vector& beta_hat, double n) {
  require(n > 0.0, "observed_information: total count must be positive");
  const Vector c = weights_from_beta(beta_hat);
  const std::size_t dim = beta_hat.size();
  SymMatrix j(dim);
  for (std::size_t a = 0; a < dim; ++a)
    for (std::size_t b = 0; b < dim; ++b) {
      double v = -n * c[a + 1] * c[b + 1];
      if (a == b) v += n * c[a + 1];
      j(a, b) = v;
    }
  return j;
}

/// Asymptotic normal posterior N(m_n, J_n^{-1}) from the MLE, the observed
/// information, and a Gaussian prior given by its precision A0inv and mean.
struct LaplaceApprox {
  Vector beta_hat;
  SymMatrix J_hat;
  SymMatrix A0inv;
  Vector beta0;
  SymMatrix J_n;   ///< J_hat + A0inv (posterior precision)
  Vector m_n;      ///< posterior mean
  bool smoothed = false;
};

inline LaplaceApprox laplace_posterior(const Vector& counts, const Vector& beta0,
                                       const SymMatrix& A0inv) {
  const std::size_t dim = counts.size() - 1;
  require(A0inv.dim() == dim, "laplace_posterior: prior precision has wrong dimension");
  require(beta0.size() == dim, "laplace_posterior: prior mean has wrong dimension");

  LaplaceApprox out;
  const MultinomialMle mle = multinomial_mle(counts);
  out.beta_hat = mle.beta_hat;
  out.smoothed = mle.smoothed;
  out.beta0 = beta0;
  out.A0inv = A0inv;
  double n = 0.0;
  for (double c : counts) n += c;
  if (mle.smoothed) n += 0.5 * static_cast<double>(counts.size());
  out.J_hat = observed_information(out.beta_hat, n);

  Matrix jn = out.J_hat.matrix();
  bool flat_prior = true;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      jn(i, j) += A0inv(i, j);
      if (A0inv(i, j) != 0.0) flat_prior = false;
    }
  out.J_n = SymMatrix(jn);

  if (flat_prior) {
    out.m_n = out.beta_hat;  // m_n = beta_hat exactly in the flat-prior limit
    return out;
  }
  Vector rhs = matvec(out.A0inv.matrix(), beta0);
  const Vector jb = matvec(out.J_hat.matrix(), out.beta_hat);
  for (std::size_t i = 0; i < dim; ++i) rhs[i] += jb[i];
  try {
    out.m_n = solve_spd(out.J_n.matrix(), rhs);
  } catch (const numeric_error&) {
    throw numeric_error("laplace_posterior: posterior precision J_n is singular");
  }
  return out;
}

/// Convenience wrapper for the PGM penalty prior: A0inv = P*/tau2, beta0 = 0.
inline LaplaceApprox laplace_posterior_pgm(const Vector& counts, const PenaltyMatrix& penalty,
                                           double tau2) {
  require(tau2 > 0.0, "laplace_posterior_pgm: tau2 must be positive");
  const std::size_t dim = counts.size() - 1;
  require(penalty.dim() == dim, "laplace_posterior_pgm: penalty has wrong dimension");
  Matrix a0inv = penalty.Pstar.matrix();
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) a0inv(i, j) /= tau2;
  return laplace_posterior(counts, Vector(dim, 0.0), SymMatrix(a0inv));
}

}  // namespace densecraft

#endif  // DENSECRAFT_LAPLACE_HPP
