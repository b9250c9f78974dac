#ifndef DENSECRAFT_STOCHASTICS_HPP
#define DENSECRAFT_STOCHASTICS_HPP

#include <cmath>
#include <cstddef>

#include "densecraft/common.hpp"
#include "densecraft/linalg.hpp"
#include "densecraft/rng.hpp"
#include "densecraft/special.hpp"

namespace densecraft {

/// Multivariate normal draw via Cholesky, falling back to an
/// eigendecomposition factor when the covariance is PSD-singular.
/// Indefinite covariances rethrow the Cholesky error, which names the
/// offending leading minor.
inline Vector draw_mvn(RngStream& rng, const Vector& mean, const SymMatrix& cov) {
  const std::size_t n = mean.size();
  require(cov.dim() == n, "draw_mvn: mean/cov dimension mismatch");
  Vector z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = draw_normal(rng, 0.0, 1.0);

  Matrix factor;
  try {
    factor = cholesky(cov.matrix());
  } catch (const numeric_error&) {
    const EigenDecomposition eig = sym_eigen(cov);
    const double scale = std::max(std::abs(eig.values.front()), std::abs(eig.values.back()));
    for (double lambda : eig.values)
      if (lambda < -1e-10 * std::max(scale, 1e-300)) throw;  // genuinely indefinite
    factor = eig.vectors;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = std::sqrt(std::max(eig.values[j], 0.0));
      for (std::size_t i = 0; i < n; ++i) factor(i, j) *= s;
    }
  }

  Vector x = matvec(factor, z);
  for (std::size_t i = 0; i < n; ++i) x[i] += mean[i];
  return x;
}

}  // namespace densecraft

#endif  // DENSECRAFT_STOCHASTICS_HPP
