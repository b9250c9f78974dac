#ifndef DENSECRAFT_SPECIAL_HPP
#define DENSECRAFT_SPECIAL_HPP

#include <cmath>
#include <limits>
#include <stdexcept>

#include "densecraft/common.hpp"

namespace densecraft {

inline double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
}

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

namespace detail {

// Series representation of the regularized lower incomplete gamma P(a,x),
// valid for x < a+1.
inline double gamma_p_series(double a, double x) {
  if (x <= 0.0) return 0.0;
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw numeric_error("gamma_p_series: no convergence");
}

// Continued fraction for the regularized upper incomplete gamma Q(a,x)
// (modified Lentz), valid for x >= a+1.
inline double gamma_q_cf(double a, double x) {
  const double fpmin = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16)
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  }
  throw numeric_error("gamma_q_cf: no convergence");
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a,x) = gamma(a,x)/Gamma(a).
inline double gamma_p(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("gamma_p: a must be positive");
  if (x < 0.0) throw std::invalid_argument("gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_cf(a, x);
}

/// Regularized upper incomplete gamma Q(a,x) = 1 - P(a,x).
inline double gamma_q(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("gamma_q: a must be positive");
  if (x < 0.0) throw std::invalid_argument("gamma_q: x must be nonnegative");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_cf(a, x);
}

/// CDF of Gamma(shape, rate) at y.
inline double gamma_cdf(double y, double shape, double rate) {
  if (y <= 0.0) return 0.0;
  return gamma_p(shape, rate * y);
}

/// CDF of the inverse gamma IG(shape, scale) with density
/// p(x) ~ x^{-(shape+1)} exp(-scale/x): P(X <= x) = Q(shape, scale/x).
inline double inverse_gamma_cdf(double x, double shape, double scale) {
  if (x <= 0.0) return 0.0;
  return gamma_q(shape, scale / x);
}

}  // namespace densecraft

#endif  // DENSECRAFT_SPECIAL_HPP
