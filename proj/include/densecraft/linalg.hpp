#ifndef DENSECRAFT_LINALG_HPP
#define DENSECRAFT_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "densecraft/common.hpp"

namespace densecraft {

/// Dense row-major matrix. Small and value-semantic; everything in this
/// toolkit is at most a few hundred rows.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Vector matvec(const Matrix& a, const Vector& x) {
  require(a.cols() == x.size(), "matvec: dimension mismatch");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

inline Vector matvec_transposed(const Matrix& a, const Vector& x) {
  require(a.rows() == x.size(), "matvec_transposed: dimension mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += a(i, j) * xi;
  }
  return y;
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j)));
  return m;
}

/// Dense symmetric matrix. Construction checks symmetry to 1e-12 relative
/// and stores the symmetrized entries.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(Matrix m) : m_(std::move(m)) {
    require(m_.rows() == m_.cols(), "SymMatrix: matrix must be square");
    const double scale = std::max(1.0, max_abs(m_));
    for (std::size_t i = 0; i < m_.rows(); ++i)
      for (std::size_t j = i + 1; j < m_.cols(); ++j) {
        if (std::abs(m_(i, j) - m_(j, i)) > 1e-12 * scale)
          throw std::invalid_argument("SymMatrix: asymmetric beyond 1e-12 relative at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
        const double avg = 0.5 * (m_(i, j) + m_(j, i));
        m_(i, j) = avg;
        m_(j, i) = avg;
      }
  }

  explicit SymMatrix(std::size_t n) : m_(n, n) {}

  std::size_t dim() const { return m_.rows(); }
  double& operator()(std::size_t i, std::size_t j) { return m_(i, j); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) t += m_(i, i);
    return t;
  }

  /// Quadratic form x' M x.
  double quad(const Vector& x) const {
    require(x.size() == dim(), "SymMatrix::quad: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < dim(); ++j) row += m_(i, j) * x[j];
      s += x[i] * row;
    }
    return s;
  }

 private:
  Matrix m_;
};

/// Lower Cholesky factor of an SPD matrix. Throws numeric_error naming the
/// first leading minor whose pivot fails.
inline Matrix cholesky(const Matrix& a) {
  require(a.rows() == a.cols(), "cholesky: matrix must be square");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d))
      throw numeric_error("cholesky: leading minor " + std::to_string(j + 1) +
                          " not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

inline Vector forward_solve(const Matrix& l, const Vector& b) {
  const std::size_t n = l.rows();
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

inline Vector backward_solve_transposed(const Matrix& l, const Vector& b) {
  const std::size_t n = l.rows();
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

/// Solves A x = b for SPD A via Cholesky.
inline Vector solve_spd(const Matrix& a, const Vector& b) {
  const Matrix l = cholesky(a);
  return backward_solve_transposed(l, forward_solve(l, b));
}

/// Inverse of an SPD matrix (column-by-column Cholesky solves).
inline Matrix inverse_spd(const Matrix& a) {
  const std::size_t n = a.rows();
  const Matrix l = cholesky(a);
  Matrix inv(n, n);
  Vector e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const Vector col = backward_solve_transposed(l, forward_solve(l, e));
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    e[j] = 0.0;
  }
  return inv;
}

struct EigenDecomposition {
  Vector values;    ///< eigenvalues, sorted descending
  Matrix vectors;   ///< column j is the eigenvector for values[j]
};

namespace detail {

// Householder reduction of a symmetric matrix to tridiagonal form with
// accumulation of the orthogonal transform (classic tred2).
inline void tridiagonalize(Matrix& z, Vector& d, Vector& e) {
  const std::size_t n = z.rows();
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t l = i - 1;
    double h = 0.0, scale = 0.0;
    if (l > 0) {
      for (std::size_t k = 0; k < i; ++k) scale += std::abs(z(i, k));
      if (scale == 0.0) {
        e[i] = z(i, l);
      } else {
        for (std::size_t k = 0; k < i; ++k) {
          z(i, k) /= scale;
          h += z(i, k) * z(i, k);
        }
        double f = z(i, l);
        double g = (f >= 0.0 ? -std::sqrt(h) : std::sqrt(h));
        e[i] = scale * g;
        h -= f * g;
        z(i, l) = f - g;
        f = 0.0;
        for (std::size_t j = 0; j < i; ++j) {
          z(j, i) = z(i, j) / h;
          g = 0.0;
          for (std::size_t k = 0; k < j + 1; ++k) g += z(j, k) * z(i, k);
          for (std::size_t k = j + 1; k < i; ++k) g += z(k, j) * z(i, k);
          e[j] = g / h;
          f += e[j] * z(i, j);
        }
        const double hh = f / (h + h);
        for (std::size_t j = 0; j < i; ++j) {
          f = z(i, j);
          e[j] = g = e[j] - hh * f;
          for (std::size_t k = 0; k < j + 1; ++k) z(j, k) -= f * e[k] + g * z(i, k);
        }
      }
    } else {
      e[i] = z(i, l);
    }
    d[i] = h;
  }
  d[0] = 0.0;
  e[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] != 0.0) {
      for (std::size_t j = 0; j < i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k < i; ++k) g += z(i, k) * z(k, j);
        for (std::size_t k = 0; k < i; ++k) z(k, j) -= g * z(k, i);
      }
    }
    d[i] = z(i, i);
    z(i, i) = 1.0;
    for (std::size_t j = 0; j < i; ++j) z(j, i) = z(i, j) = 0.0;
  }
}

// QL with implicit shifts on the tridiagonal (d, e), rotating the columns of
// z along (classic tqli).
inline void ql_implicit(Vector& d, Vector& e, Matrix& z) {
  const std::size_t n = d.size();
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd) break;
      }
      if (m != l) {
        if (iter++ == 50) throw numeric_error("sym_eigen: QL iteration did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::abs(r) : -std::abs(r)));
        double s = 1.0, c = 1.0, p = 0.0;
        bool underflow = false;
        std::size_t i = m;
        while (i-- > l) {
          double f = s * e[i];
          const double b = c * e[i];
          e[i + 1] = (r = std::hypot(f, g));
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          d[i + 1] = g + (p = s * r);
          g = c * r - b;
          for (std::size_t k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (underflow) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

}  // namespace detail

/// Eigendecomposition of a symmetric matrix: tridiagonalization + implicit
/// QL. Eigenvalues are returned descending with matching orthonormal
/// eigenvector columns, so m = Q diag(values) Q'.
inline EigenDecomposition sym_eigen(const SymMatrix& m) {
  const std::size_t n = m.dim();
  require(n > 0, "sym_eigen: empty matrix");
  EigenDecomposition out;
  if (n == 1) {
    out.values = {m(0, 0)};
    out.vectors = Matrix::identity(1);
    return out;
  }
  Matrix z = m.matrix();
  Vector d(n), e(n);
  detail::tridiagonalize(z, d, e);
  detail::ql_implicit(d, e, z);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&d](std::size_t a, std::size_t b) { return d[a] > d[b]; });
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = d[order[j]];
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = z(i, order[j]);
  }
  return out;
}

}  // namespace densecraft

#endif  // DENSECRAFT_LINALG_HPP
