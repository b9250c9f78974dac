#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include "densecraft/stochastics.hpp"
#include "helpers.hpp"

using namespace densecraft;
using Catch::Approx;

namespace {

// Rejection-sampling oracle for the truncated inverse gamma: repeat plain
// IG draws (Marsaglia-Tsang path, independent of the inverse-CDF path under
// test) until one falls inside (0, upper].
double rejection_truncated_ig(RngStream& rng, double shape, double scale, double upper) {
  for (;;) {
    const double x = draw_inverse_gamma(rng, shape, scale);
    if (x <= upper) return x;
  }
}

}  // namespace

TEST_CASE("draw_normal basics") {
  SECTION("identical seed and call sequence give identical draws") {
    RngStream r1(99), r2(99);
    for (int i = 0; i < 10; ++i)
      REQUIRE(draw_normal(r1, 0.0, 1.0) == draw_normal(r2, 0.0, 1.0));
  }
  SECTION("degenerate concentration") {
    RngStream rng(1);
    REQUIRE(draw_normal(rng, 5.0, 1e-300) == Approx(5.0));
  }
  SECTION("law of large numbers") {
    RngStream rng(7);
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += draw_normal(rng, 0.0, 1.0);
    REQUIRE(std::abs(s / n) < 0.02);
  }
  SECTION("invalid sd") {
    RngStream rng(1);
    REQUIRE_THROWS_AS(draw_normal(rng, 0.0, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(draw_normal(rng, 0.0, -1.0), std::invalid_argument);
  }
}

TEST_CASE("draw_mvn") {
  SECTION("identity covariance marginals are standard normal") {
    RngStream rng(11);
    const SymMatrix cov(Matrix::identity(3));
    const Vector mean(3, 0.0);
    Vector first(10000), second(10000);
    for (int i = 0; i < 10000; ++i) {
      const Vector x = draw_mvn(rng, mean, cov);
      first[i] = x[0];
      second[i] = x[1];
    }
    auto std_normal_cdf = [](double x) { return normal_cdf(x); };
    REQUIRE(dctest::ks_test(first, std_normal_cdf) > 0.01);
    REQUIRE(dctest::ks_test(second, std_normal_cdf) > 0.01);
  }
  SECTION("zero covariance returns the mean exactly") {
    RngStream rng(3);
    const SymMatrix cov{Matrix(2, 2, 0.0)};
    const Vector mean{1.5, -2.5};
    const Vector x = draw_mvn(rng, mean, cov);
    REQUIRE(x[0] == 1.5);
    REQUIRE(x[1] == -2.5);
  }
  SECTION("correlation 0.9 is reproduced") {
    RngStream rng(5);
    Matrix c(2, 2);
    c(0, 0) = c(1, 1) = 1.0;
    c(0, 1) = c(1, 0) = 0.9;
    const SymMatrix cov(std::move(c));
    const Vector mean(2, 0.0);
    Vector xs(100000), ys(100000);
    for (int i = 0; i < 100000; ++i) {
      const Vector x = draw_mvn(rng, mean, cov);
      xs[i] = x[0];
      ys[i] = x[1];
    }
    REQUIRE(std::abs(dctest::correlation(xs, ys) - 0.9) < 0.03);
  }
  SECTION("indefinite covariance names the offending minor") {
    RngStream rng(1);
    Matrix c(2, 2);
    c(0, 0) = 1.0;
    c(1, 1) = -2.0;
    const SymMatrix cov(std::move(c));
    try {
      draw_mvn(rng, Vector(2, 0.0), cov);
      FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
      REQUIRE(std::string(e.what()).find("minor 2") != std::string::npos);
    }
  }
  SECTION("sample covariance converges elementwise (5x5)") {
    RngStream rng(17);
    const std::size_t d = 5;
    // Well-conditioned SPD built as B B' + I.
    Matrix b(d, d);
    RngStream init(123);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) b(i, j) = draw_normal(init, 0.0, 0.5);
    Matrix c = matmul(b, transpose(b));
    for (std::size_t i = 0; i < d; ++i) c(i, i) += 1.0;
    const SymMatrix cov(c);

    const int n = 100000;
    std::vector<Vector> xs(n);
    const Vector mean(d, 0.0);
    for (int k = 0; k < n; ++k) xs[k] = draw_mvn(rng, mean, cov);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += xs[k][i] * xs[k][j];
        s /= n;
        const double scale = std::sqrt(cov(i, i) * cov(j, j));
        REQUIRE(std::abs(s - cov(i, j)) < 0.05 * scale);
      }
  }
}

TEST_CASE("draw_inverse_gamma") {
  SECTION("analytic mean of IG(3,2) is scale/(shape-1) = 1") {
    RngStream rng(13);
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += draw_inverse_gamma(rng, 3.0, 2.0);
    REQUIRE(s / n == Approx(1.0).margin(0.02));
  }
  SECTION("reciprocal is Gamma(shape, rate=scale)") {
    RngStream rng(19);
    Vector recip(10000);
    for (auto& x : recip) x = 1.0 / draw_inverse_gamma(rng, 3.0, 2.0);
    auto cdf = [](double y) { return gamma_cdf(y, 3.0, 2.0); };
    REQUIRE(dctest::ks_test(recip, cdf) > 0.01);
  }
  SECTION("invalid parameters") {
    RngStream rng(1);
    REQUIRE_THROWS_AS(draw_inverse_gamma(rng, 0.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(draw_inverse_gamma(rng, 1.0, 0.0), std::invalid_argument);
  }
}

TEST_CASE("draw_truncated_inverse_gamma") {
  SECTION("vacuous truncation matches the untruncated law") {
    RngStream rng(23);
    Vector trunc(10000);
    for (auto& x : trunc) x = draw_truncated_inverse_gamma(rng, 3.0, 2.0, 1e12);
    auto cdf = [](double x) { return inverse_gamma_cdf(x, 3.0, 2.0); };
    REQUIRE(dctest::ks_test(trunc, cdf) > 0.01);
  }
  SECTION("support is respected") {
    RngStream rng(29);
    for (int i = 0; i < 2000; ++i)
      REQUIRE(draw_truncated_inverse_gamma(rng, 3.0, 2.0, 0.7) <= 0.7);
  }
  SECTION("agrees with the rejection-sampling oracle") {
    RngStream rng(31), oracle_rng(37);
    const int n = 10000;
    Vector a(n), b(n);
    double ma = 0.0, mb = 0.0;
    for (int i = 0; i < n; ++i) {
      a[i] = draw_truncated_inverse_gamma(rng, 3.0, 2.0, 1.0);
      b[i] = rejection_truncated_ig(oracle_rng, 3.0, 2.0, 1.0);
      ma += a[i];
      mb += b[i];
    }
    ma /= n;
    mb /= n;
    REQUIRE(std::abs(ma - mb) / mb < 0.02);
    REQUIRE(dctest::ks_test_two_sample(a, b) > 0.01);
  }
  SECTION("degenerate truncation region") {
    RngStream rng(1);
    // IG(3,2) has essentially no mass below 1e-9.
    REQUIRE_THROWS_AS(draw_truncated_inverse_gamma(rng, 3.0, 2.0, 1e-9), numeric_error);
  }
}

TEST_CASE("draw_categorical") {
  SECTION("point mass") {
    RngStream rng(41);
    for (int i = 0; i < 100; ++i) REQUIRE(draw_categorical(rng, {1.0, 0.0, 0.0}) == 0);
  }
  SECTION("empirical frequencies") {
    RngStream rng(43);
    const Vector p{0.2, 0.3, 0.5};
    std::vector<int> counts(3, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[draw_categorical(rng, p)];
    for (int j = 0; j < 3; ++j)
      REQUIRE(std::abs(static_cast<double>(counts[j]) / n - p[j]) < 0.01);
  }
  SECTION("slightly unnormalized input is renormalized") {
    RngStream rng(47);
    const Vector p{0.499999, 0.5};
    REQUIRE_NOTHROW(draw_categorical(rng, p));
  }
  SECTION("all-zero vector rejected") {
    RngStream rng(1);
    REQUIRE_THROWS_AS(draw_categorical(rng, {0.0, 0.0}), std::invalid_argument);
  }
}

TEST_CASE("draw_beta") {
  SECTION("Beta(1,1) is uniform") {
    RngStream rng(53);
    Vector xs(10000);
    for (auto& x : xs) x = draw_beta(rng, 1.0, 1.0);
    REQUIRE(dctest::ks_test(xs, [](double x) { return x; }) > 0.01);
  }
  SECTION("Beta(2,3) mean") {
    RngStream rng(59);
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += draw_beta(rng, 2.0, 3.0);
    REQUIRE(s / n == Approx(0.4).margin(0.004));
  }
  SECTION("invalid parameters") {
    RngStream rng(1);
    REQUIRE_THROWS_AS(draw_beta(rng, 0.0, 1.0), std::invalid_argument);
  }
}

TEST_CASE("draw_gamma") {
  SECTION("analytic mean") {
    RngStream rng(61);
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += draw_gamma(rng, 2.5, 2.0);
    REQUIRE(s / n == Approx(1.25).epsilon(0.01));
  }
  SECTION("shape 1 reduces to exponential") {
    RngStream rng(67);
    Vector xs(10000);
    for (auto& x : xs) x = draw_gamma(rng, 1.0, 1.5);
    REQUIRE(dctest::ks_test(xs, [](double x) { return 1.0 - std::exp(-1.5 * x); }) > 0.01);
  }
  SECTION("invalid rate") {
    RngStream rng(1);
    REQUIRE_THROWS_AS(draw_gamma(rng, 1.0, 0.0), std::invalid_argument);
  }
}

TEST_CASE("sym_eigen") {
  SECTION("identity") {
    const auto eig = sym_eigen(SymMatrix(Matrix::identity(4)));
    for (double v : eig.values) REQUIRE(v == Approx(1.0));
  }
  SECTION("diagonal matrix sorts descending") {
    Matrix m(3, 3);
    m(0, 0) = 3.0;
    m(1, 1) = 1.0;
    m(2, 2) = 2.0;
    const auto eig = sym_eigen(SymMatrix(std::move(m)));
    REQUIRE(eig.values[0] == Approx(3.0));
    REQUIRE(eig.values[1] == Approx(2.0));
    REQUIRE(eig.values[2] == Approx(1.0));
  }
  SECTION("random PSD: orthogonality and reconstruction") {
    RngStream rng(71);
    const std::size_t n = 10;
    Matrix b(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) b(i, j) = draw_normal(rng, 0.0, 1.0);
    const Matrix a = matmul(b, transpose(b));
    const SymMatrix sym(a);
    const auto eig = sym_eigen(sym);

    const Matrix qtq = matmul(transpose(eig.vectors), eig.vectors);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        REQUIRE(qtq(i, j) == Approx(i == j ? 1.0 : 0.0).margin(1e-10));

    Matrix qd = eig.vectors;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) qd(i, j) *= eig.values[j];
    const Matrix rec = matmul(qd, transpose(eig.vectors));
    const double scale = max_abs(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        REQUIRE(std::abs(rec(i, j) - a(i, j)) <= 1e-9 * scale);
  }
  SECTION("asymmetric input rejected") {
    Matrix m(2, 2);
    m(0, 1) = 1.0;
    m(1, 0) = 2.0;
    REQUIRE_THROWS_AS(SymMatrix(std::move(m)), std::invalid_argument);
  }
}

TEST_CASE("stream reproducibility across operation mixes") {
  auto run = [](std::uint64_t seed) {
    RngStream rng(seed);
    Vector out;
    out.push_back(draw_normal(rng, 0.0, 2.0));
    out.push_back(draw_gamma(rng, 1.7, 0.8));
    out.push_back(draw_beta(rng, 2.0, 5.0));
    out.push_back(draw_inverse_gamma(rng, 4.0, 3.0));
    out.push_back(draw_truncated_inverse_gamma(rng, 3.0, 2.0, 1.0));
    out.push_back(static_cast<double>(draw_categorical(rng, {0.3, 0.7})));
    return out;
  };
  const Vector a = run(12345), b = run(12345), c = run(54321);
  REQUIRE(a == b);
  REQUIRE(a != c);
}
