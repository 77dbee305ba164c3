#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "phytac/matrix.hpp"
#include "phytac/optimizer.hpp"
#include "phytac/rng.hpp"

using namespace phytac;

// ---------------------------------------------------------------------------
// Rng

TEST_CASE("rng matches the reference stream bit for bit") {
  // First raw draws for seed 42, computed with an independent Python
  // implementation of the same counter-based SplitMix64 recipe.
  Rng rng(42);
  CHECK(rng.next_u64() == 0xbdd732262feb6e95ULL);
  CHECK(rng.next_u64() == 0x28efe333b266f103ULL);
  CHECK(rng.next_u64() == 0x47526757130f9f52ULL);
  CHECK(rng.next_u64() == 0x581ce1ff0e4ae394ULL);
  CHECK(rng.next_u64() == 0x09bc585a244823f2ULL);

  Rng u(42);
  CHECK(u.uniform() == Catch::Approx(0.7415648787718233).epsilon(0).margin(0));
  CHECK(u.uniform() == Catch::Approx(0.1599103928769201).epsilon(0).margin(0));

  Rng n(42);
  CHECK(n.normal() == Catch::Approx(0.4147197504315305).margin(1e-15));
  CHECK(n.normal() == Catch::Approx(0.6526812221519427).margin(1e-15));

  CHECK(Rng(42).derive(7).seed() == 0xda76d5e2382945abULL);
  CHECK(Rng(42).derive(7).next_u64() == 0xaf66c721a1836a5dULL);
}

TEST_CASE("rng streams with equal seeds are identical, different seeds diverge") {
  Rng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000000; ++i) {
    const std::uint64_t va = a.next_u64();
    all_equal = all_equal && (va == b.next_u64());
    any_diff = any_diff || (va != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng uniform stays in [0,1) and has sane moments") {
  Rng rng(7);
  double sum = 0.0, sum2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(mean == Catch::Approx(0.5).margin(0.01));
  CHECK(var == Catch::Approx(1.0 / 12.0).margin(0.005));
}

TEST_CASE("rng normal has sane moments and finite values") {
  Rng rng(11);
  double sum = 0.0, sum2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    REQUIRE(std::isfinite(z));
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  CHECK(mean == Catch::Approx(0.0).margin(0.02));
  CHECK(sum2 / n - mean * mean == Catch::Approx(1.0).margin(0.03));
}

TEST_CASE("rng derived streams differ per salt and are stable") {
  Rng base(99);
  Rng d1 = base.derive(1);
  Rng d2 = base.derive(2);
  CHECK(d1.seed() != d2.seed());
  CHECK(base.derive(1).seed() == d1.seed());
  CHECK(d1.next_u64() != d2.next_u64());
  // Deriving does not advance the parent stream.
  CHECK(base.counter() == 0);
}

// ---------------------------------------------------------------------------
// Mat

TEST_CASE("matmul matches a hand-computed product") {
  Mat a(2, 2);
  a(0, 0) = 1; a(0, 1) = 2; a(1, 0) = 3; a(1, 1) = 4;
  Mat b(2, 1);
  b(0, 0) = 0; b(1, 0) = 1;
  Mat c = matmul(a, b);
  REQUIRE(c.rows() == 2);
  REQUIRE(c.cols() == 1);
  CHECK(c(0, 0) == 2.0);
  CHECK(c(1, 0) == 4.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Mat a(2, 3), b(2, 2);
  CHECK_THROWS_AS(matmul(a, b), contract_error);
}

TEST_CASE("matmul is associative to rounding") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Mat a = Mat::randn(8, 8, rng);
    Mat b = Mat::randn(8, 8, rng);
    Mat c = Mat::randn(8, 8, rng);
    Mat lhs = matmul(matmul(a, b), c);
    Mat rhs = matmul(a, matmul(b, c));
    const double scale = std::max(1.0, lhs.max_abs());
    CHECK((lhs - rhs).max_abs() <= 1e-10 * scale);
  }
}

TEST_CASE("transpose and norms behave") {
  Mat a(2, 3);
  a(0, 0) = 1; a(0, 1) = -2; a(0, 2) = 3;
  a(1, 0) = 0; a(1, 1) = 5;  a(1, 2) = -1;
  Mat t = a.transpose();
  REQUIRE(t.rows() == 3);
  CHECK(t(1, 0) == -2.0);
  CHECK(a.max_abs() == 5.0);
  CHECK(a.norm_inf_op() == 6.0);  // max row sum: |1|+|2|+|3|
}

TEST_CASE("solve_linear recovers a hand-solved diagonal system") {
  Mat a(2, 2);
  a(0, 0) = 2; a(1, 1) = 4;
  Mat b(2, 1);
  b(0, 0) = 2; b(1, 0) = 8;
  Mat x = solve_linear(a, b);
  CHECK(x(0, 0) == Catch::Approx(1.0).margin(1e-14));
  CHECK(x(1, 0) == Catch::Approx(2.0).margin(1e-14));
}

TEST_CASE("solve_linear rejects singular and ill-conditioned input") {
  Mat s(2, 2, 1.0);  // [[1,1],[1,1]]
  Mat b(2, 1, 1.0);
  CHECK_THROWS_AS(solve_linear(s, b), numeric_error);

  Mat ill = Mat::identity(2);
  ill(1, 1) = 1e-14;  // condition ~1e14 > default bound
  CHECK_THROWS_AS(solve_linear(ill, b), numeric_error);

  Mat rect(2, 3);
  CHECK_THROWS_AS(solve_linear(rect, b), contract_error);
}

TEST_CASE("solve_linear residual stays at working precision") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(10);
    Mat a = Mat::randn(n, n, rng);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 4.0;  // keep well-conditioned
    Mat b = Mat::randn(n, 1, rng);
    Mat x = solve_linear(a, b);
    const double resid = (b - matmul(a, x)).max_abs();
    CHECK(resid <= 1e-9 * std::max(1.0, b.max_abs()));
  }
}

TEST_CASE("sym_eig3 diagonalizes hand and random symmetric matrices") {
  Eig3 e = sym_eig3({{{3, 0, 0}, {0, 1, 0}, {0, 0, 2}}});
  CHECK(e.values[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(e.values[1] == Catch::Approx(2.0).margin(1e-12));
  CHECK(e.values[2] == Catch::Approx(3.0).margin(1e-12));
  CHECK(std::abs(e.vectors[0][1]) == Catch::Approx(1.0).margin(1e-12));

  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<std::array<double, 3>, 3> m{};
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) m[i][j] = m[j][i] = rng.normal();
    Eig3 r = sym_eig3(m);
    CHECK(r.values[0] <= r.values[1]);
    CHECK(r.values[1] <= r.values[2]);
    for (int k = 0; k < 3; ++k) {
      // A v = lambda v
      for (int i = 0; i < 3; ++i) {
        double av = 0.0;
        for (int j = 0; j < 3; ++j) av += m[i][j] * r.vectors[k][j];
        CHECK(av == Catch::Approx(r.values[k] * r.vectors[k][i]).margin(1e-9));
      }
      double nrm = 0.0;
      for (int i = 0; i < 3; ++i) nrm += r.vectors[k][i] * r.vectors[k][i];
      CHECK(nrm == Catch::Approx(1.0).margin(1e-9));
    }
  }
}

TEST_CASE("spectral_radius matches known eigenvalues") {
  Mat d(2, 2);
  d(0, 0) = 0.5; d(1, 1) = 0.2;
  CHECK(spectral_radius(d) == Catch::Approx(0.5).margin(1e-6));

  Mat rot(2, 2);  // eigenvalues +/- 0.5i
  rot(0, 1) = 0.5; rot(1, 0) = -0.5;
  CHECK(spectral_radius(rot) == Catch::Approx(0.5).margin(1e-6));

  Mat z(3, 3);
  CHECK(spectral_radius(z) == 0.0);
}

// ---------------------------------------------------------------------------
// Adam + gradient check

TEST_CASE("adam leaves parameters unchanged on zero gradient") {
  std::vector<double> p = {1.0, -2.0, 3.0};
  const std::vector<double> p0 = p;
  AdamState opt(0.1);
  opt.step(p, {0.0, 0.0, 0.0});
  CHECK(p == p0);
}

TEST_CASE("adam first step moves against the gradient at ~lr") {
  std::vector<double> p = {0.0};
  AdamState opt(0.1);
  opt.step(p, {2.5});
  // Bias-corrected first step is lr * g / (|g| + eps) ~ lr * sign(g).
  CHECK(p[0] == Catch::Approx(-0.1).margin(1e-6));
}

TEST_CASE("adam descends a quadratic deterministically") {
  auto run = [] {
    std::vector<double> p = {5.0, -3.0};
    AdamState opt(0.05);
    for (int i = 0; i < 500; ++i) opt.step(p, {2.0 * p[0], 2.0 * p[1]});
    return p;
  };
  std::vector<double> a = run(), b = run();
  CHECK(a == b);
  CHECK(std::abs(a[0]) < 1e-2);
  CHECK(std::abs(a[1]) < 1e-2);
}

TEST_CASE("adam rejects shape changes and non-finite gradients") {
  std::vector<double> p = {1.0, 2.0};
  AdamState opt;
  opt.step(p, {0.1, 0.1});
  std::vector<double> short_p = {1.0};
  CHECK_THROWS_AS(opt.step(short_p, {0.1}), contract_error);
  CHECK_THROWS_AS(opt.step(p, {0.1, std::nan("")}), numeric_error);
}

TEST_CASE("check_gradient accepts exact gradients and flags wrong ones") {
  Rng rng(31);
  std::vector<double> p = {0.7, -1.3, 2.1, 0.01};
  auto loss = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  std::vector<double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) grad[i] = 2.0 * p[i];
  CHECK(check_gradient(loss, p, grad, 32, rng) <= 1e-6);

  std::vector<double> wrong(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) wrong[i] = 4.0 * p[i];
  const double rel = check_gradient(loss, p, wrong, 32, rng);
  CHECK(rel > 0.4);

  auto flat = [](const std::vector<double>&) { return 3.0; };
  CHECK(check_gradient(flat, p, std::vector<double>(p.size(), 0.0), 16, rng) <=
        1e-6);
}
