#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fairbide/matrix.hpp"
#include "fairbide/rng.hpp"
#include "fairbide/special.hpp"

using namespace fairbide;

TEST_CASE("matmul identity and hand-computed product") {
  Matrix i2 = Matrix::identity(2);
  Matrix p = matmul(i2, i2);
  CHECK(p(0, 0) == 1.0);
  CHECK(p(0, 1) == 0.0);
  CHECK(p(1, 1) == 1.0);

  Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix b = Matrix::from_rows({{1}, {1}});
  Matrix c = matmul(a, b);
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 1);
  CHECK(c(0, 0) == doctest::Approx(3.0));
  CHECK(c(1, 0) == doctest::Approx(7.0));
}

TEST_CASE("matmul dimension mismatch raises") {
  Matrix a(2, 3, 1.0);
  Matrix b(2, 2, 1.0);
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("matmul associativity on random matrices") {
  RngStream rng(7, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = draw_normal(4, 5, rng);
    Matrix b = draw_normal(5, 3, rng);
    Matrix c = draw_normal(3, 6, rng);
    Matrix left = matmul(matmul(a, b), c);
    Matrix right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double denom = std::max(std::fabs(right.data()[i]), 1.0);
      CHECK(std::fabs(left.data()[i] - right.data()[i]) / denom < 1e-9);
    }
  }
}

TEST_CASE("transposed gemm variants agree with explicit transpose") {
  RngStream rng(11, 0);
  Matrix a = draw_normal(4, 6, rng);
  Matrix b = draw_normal(4, 3, rng);
  Matrix tn = matmul_tn(a, b);
  Matrix ref = matmul(transpose(a), b);
  for (std::size_t i = 0; i < tn.size(); ++i)
    CHECK(tn.data()[i] == doctest::Approx(ref.data()[i]));

  Matrix c = draw_normal(5, 6, rng);
  Matrix nt = matmul_nt(a, c);
  Matrix ref2 = matmul(a, transpose(c));
  for (std::size_t i = 0; i < nt.size(); ++i)
    CHECK(nt.data()[i] == doctest::Approx(ref2.data()[i]));
}

TEST_CASE("sparse multiply matches dense") {
  RngStream rng(13, 0);
  Matrix dense = draw(Distribution::bernoulli, 20, 15, rng, 0.2);
  SparseMatrix sp(dense);
  Matrix x = draw_normal(15, 4, rng);
  Matrix ref = matmul(dense, x);
  Matrix out;
  sp.multiply(x, out);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(out.data()[i] == doctest::Approx(ref.data()[i]));

  Matrix xt = draw_normal(20, 3, rng);
  Matrix ref_t = matmul(transpose(dense), xt);
  Matrix out_t;
  sp.transposed().multiply(xt, out_t);
  for (std::size_t i = 0; i < ref_t.size(); ++i)
    CHECK(out_t.data()[i] == doctest::Approx(ref_t.data()[i]));
}

TEST_CASE("solve_linear recovers solution") {
  RngStream rng(17, 0);
  Matrix a = draw_normal(4, 4, rng);
  for (std::size_t i = 0; i < 4; ++i) a(i, i) += 4.0;
  Matrix x_true = draw_normal(4, 2, rng);
  Matrix b = matmul(a, x_true);
  Matrix x = solve_linear(a, b);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(x.data()[i] == doctest::Approx(x_true.data()[i]).epsilon(1e-9));
}

TEST_CASE("draw: normal sample mean within CLT bound") {
  RngStream rng(42, 1);
  Matrix m = draw_normal(100000, 1, rng);
  CHECK(std::fabs(mean(m)) < 0.02);
}

TEST_CASE("draw: rademacher support") {
  RngStream rng(42, 2);
  Matrix m = draw(Distribution::rademacher, 1000, 1, rng);
  for (std::size_t i = 0; i < m.size(); ++i)
    CHECK((m.data()[i] == 1.0 || m.data()[i] == -1.0));
}

TEST_CASE("draw: exponential mean 21 within CLT bound") {
  RngStream rng(42, 3);
  Matrix m = draw(Distribution::exponential, 100000, 1, rng, 21.0);
  CHECK(std::fabs(mean(m) - 21.0) < 0.5);
}

TEST_CASE("draw: invalid parameters raise") {
  RngStream rng(42, 4);
  CHECK_THROWS_AS(draw(Distribution::exponential, 2, 2, rng, -1.0), NumericError);
  CHECK_THROWS_AS(draw(Distribution::bernoulli, 2, 2, rng, 1.5), NumericError);
}

TEST_CASE("multinomial validates probabilities and hits all categories") {
  RngStream rng(42, 5);
  std::vector<double> bad{0.5, 0.4};
  CHECK_THROWS_AS(rng.multinomial(bad), NumericError);
  std::vector<double> probs{0.3, 0.4, 0.3};
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 30000; ++i) counts[rng.multinomial(probs)]++;
  CHECK(std::fabs(counts[0] / 30000.0 - 0.3) < 0.02);
  CHECK(std::fabs(counts[1] / 30000.0 - 0.4) < 0.02);
}

TEST_CASE("rng streams reproduce exactly") {
  RngStream a(123, 9);
  RngStream b(123, 9);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c(123, 10);
  bool any_diff = false;
  RngStream a2(123, 9);
  for (int i = 0; i < 10; ++i) any_diff |= (a2.next_u64() != c.next_u64());
  CHECK(any_diff);
}

TEST_CASE("rng engine outputs are stable across runs and builds") {
  // frozen reference sequence for (seed 42, stream 7); the engine is fully
  // specified by the standard, so these values pin cross-process stability
  const std::uint64_t expected[4] = {14088956076275870458ULL, 1713721644027056784ULL,
                                     2572734118214614168ULL, 7515831963447617043ULL};
  RngStream s(42, 7);
  for (int i = 0; i < 4; ++i) CHECK(s.next_u64() == expected[i]);
}

TEST_CASE("rng normal sequence identical across stream reconstruction") {
  RngStream a(55, 3);
  std::vector<double> first;
  for (int i = 0; i < 64; ++i) first.push_back(a.normal());
  RngStream b(55, 3);
  for (int i = 0; i < 64; ++i) CHECK(b.normal() == first[i]);
}

TEST_CASE("gamma_cdf trivial and closed-form values") {
  CHECK(gamma_cdf(0.0, 2.5, 1.3) == 0.0);
  CHECK(gamma_cdf(1e6, 2.5, 1.3) == doctest::Approx(1.0).epsilon(1e-10));
  // shape 1 is the exponential distribution
  CHECK(std::fabs(gamma_cdf(2.0, 1.0, 2.0) - (1.0 - std::exp(-1.0))) < 1e-12);
  CHECK_THROWS_AS(gamma_cdf(-1.0, 1.0, 1.0), NumericError);
  CHECK_THROWS_AS(gamma_cdf(1.0, 0.0, 1.0), NumericError);
}

TEST_CASE("gamma_cdf against independent erf/series oracles") {
  // chi-square with 1 dof: P(X <= x) = erf(sqrt(x/2)); gamma(0.5, 2)
  for (double x : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
    const double oracle = std::erf(std::sqrt(x / 2.0));
    CHECK(std::fabs(gamma_cdf(x, 0.5, 2.0) - oracle) < 1e-10);
  }
  // integer shape: 1 - exp(-t) * sum t^k/k!
  for (double x : {0.5, 2.0, 4.0, 9.0}) {
    const double t = x / 1.5;
    double tail = 0.0, term = 1.0;
    for (int k = 0; k < 3; ++k) {
      tail += term;
      term *= t / (k + 1);
    }
    const double oracle = 1.0 - std::exp(-t) * tail;
    CHECK(std::fabs(gamma_cdf(x, 3.0, 1.5) - oracle) < 1e-10);
  }
}

TEST_CASE("gamma_cdf monotone and matches Monte-Carlo ECDF") {
  double prev = 0.0;
  for (double x = 0.0; x <= 30.0; x += 0.25) {
    const double v = gamma_cdf(x, 3.0, 2.0);
    CHECK(v >= prev);
    prev = v;
  }
  // gamma(3, 2) sampled as a sum of three exponentials with mean 2
  RngStream rng(2024, 0);
  const int n = 1000000;
  std::vector<double> samples(n);
  for (int i = 0; i < n; ++i)
    samples[i] = rng.exponential(2.0) + rng.exponential(2.0) + rng.exponential(2.0);
  std::sort(samples.begin(), samples.end());
  for (int q = 1; q <= 20; ++q) {
    const double p = q / 21.0;
    const double x = samples[static_cast<std::size_t>(p * n)];
    CHECK(std::fabs(gamma_cdf(x, 3.0, 2.0) - p) < 0.01);
  }
}

TEST_CASE("ranks basics and ties") {
  CHECK(ranks({10, 20, 30}) == std::vector<double>{1, 2, 3});
  CHECK(ranks({5, 5, 1}) == std::vector<double>{2.5, 2.5, 1});
}

TEST_CASE("ranks of a permutation equal the permutation") {
  RngStream rng(99, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(50);
    std::vector<double> v(n);
    std::iota(v.begin(), v.end(), 1.0);
    rng.shuffle(v);
    const auto r = ranks(v);
    for (std::size_t i = 0; i < n; ++i) CHECK(r[i] == v[i]);
  }
}

TEST_CASE("standardize_columns produces zero mean unit variance") {
  RngStream rng(5, 0);
  Matrix x = draw_normal(200, 3, rng);
  Matrix s = standardize_columns(x);
  Matrix m = col_mean(s);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(m.data()[j]) < 1e-9);
  for (std::size_t j = 0; j < 3; ++j) {
    double var = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i) var += s(i, j) * s(i, j);
    CHECK(var / s.rows() == doctest::Approx(1.0).epsilon(1e-9));
  }
  Matrix constant(10, 1, 3.0);
  CHECK_THROWS_AS(standardize_columns(constant), NumericError);
}
