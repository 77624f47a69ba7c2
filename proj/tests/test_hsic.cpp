#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fairbide/hsic.hpp"
#include "fairbide/rng.hpp"

using namespace fairbide;
using namespace fairbide::hsic;

TEST_CASE("gram: unit diagonal, identical rows, closed form") {
  RngStream rng(3, 0);
  Matrix x = draw_normal(10, 2, rng);
  Matrix k = gram(x, 1.0);
  for (std::size_t i = 0; i < 10; ++i) CHECK(k(i, i) == 1.0);

  Matrix same = Matrix::from_rows({{1.0, 2.0}, {1.0, 2.0}});
  Matrix k2 = gram(same, 0.7);
  CHECK(k2(0, 1) == doctest::Approx(1.0));

  Matrix pair = Matrix::from_rows({{0.0, 0.0}, {1.0, 1.0}});
  Matrix k3 = gram(pair, 1.0);
  CHECK(k3(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));

  Matrix bad(2, 2, 0.0);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(gram(bad, 1.0), NumericError);
}

TEST_CASE("hsic_biased: the two algebraic forms agree") {
  RngStream rng(5, 0);
  for (int t = 0; t < 10; ++t) {
    Matrix x = draw_normal(40, 2, rng);
    Matrix y = draw_normal(40, 3, rng);
    Matrix k = gram(x, 1.0);
    Matrix l = gram(y, 1.3);
    const double a = hsic_biased_from_grams(k, l);
    const double b = hsic_biased_centered_form(k, l);
    CHECK(std::fabs(a - b) < 1e-10);
  }
}

TEST_CASE("hsic_biased: constant y gives zero") {
  RngStream rng(7, 0);
  Matrix x = draw_normal(50, 2, rng);
  Matrix y(50, 1, 2.5);
  CHECK(std::fabs(hsic_biased(x, y)) < 1e-12);
}

TEST_CASE("hsic_biased: symmetry and joint-permutation invariance") {
  RngStream rng(9, 0);
  Matrix x = draw_normal(30, 2, rng);
  Matrix y = draw_normal(30, 1, rng);
  KernelConfig cfg{1.0, 2.0};
  KernelConfig swapped{2.0, 1.0};
  CHECK(std::fabs(hsic_biased(x, y, cfg) - hsic_biased(y, x, swapped)) < 1e-12);

  std::vector<std::size_t> perm(30);
  for (std::size_t i = 0; i < 30; ++i) perm[i] = i;
  std::vector<double> keys(30);
  for (auto& v : keys) v = rng.uniform01();
  std::sort(perm.begin(), perm.end(), [&](auto a, auto b) { return keys[a] < keys[b]; });
  Matrix xp(30, 2), yp(30, 1);
  for (std::size_t i = 0; i < 30; ++i) {
    xp(i, 0) = x(perm[i], 0);
    xp(i, 1) = x(perm[i], 1);
    yp(i, 0) = y(perm[i], 0);
  }
  CHECK(std::fabs(hsic_biased(x, y, cfg) - hsic_biased(xp, yp, cfg)) < 1e-12);
}

TEST_CASE("hsic_biased: contract errors") {
  Matrix x(3, 1, 0.5);
  Matrix y(3, 1, 0.2);
  CHECK_THROWS(hsic_biased(x, y));
  Matrix a(10, 1, 0.0);
  Matrix b(12, 1, 0.0);
  CHECK_THROWS_AS(hsic_biased(a, b), DimensionError);
}

TEST_CASE("gamma test: dependence detected, degenerate input rejected") {
  RngStream rng(11, 0);
  Matrix x = draw_normal(500, 1, rng);
  HsicTestResult self = hsic_gamma_test(x, x);
  CHECK(self.p_value < 1e-4);

  Matrix constant(100, 1, 1.0);
  Matrix z = draw_normal(100, 1, rng);
  CHECK_THROWS_AS(hsic_gamma_test(z, constant), NumericError);
}

TEST_CASE("gamma test: calibration under independence") {
  // level-0.05 rejection rate over 500 independent trials at n=500
  int rejections = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    RngStream rng(1000, static_cast<std::uint64_t>(t));
    Matrix x = draw_normal(500, 1, rng);
    Matrix y = draw_normal(500, 1, rng);
    HsicTestResult r = hsic_gamma_test(x, y);
    if (r.p_value < 0.05) rejections++;
  }
  const double rate = static_cast<double>(rejections) / trials;
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.09);
}

TEST_CASE("rff map: bounds and determinism") {
  RngStream rng(13, 0);
  RffMap map = make_rff_map(64, 3, 1.0, rng);
  Matrix x = draw_normal(20, 3, rng);
  Matrix p1 = rff_features(x, map);
  Matrix p2 = rff_features(x, map);
  const double bound = std::sqrt(2.0 / 64.0) + 1e-15;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(std::fabs(p1.data()[i]) <= bound);
    CHECK(p1.data()[i] == p2.data()[i]);
  }
}

TEST_CASE("rff features approximate the gaussian kernel") {
  RngStream rng(17, 0);
  RffMap map = make_rff_map(2000, 2, 1.0, rng);
  Matrix x = draw_normal(100, 2, rng);
  Matrix psi = rff_features(x, map);
  Matrix k = gram(x, 1.0);
  double max_err = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    const std::size_t i = rng.uniform_index(100);
    const std::size_t j = rng.uniform_index(100);
    double ip = 0.0;
    for (std::size_t c = 0; c < psi.cols(); ++c) ip += psi(i, c) * psi(j, c);
    max_err = std::max(max_err, std::fabs(ip - k(i, j)));
  }
  CHECK(max_err < 0.1);
}

TEST_CASE("rff_hsic: constant input collapses to ~0") {
  RngStream rng(19, 0);
  Matrix x = draw_normal(50, 2, rng);
  Matrix y(50, 1, 3.0);
  RffMap mx = make_rff_map(100, 2, 1.0, rng);
  RffMap my = make_rff_map(100, 1, 1.0, rng);
  CHECK(rff_hsic(x, y, mx, my) <= 1e-12);
}

TEST_CASE("rff_hsic approximates hsic_biased") {
  RngStream rng(23, 0);
  // independent case: agreement within 50% relative
  Matrix x = draw_normal(1000, 1, rng);
  Matrix y = draw_normal(1000, 1, rng);
  RffMap mx = make_rff_map(100, 1, 1.0, rng);
  RffMap my = make_rff_map(100, 1, 1.0, rng);
  const double exact = hsic_biased(x, y);
  const double approx = rff_hsic(x, y, mx, my);
  CHECK(std::fabs(approx - exact) / std::max(exact, 1e-6) < 0.5);

  // dependent case y = 3x: within 20%
  Matrix y3 = scale(x, 3.0);
  const double exact3 = hsic_biased(x, y3);
  const double approx3 = rff_hsic(x, y3, mx, my);
  CHECK(std::fabs(approx3 - exact3) / exact3 < 0.2);
}

TEST_CASE("rff_hsic error decreases with feature count") {
  RngStream rng(29, 0);
  Matrix x = draw_normal(300, 1, rng);
  Matrix y = scale(x, 3.0);
  const double exact = hsic_biased(x, y);
  double mean_err[3] = {0, 0, 0};
  const std::size_t hs[3] = {10, 100, 1000};
  for (int rep = 0; rep < 30; ++rep) {
    for (int hi = 0; hi < 3; ++hi) {
      RffMap mx = make_rff_map(hs[hi], 1, 1.0, rng);
      RffMap my = make_rff_map(hs[hi], 1, 1.0, rng);
      const double err = rff_hsic(x, y, mx, my) - exact;
      mean_err[hi] += err * err / 30.0;
    }
  }
  CHECK(mean_err[0] > mean_err[1]);
  CHECK(mean_err[1] > mean_err[2]);
}

TEST_CASE("rff_hsic tape gradient matches finite differences") {
  RngStream rng(31, 0);
  const std::size_t n = 12, d = 2;
  Matrix x = draw_normal(n, d, rng);
  Matrix y = draw_normal(n, 1, rng);
  RffMap mx = make_rff_map(16, d, 1.0, rng);
  RffMap my = make_rff_map(16, 1, 1.0, rng);
  Matrix psi_y = rff_features(y, my);

  auto eval = [&](const Matrix& xv) {
    ad::Tape t;
    ad::Var xn = t.parameter(xv);
    ad::Var px = rff_features_node(t, xn, mx);
    ad::Var loss = rff_hsic_node(t, px, t.constant(psi_y));
    return loss;
  };

  ad::Tape t;
  ad::Var xn = t.parameter(x);
  ad::Var px = rff_features_node(t, xn, mx);
  ad::Var loss = rff_hsic_node(t, px, t.constant(psi_y));
  t.backward(loss);
  CHECK(loss.value()(0, 0) == doctest::Approx(rff_hsic_from_features(rff_features(x, mx), psi_y)));

  const double h = 1e-6;
  for (std::size_t idx = 0; idx < x.size(); ++idx) {
    Matrix xp = x, xm = x;
    xp.data()[idx] += h;
    xm.data()[idx] -= h;
    ad::Tape tp;
    ad::Var vp = tp.parameter(xp);
    const double fp = rff_hsic_node(tp, rff_features_node(tp, vp, mx), tp.constant(psi_y)).value()(0, 0);
    ad::Tape tm;
    ad::Var vm = tm.parameter(xm);
    const double fm = rff_hsic_node(tm, rff_features_node(tm, vm, mx), tm.constant(psi_y)).value()(0, 0);
    const double fd = (fp - fm) / (2.0 * h);
    const double an = t.grad(xn).data()[idx];
    CHECK(std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8}) < 1e-4);
  }
}

TEST_CASE("exact hsic gradient matches finite differences") {
  RngStream rng(37, 0);
  const std::size_t n = 16, d = 3;
  Matrix x = draw_normal(n, d, rng);
  Matrix s = draw_normal(n, d, rng);
  Matrix l = gram(s, 1.0);
  ExactHsicGrad out = hsic_biased_with_grad(x, l, 1.0);
  CHECK(out.value == doctest::Approx(hsic_biased_from_grams(gram(x, 1.0), l)));
  const double h = 1e-6;
  for (std::size_t idx = 0; idx < x.size(); ++idx) {
    Matrix xp = x, xm = x;
    xp.data()[idx] += h;
    xm.data()[idx] -= h;
    const double fp = hsic_biased_from_grams(gram(xp, 1.0), l);
    const double fm = hsic_biased_from_grams(gram(xm, 1.0), l);
    const double fd = (fp - fm) / (2.0 * h);
    const double an = out.grad_x.data()[idx];
    CHECK(std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-9}) < 1e-4);
  }
}

TEST_CASE("median bandwidth heuristic is positive and scales") {
  RngStream rng(41, 0);
  Matrix x = draw_normal(100, 2, rng);
  const double m1 = median_bandwidth(x);
  const double m2 = median_bandwidth(scale(x, 2.0));
  CHECK(m1 > 0.0);
  CHECK(m2 == doctest::Approx(2.0 * m1).epsilon(1e-9));
}
