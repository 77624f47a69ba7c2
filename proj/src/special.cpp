#include "fairbide/special.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairbide {

namespace {

// Regularized lower incomplete gamma via power series, for x < a+1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double total = term;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    term *= x / ap;
    total += term;
    if (std::fabs(term) < std::fabs(total) * 1e-16) break;
  }
  return total * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma via Lentz's continued fraction, x >= a+1.
double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_cdf(double x, double shape, double scale) {
  if (!(shape > 0.0)) throw NumericError("gamma_cdf: shape must be positive");
  if (!(scale > 0.0)) throw NumericError("gamma_cdf: scale must be positive");
  if (!(x >= 0.0)) throw NumericError("gamma_cdf: x must be nonnegative");
  const double t = x / scale;
  if (t == 0.0) return 0.0;
  if (t < shape + 1.0) return gamma_p_series(shape, t);
  return 1.0 - gamma_q_contfrac(shape, t);
}

std::vector<double> ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace fairbide
