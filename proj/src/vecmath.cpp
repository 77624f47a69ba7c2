// Built with -ffast-math (see CMakeLists) so these loops vectorize through
// the glibc vector math routines.
#include "fairbide/fastmath.hpp"

#include <cmath>

namespace fairbide::fastmath {

void exp_inplace(double* __restrict__ p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) p[i] = std::exp(p[i]);
}

void sigmoid_inplace(double* __restrict__ p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(-std::fabs(p[i]));
    p[i] = p[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
}

void softplus_inplace(double* __restrict__ p, std::size_t n) {
  // log(1 + e) rather than log1p: the vector math library covers log, and
  // for x > 36 the sum rounds to 1 so the result degrades gracefully to x
  for (std::size_t i = 0; i < n; ++i) {
    const double x = p[i];
    p[i] = std::log(1.0 + std::exp(-std::fabs(x))) + (x > 0.0 ? x : 0.0);
  }
}

void softplus_to(double* __restrict__ out, const double* __restrict__ p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double x = p[i];
    out[i] = std::log(1.0 + std::exp(-std::fabs(x))) + (x > 0.0 ? x : 0.0);
  }
}

void sigmoid_to(double* __restrict__ out, const double* __restrict__ p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(-std::fabs(p[i]));
    out[i] = p[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
}

void exp_to(double* __restrict__ out, const double* __restrict__ p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(p[i]);
}

void cos_inplace(double* __restrict__ p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) p[i] = std::cos(p[i]);
}

void add_sigmoid_product(double* __restrict__ dst, const double* __restrict__ g,
                         const double* __restrict__ x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(-std::fabs(x[i]));
    const double s = x[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    dst[i] += g[i] * s;
  }
}

void sub_sin_product(double* __restrict__ dst, const double* __restrict__ g,
                     const double* __restrict__ x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] -= g[i] * std::sin(x[i]);
}

void cos_features(double* __restrict__ out, const double* __restrict__ proj,
                  const double* __restrict__ phase, std::size_t rows, std::size_t cols,
                  double amp) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* p = proj + i * cols;
    double* o = out + i * cols;
    for (std::size_t j = 0; j < cols; ++j) o[j] = amp * std::cos(p[j] + phase[j]);
  }
}

void cos_features_backward(double* __restrict__ dst, const double* __restrict__ g,
                           const double* __restrict__ proj,
                           const double* __restrict__ phase, std::size_t rows,
                           std::size_t cols, double amp) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* p = proj + i * cols;
    const double* gr = g + i * cols;
    double* d = dst + i * cols;
    for (std::size_t j = 0; j < cols; ++j) d[j] -= amp * std::sin(p[j] + phase[j]) * gr[j];
  }
}

}  // namespace fairbide::fastmath
