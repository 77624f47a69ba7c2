#pragma once

#include <vector>

#include "fairbide/matrix.hpp"

namespace fairbide {

// CDF of the Gamma(shape, scale) distribution, i.e. the regularized lower
// incomplete gamma function P(shape, x/scale). Absolute error below 1e-10.
double gamma_cdf(double x, double shape, double scale);

// Fractional (average) ranks, 1-based; ties share the mean of their ranks.
std::vector<double> ranks(const std::vector<double>& v);

}  // namespace fairbide
