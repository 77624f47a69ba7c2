#pragma once

#include <cstdint>

#include "fairbide/matrix.hpp"
#include "fairbide/rng.hpp"
#include "fairbide/tape.hpp"

namespace fairbide::hsic {

struct KernelConfig {
  double sigma_x = 1.0;
  double sigma_y = 1.0;
};

// Gaussian Gram matrix K_ij = exp(-||x_i - x_j||^2 / (2 sigma^2)).
Matrix gram(const Matrix& x, double sigma);

// Median of pairwise distances, an optional bandwidth heuristic.
double median_bandwidth(const Matrix& x);

// Biased HSIC estimator from the two Gram matrices (three-sum form).
double hsic_biased_from_grams(const Matrix& k, const Matrix& l);

// Same quantity via (1/n^2) trace(K H L H); used to cross-check the sums.
double hsic_biased_centered_form(const Matrix& k, const Matrix& l);

double hsic_biased(const Matrix& x, const Matrix& y, const KernelConfig& cfg = {});

struct HsicTestResult {
  double statistic = 0.0;  // n * HSIC
  double alpha = 0.0;
  double beta = 0.0;
  double p_value = 1.0;
  double hsic = 0.0;
};

// Independence test: under the null, n*HSIC is approximately Gamma with
// moment-matched shape/scale, estimated from the (un)centered Gram matrices.
HsicTestResult hsic_gamma_test(const Matrix& x, const Matrix& y,
                               const KernelConfig& cfg = {});

// Random Fourier feature map for the unit-bandwidth Gaussian kernel:
// psi(x) = sqrt(2/h) cos(omega x^T + b). Drawn once, reused across a run.
struct RffMap {
  Matrix omega;  // h x d
  Matrix phase;  // 1 x h
  std::size_t features() const { return omega.rows(); }
  std::size_t input_dim() const { return omega.cols(); }
};

RffMap make_rff_map(std::size_t features, std::size_t input_dim, double sigma,
                    RngStream& rng);

Matrix rff_features(const Matrix& x, const RffMap& map);

// (1/n^2) || psi_x^T psi_y - (1/n)(sum psi_x)^T (sum psi_y) ||_F^2
double rff_hsic(const Matrix& x, const Matrix& y, const RffMap& map_x, const RffMap& map_y);
double rff_hsic_from_features(const Matrix& px, const Matrix& py);

// Tape builders for the differentiable path. psi_y is typically precomputed
// from the fixed protected variable.
ad::Var rff_features_node(ad::Tape& tape, ad::Var x, const RffMap& map);
ad::Var rff_hsic_node(ad::Tape& tape, ad::Var psi_x, ad::Var psi_y);

// Value and gradient of the exact biased estimator with respect to x, with
// the y-side Gram fixed. Used by the benchmark as the slow reference path.
struct ExactHsicGrad {
  double value = 0.0;
  Matrix grad_x;
};
ExactHsicGrad hsic_biased_with_grad(const Matrix& x, const Matrix& l_gram,
                                    double sigma_x);

}  // namespace fairbide::hsic
