#include "fairbide/hsic.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fairbide/special.hpp"

namespace fairbide::hsic {

Matrix gram(const Matrix& x, double sigma) {
  if (!(sigma > 0.0)) throw NumericError("gram: bandwidth must be positive");
  if (!x.all_finite()) throw NumericError("gram: non-finite input");
  const std::size_t n = x.rows(), d = x.cols();
  const double inv = -1.0 / (2.0 * sigma * sigma);
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    const double* xi = x.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* xj = x.row(j);
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = xi[c] - xj[c];
        dist += diff * diff;
      }
      const double v = std::exp(inv * dist);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

double median_bandwidth(const Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x(i, c) - x(j, c);
        s += diff * diff;
      }
      dists.push_back(std::sqrt(s));
    }
  if (dists.empty()) throw NumericError("median_bandwidth: need at least 2 rows");
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double med = dists[dists.size() / 2];
  if (!(med > 0.0)) throw NumericError("median_bandwidth: zero median distance");
  return med;
}

double hsic_biased_from_grams(const Matrix& k, const Matrix& l) {
  const std::size_t n = k.rows();
  if (k.cols() != n || l.rows() != n || l.cols() != n)
    throw DimensionError("hsic: gram matrices must be square of equal size");
  const double nd = static_cast<double>(n);
  double term1 = 0.0, sum_k = 0.0, sum_l = 0.0, term3 = 0.0;
  std::vector<double> k_rowsum(n, 0.0), l_rowsum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* kr = k.row(i);
    const double* lr = l.row(i);
    double ks = 0.0, ls = 0.0, t = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      t += kr[j] * lr[j];
      ks += kr[j];
      ls += lr[j];
    }
    term1 += t;
    k_rowsum[i] = ks;
    l_rowsum[i] = ls;
    sum_k += ks;
    sum_l += ls;
  }
  for (std::size_t i = 0; i < n; ++i) term3 += k_rowsum[i] * l_rowsum[i];
  return term1 / (nd * nd) + sum_k * sum_l / (nd * nd * nd * nd) -
         2.0 * term3 / (nd * nd * nd);
}

namespace {

// Doubly centered copy: H G H with H = I - (1/n) 11^T.
Matrix center_gram(const Matrix& g) {
  const std::size_t n = g.rows();
  const double nd = static_cast<double>(n);
  std::vector<double> row_mean(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += g(i, j);
    row_mean[i] = s / nd;
    total += s;
  }
  const double grand = total / (nd * nd);
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c(i, j) = g(i, j) - row_mean[i] - row_mean[j] + grand;
  return c;
}

}  // namespace

double hsic_biased_centered_form(const Matrix& k, const Matrix& l) {
  const std::size_t n = k.rows();
  const Matrix kc = center_gram(k);
  const Matrix lc = center_gram(l);
  double tr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = kc.row(i);
    const double* b = lc.row(i);
    for (std::size_t j = 0; j < n; ++j) tr += a[j] * b[j];
  }
  const double nd = static_cast<double>(n);
  return tr / (nd * nd);
}

double hsic_biased(const Matrix& x, const Matrix& y, const KernelConfig& cfg) {
  if (x.rows() != y.rows()) throw DimensionError("hsic: sample size mismatch");
  if (x.rows() < 4) throw Error("hsic: need at least 4 samples");
  const Matrix k = gram(x, cfg.sigma_x);
  const Matrix l = gram(y, cfg.sigma_y);
  return hsic_biased_from_grams(k, l);
}

HsicTestResult hsic_gamma_test(const Matrix& x, const Matrix& y,
                               const KernelConfig& cfg) {
  if (x.rows() != y.rows()) throw DimensionError("hsic_gamma_test: sample size mismatch");
  const std::size_t n = x.rows();
  if (n < 6) throw Error("hsic_gamma_test: need at least 6 samples");
  const double nd = static_cast<double>(n);
  const Matrix k = gram(x, cfg.sigma_x);
  const Matrix l = gram(y, cfg.sigma_y);
  const Matrix kc = center_gram(k);
  const Matrix lc = center_gram(l);

  double tr = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) tr += kc(i, j) * lc(i, j);
  const double hsic_value = tr / (nd * nd);
  const double statistic = nd * hsic_value;

  // Null moments: mean from the off-diagonal kernel means, variance from the
  // squared entries of the centered product, with the usual finite-sample
  // correction factor.
  double off_k = 0.0, off_l = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        off_k += k(i, j);
        off_l += l(i, j);
      }
  const double mu_x = off_k / (nd * (nd - 1.0));
  const double mu_y = off_l / (nd * (nd - 1.0));
  const double mean_h0 = (1.0 + mu_x * mu_y - mu_x - mu_y) / nd;

  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        const double p = kc(i, j) * lc(i, j);
        sq += p * p;
      }
  const double var_h0 = 2.0 * (nd - 4.0) * (nd - 5.0) /
                        (nd * (nd - 1.0) * (nd - 2.0) * (nd - 3.0)) * sq /
                        (nd * (nd - 1.0));

  if (!(var_h0 > 0.0) || !(mean_h0 > 0.0))
    throw NumericError("hsic_gamma_test: degenerate input");

  HsicTestResult r;
  r.hsic = hsic_value;
  r.statistic = statistic;
  r.alpha = mean_h0 * mean_h0 / var_h0;
  r.beta = nd * var_h0 / mean_h0;
  r.p_value = 1.0 - gamma_cdf(std::max(statistic, 0.0), r.alpha, r.beta);
  return r;
}

RffMap make_rff_map(std::size_t features, std::size_t input_dim, double sigma,
                    RngStream& rng) {
  if (!(sigma > 0.0)) throw NumericError("make_rff_map: bandwidth must be positive");
  RffMap map;
  map.omega = scale(draw_normal(features, input_dim, rng), 1.0 / sigma);
  map.phase = draw(Distribution::uniform_angle, 1, features, rng);
  return map;
}

Matrix rff_features(const Matrix& x, const RffMap& map) {
  if (x.cols() != map.input_dim())
    throw DimensionError("rff_features: input dimension mismatch");
  const std::size_t h = map.features();
  Matrix proj = matmul_nt(x, map.omega);  // n x h
  const double amp = std::sqrt(2.0 / static_cast<double>(h));
  for (std::size_t i = 0; i < proj.rows(); ++i) {
    double* row = proj.row(i);
    for (std::size_t j = 0; j < h; ++j)
      row[j] = amp * std::cos(row[j] + map.phase.data()[j]);
  }
  return proj;
}

double rff_hsic_from_features(const Matrix& px, const Matrix& py) {
  if (px.rows() != py.rows()) throw DimensionError("rff_hsic: sample size mismatch");
  const double nd = static_cast<double>(px.rows());
  Matrix cross = matmul_tn(px, py);            // h_x x h_y
  const Matrix sx = col_sum(px);               // 1 x h_x
  const Matrix sy = col_sum(py);               // 1 x h_y
  for (std::size_t a = 0; a < cross.rows(); ++a)
    for (std::size_t b = 0; b < cross.cols(); ++b)
      cross(a, b) -= sx.data()[a] * sy.data()[b] / nd;
  return frobenius_sq(cross) / (nd * nd);
}

double rff_hsic(const Matrix& x, const Matrix& y, const RffMap& map_x,
                const RffMap& map_y) {
  return rff_hsic_from_features(rff_features(x, map_x), rff_features(y, map_y));
}

ad::Var rff_features_node(ad::Tape& tape, ad::Var x, const RffMap& map) {
  if (x.value().cols() != map.input_dim())
    throw DimensionError("rff_features_node: input dimension mismatch");
  const double amp = std::sqrt(2.0 / static_cast<double>(map.features()));
  ad::Var omega_t = tape.constant(transpose(map.omega));
  ad::Var proj = tape.matmul(x, omega_t);
  return tape.cos_features(proj, &map.phase, amp);
}

ad::Var rff_hsic_node(ad::Tape& tape, ad::Var psi_x, ad::Var psi_y) {
  const double nd = static_cast<double>(psi_x.value().rows());
  ad::Var cross = tape.matmul_tn(psi_x, psi_y);
  ad::Var mean_outer =
      tape.matmul(tape.transpose(tape.col_mean(psi_x)), tape.col_mean(psi_y));
  ad::Var centered = tape.sub(cross, tape.scale(mean_outer, nd));
  return tape.scale(tape.frobenius_sq(centered), 1.0 / (nd * nd));
}

ExactHsicGrad hsic_biased_with_grad(const Matrix& x, const Matrix& l_gram,
                                    double sigma_x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (l_gram.rows() != n || l_gram.cols() != n)
    throw DimensionError("hsic_biased_with_grad: gram size mismatch");
  const double nd = static_cast<double>(n);
  const Matrix k = gram(x, sigma_x);

  double sum_l = 0.0;
  std::vector<double> l_rowsum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += l_gram(i, j);
    l_rowsum[i] = s;
    sum_l += s;
  }

  double term1 = 0.0, sum_k = 0.0, term3 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double ks = 0.0, t = 0.0;
    const double* kr = k.row(i);
    const double* lr = l_gram.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      t += kr[j] * lr[j];
      ks += kr[j];
    }
    term1 += t;
    sum_k += ks;
    term3 += ks * l_rowsum[i];
  }
  ExactHsicGrad out;
  out.value = term1 / (nd * nd) + sum_k * sum_l / (nd * nd * nd * nd) -
              2.0 * term3 / (nd * nd * nd);

  // d HSIC / d K_ij, then chain through K_ij = exp(-||xi-xj||^2 / 2s^2):
  // dx_i += sum_j (G_ij + G_ji) K_ij (x_j - x_i) / s^2. Computed as a dense
  // product M x with M = (G + G^T) .* K scaled by 1/s^2.
  const double inv_s2 = 1.0 / (sigma_x * sigma_x);
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double gij = l_gram(i, j) / (nd * nd) + sum_l / (nd * nd * nd * nd) -
                         2.0 * l_rowsum[i] / (nd * nd * nd);
      const double gji = l_gram(j, i) / (nd * nd) + sum_l / (nd * nd * nd * nd) -
                         2.0 * l_rowsum[j] / (nd * nd * nd);
      m(i, j) = (gij + gji) * k(i, j) * inv_s2;
    }
  }
  out.grad_x = matmul(m, x);
  for (std::size_t i = 0; i < n; ++i) {
    double row_total = 0.0;
    for (std::size_t j = 0; j < n; ++j) row_total += m(i, j);
    for (std::size_t c = 0; c < d; ++c) out.grad_x(i, c) -= row_total * x(i, c);
  }
  return out;
}

}  // namespace fairbide::hsic
