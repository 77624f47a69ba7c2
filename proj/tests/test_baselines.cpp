#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fairbide/baselines.hpp"
#include "fairbide/hsic.hpp"
#include "fairbide/simgen.hpp"

using namespace fairbide;
using namespace fairbide::baselines;

namespace {

// A.2-style generative model: X = ZK with Z = (S, T) standard normal and
// K entries N(0, 9).
struct PcaData {
  Matrix x, s, t;
  Matrix k;
};

PcaData gen_pca_data(std::size_t n, RngStream& rng, const Matrix* k_fixed = nullptr) {
  PcaData d;
  d.s = draw_normal(n, 1, rng);
  d.t = draw_normal(n, 1, rng);
  d.k = k_fixed ? *k_fixed : scale(draw_normal(2, 5, rng), 3.0);
  Matrix z(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    z(i, 0) = d.s(i, 0);
    z(i, 1) = d.t(i, 0);
  }
  d.x = matmul(z, d.k);
  return d;
}

}  // namespace

TEST_CASE("project_out: identities and residual orthogonality") {
  RngStream rng(11, 0);
  Matrix s = draw_normal(50, 2, rng);

  // X orthogonal to S stays unchanged
  Matrix x_orth = project_out(draw_normal(50, 3, rng), s);
  Matrix again = project_out(x_orth, s);
  for (std::size_t i = 0; i < x_orth.size(); ++i)
    CHECK(again.data()[i] == doctest::Approx(x_orth.data()[i]).epsilon(1e-10));

  // X = S projects to ~0
  Matrix zeroed = project_out(s, s);
  for (std::size_t i = 0; i < zeroed.size(); ++i) CHECK(std::fabs(zeroed.data()[i]) < 1e-10);

  // random case: S^T (P X) vanishes columnwise
  Matrix x = draw_normal(50, 4, rng);
  Matrix r = project_out(x, s);
  Matrix check = matmul_tn(s, r);
  for (std::size_t i = 0; i < check.size(); ++i) CHECK(std::fabs(check.data()[i]) < 1e-8);
}

TEST_CASE("project_out: idempotent") {
  RngStream rng(13, 0);
  Matrix s = draw_normal(40, 1, rng);
  Matrix x = draw_normal(40, 3, rng);
  Matrix once = project_out(x, s);
  Matrix twice = project_out(once, s);
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK(std::fabs(once.data()[i] - twice.data()[i]) < 1e-10);
}

TEST_CASE("project_out: rank-deficient S falls back to ridge, no NaN") {
  RngStream rng(17, 0);
  Matrix s1 = draw_normal(30, 1, rng);
  Matrix s(30, 2);
  for (std::size_t i = 0; i < 30; ++i) {
    s(i, 0) = s1(i, 0);
    s(i, 1) = 2.0 * s1(i, 0);  // linearly dependent column
  }
  Matrix x = draw_normal(30, 3, rng);
  Matrix r = project_out(x, s);
  CHECK(r.all_finite());
  Matrix check = matmul_tn(s1, r);
  for (std::size_t i = 0; i < check.size(); ++i) CHECK(std::fabs(check.data()[i]) < 1e-6);
}

TEST_CASE("linear autoencoder: plain reaches near-zero reconstruction error") {
  RngStream rng(19, 0);
  PcaData d = gen_pca_data(1000, rng);
  LinearAeConfig cfg;
  cfg.seed = 5;
  LinearAeResult model = train_linear_autoencoder(d.x, LinearVariant::plain, d.s, cfg);
  Matrix recon = linear_reconstruct(d.x, d.s, model);
  Matrix xc = d.x;
  Matrix m = col_mean(d.x);
  for (std::size_t i = 0; i < xc.rows(); ++i)
    for (std::size_t j = 0; j < xc.cols(); ++j) xc(i, j) -= m.data()[j];
  const double mse = frobenius_sq(sub(recon, xc)) / static_cast<double>(xc.size());
  CHECK(mse < 1.0);  // rank-2 data, 2-dim bottleneck

  // latent carries the protected variable
  CHECK(eval::correlation_norm(linear_encode(d.x, d.s, model), d.s) > 0.5);
}

TEST_CASE("linear autoencoder: projected latent is orthogonal to S") {
  RngStream rng(23, 0);
  PcaData d = gen_pca_data(800, rng);
  LinearAeConfig cfg;
  cfg.seed = 6;
  LinearAeResult model = train_linear_autoencoder(d.x, LinearVariant::projected, d.s, cfg);
  Matrix latent = linear_encode(d.x, d.s, model);
  Matrix inner = matmul_tn(d.s, latent);
  // exact orthogonality comes from the projection, not from training
  for (std::size_t i = 0; i < inner.size(); ++i)
    CHECK(std::fabs(inner.data()[i]) / 800.0 < 1e-8);
  CHECK(eval::correlation_norm(latent, d.s) < 0.2);

  // removing the protected direction costs reconstruction error
  LinearAeResult plain = train_linear_autoencoder(d.x, LinearVariant::plain, d.s, cfg);
  Matrix xc = d.x;
  Matrix m = col_mean(d.x);
  for (std::size_t i = 0; i < xc.rows(); ++i)
    for (std::size_t j = 0; j < xc.cols(); ++j) xc(i, j) -= m.data()[j];
  const double mse_plain =
      frobenius_sq(sub(linear_reconstruct(d.x, d.s, plain), xc)) / static_cast<double>(xc.size());
  const double mse_proj =
      frobenius_sq(sub(linear_reconstruct(d.x, d.s, model), xc)) / static_cast<double>(xc.size());
  CHECK(mse_proj > mse_plain);
}

TEST_CASE("linear autoencoder: hsic variant passes the independence test") {
  RngStream rng(29, 0);
  PcaData d = gen_pca_data(1000, rng);
  LinearAeConfig cfg;
  cfg.seed = 7;
  LinearAeResult model = train_linear_autoencoder(d.x, LinearVariant::hsic, d.s, cfg);
  RngStream rng2(30, 0);
  PcaData test = gen_pca_data(200, rng2, &d.k);
  Matrix latent = linear_encode(test.x, test.s, model);
  auto ht = hsic::hsic_gamma_test(standardize_columns(latent, 1e-12),
                                  standardize_columns(test.s, 1e-12));
  CHECK(ht.p_value > 0.05);
  CHECK(eval::correlation_norm(latent, test.s) < 0.3);
}

TEST_CASE("subspace equivalence of projected and penalized solutions") {
  RngStream rng(31, 0);
  PcaData d = gen_pca_data(1000, rng);
  LinearAeConfig cfg;
  cfg.seed = 8;
  SubspaceComparison cmp = check_subspace_equivalence(d.x, d.s, cfg);
  CHECK(cmp.cor_plain > 0.5);
  CHECK(cmp.cor_projected < 0.15);
  CHECK(cmp.cor_hsic < 0.3);
  // the shared direction of the two debiased latents nearly coincides; the
  // second direction is numerical noise (rank-1 effective data), so only the
  // smallest principal angle is informative
  CHECK(cmp.smallest_principal_angle_degrees < 20.0);
  CHECK(std::isfinite(cmp.largest_principal_angle_degrees));
}

TEST_CASE("subspace check: X independent of S leaves nothing to remove") {
  RngStream rng(37, 0);
  Matrix s = draw_normal(800, 1, rng);
  Matrix z = draw_normal(800, 2, rng);  // independent of s
  Matrix k = scale(draw_normal(2, 5, rng), 3.0);
  Matrix x = matmul(z, k);
  LinearAeConfig cfg;
  cfg.seed = 9;
  SubspaceComparison cmp = check_subspace_equivalence(x, s, cfg);
  CHECK(cmp.cor_plain < 0.2);
  CHECK(cmp.cor_projected < 0.2);
  CHECK(cmp.cor_hsic < 0.2);
}

TEST_CASE("projected latent exactly orthogonal when S is a column of X") {
  RngStream rng(41, 0);
  Matrix x = draw_normal(300, 4, rng);
  Matrix s(300, 1);
  for (std::size_t i = 0; i < 300; ++i) s(i, 0) = x(i, 0);
  // center s consistently with the internal centering of x
  double m = mean(s);
  for (std::size_t i = 0; i < 300; ++i) s(i, 0) -= m;
  LinearAeConfig cfg;
  cfg.seed = 10;
  LinearAeResult model = train_linear_autoencoder(x, LinearVariant::projected, s, cfg);
  Matrix latent = linear_encode(x, s, model);
  Matrix inner = matmul_tn(s, latent);
  for (std::size_t i = 0; i < inner.size(); ++i)
    CHECK(std::fabs(inner.data()[i]) / 300.0 < 1e-8);
}

TEST_CASE("adversary alone learns an easy protected variable") {
  RngStream rng(43, 0);
  Matrix mu = draw_normal(400, 2, rng);
  Matrix s(400, 1);
  for (std::size_t i = 0; i < 400; ++i) s(i, 0) = mu(i, 0);  // directly predictable

  AdversarialConfig cfg;
  RngStream arng(44, 0);
  // hand-rolled training loop over the exposed forward
  std::vector<Matrix> weights, biases;
  std::vector<std::size_t> dims{2, 16, 16, 16, 1};
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double a = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
    weights.push_back(draw_uniform(dims[l], dims[l + 1], -a, a, arng));
    biases.push_back(Matrix(1, dims[l + 1], 0.0));
  }
  AdamState adam(AdamConfig{.learning_rate = 0.01});
  double final_mse = 1.0;
  for (int iter = 0; iter < 400; ++iter) {
    ad::Tape t;
    std::vector<ad::Var> ws, bs;
    for (auto& w : weights) ws.push_back(t.parameter(w));
    for (auto& b : biases) bs.push_back(t.parameter(b));
    ad::Var pred = adversary_forward(t, t.constant(mu), ws, bs);
    ad::Var mse = t.mean(t.square(t.sub(pred, t.constant(s))));
    final_mse = mse.value()(0, 0);
    t.backward(mse);
    std::vector<Matrix*> ps;
    std::vector<const Matrix*> gs;
    for (std::size_t i = 0; i < ws.size(); ++i) {
      ps.push_back(&weights[i]);
      gs.push_back(&t.grad(ws[i]));
    }
    for (std::size_t i = 0; i < bs.size(); ++i) {
      ps.push_back(&biases[i]);
      gs.push_back(&t.grad(bs[i]));
    }
    adam.step(ps, gs);
  }
  CHECK(final_mse < 0.05);
}

TEST_CASE("adversarial training runs and stays between plain and fair") {
  RngStream rng(47, 0);
  simgen::SimpleSimData data = simgen::gen_simple(200, 40, {1, 1}, rng);
  RngStream srng(48, 0);
  eval::EdgeSplit split = eval::split_edges(data.graph.b, {}, srng);
  bvgae::FairTrainConfig cfg;
  cfg.iterations = 200;
  cfg.restarts = 2;
  cfg.hidden = 16;
  cfg.signature = {2, 2};
  cfg.seed = 21;
  AdversarialConfig adv;
  bvgae::TrainResult r = train_adversarial(data.graph, split, cfg, adv, data.s);
  CHECK(r.latent.mu1.rows() == 200);
  CHECK(r.history.total.size() == 200);
  CHECK(std::isfinite(r.validation_auc));
  // lambda = 0 reduces to the plain path's loss surface
  AdversarialConfig no_adv;
  no_adv.lambda = 0.0;
  bvgae::TrainResult r0 = train_adversarial(data.graph, split, cfg, no_adv, data.s);
  CHECK(std::isfinite(r0.validation_auc));
}
