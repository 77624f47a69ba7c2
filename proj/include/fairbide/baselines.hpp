#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fairbide/bvgae.hpp"
#include "fairbide/matrix.hpp"

namespace fairbide::baselines {

// --- adversarial debiasing ---------------------------------------------------

// Four-layer perceptron predicting the protected variable from mu1; the
// encoder is penalized for making that prediction easy.
struct AdversaryParams {
  std::vector<Matrix> weights;  // 4 layers: D -> h -> h -> h -> d_s
  std::vector<Matrix> biases;

  std::vector<Matrix*> all();
};

struct AdversarialConfig {
  std::array<std::size_t, 3> hidden{16, 16, 16};
  double lambda = 1.0;  // weight of the reversed adversary loss
};

// Alternating optimization: each iteration takes one adversary step
// (minimize MSE against S with mu1 detached) and one encoder step
// (minimize -ELBO - lambda * adversary MSE). Restart selection as in train().
bvgae::TrainResult train_adversarial(const bvgae::BipartiteGraph& graph,
                                     const eval::EdgeSplit& split,
                                     const bvgae::FairTrainConfig& cfg,
                                     const AdversarialConfig& adv_cfg, const Matrix& s,
                                     const bvgae::AggregateSupervision* aggregate = nullptr);

// Adversary forward pass on a tape (weights as constants or parameters).
ad::Var adversary_forward(ad::Tape& tape, ad::Var input,
                          const std::vector<ad::Var>& weights,
                          const std::vector<ad::Var>& biases);

// --- linear embeddings (PCA-style autoencoders) ------------------------------

// X minus its projection on span(S); S^T result = 0. Near-singular S^T S gets
// a 1e-8 ridge with a warning instead of NaN.
Matrix project_out(const Matrix& x, const Matrix& s);

enum class LinearVariant { plain, projected, hsic };

struct LinearAeConfig {
  std::size_t latent_dim = 2;
  std::size_t iterations = 200;
  double learning_rate = 0.01;
  double delta = 1e5;          // hsic variant penalty
  std::size_t restarts = 10;   // hsic variant: keep lowest-penalty fit
  std::size_t rff_features = 100;
  std::uint64_t seed = 0;
  std::uint64_t stream_base = 0;
};

struct LinearAeResult {
  LinearVariant variant = LinearVariant::plain;
  Matrix encoder;  // d x k
  Matrix decoder;  // k x d
  double train_hsic = 0.0;  // final penalty value (hsic variant)
};

// Bias-free linear autoencoder; input is centered columnwise internally.
// plain:     min ||X W_e W_d - X||^2 / (n d)
// projected: same with X replaced by project_out(X, S) on the encoder side
// hsic:      plain + delta * rff_hsic(X W_e, S), best of `restarts` by penalty
LinearAeResult train_linear_autoencoder(const Matrix& x, LinearVariant variant,
                                        const Matrix& s, const LinearAeConfig& cfg);

// The projected variant applies project_out with the given rows' protected
// values before encoding, mirroring its training-time input.
Matrix linear_encode(const Matrix& x, const Matrix& s, const LinearAeResult& model);
Matrix linear_reconstruct(const Matrix& x, const Matrix& s, const LinearAeResult& model);

// Empirical check that the penalized and projected solutions span the same
// subspace on jointly Gaussian data.
struct SubspaceComparison {
  double largest_principal_angle_degrees = 0.0;
  double smallest_principal_angle_degrees = 0.0;
  double cor_plain = 0.0;
  double cor_projected = 0.0;
  double cor_hsic = 0.0;
};

SubspaceComparison check_subspace_equivalence(const Matrix& x, const Matrix& s,
                                              const LinearAeConfig& cfg);

}  // namespace fairbide::baselines
