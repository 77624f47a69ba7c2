#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairbide/adam.hpp"
#include "fairbide/evalmetrics.hpp"
#include "fairbide/hsic.hpp"
#include "fairbide/matrix.hpp"
#include "fairbide/rng.hpp"
#include "fairbide/tape.hpp"

namespace fairbide::bvgae {

// Bipartite interaction graph. Missing features mean identity features
// (equivalently, a free embedding row per node in the first GCN layer).
struct BipartiteGraph {
  Matrix b;                  // n1 x n2, entries in {0,1}
  std::optional<Matrix> x1;  // n1 x d1
  std::optional<Matrix> x2;  // n2 x d2

  std::size_t n1() const { return b.rows(); }
  std::size_t n2() const { return b.cols(); }
  std::size_t d1() const { return x1 ? x1->cols() : b.rows(); }
  std::size_t d2() const { return x2 ? x2->cols() : b.cols(); }
};

// Number of plus/minus coordinates in the inner-product decoder.
struct LatentSignature {
  std::size_t d_plus = 2;
  std::size_t d_minus = 2;
  std::size_t total() const { return d_plus + d_minus; }
};

// Per-side GCN weights. The mu and sigma networks share the first layer:
// one storage slot, so a change is visible through both paths.
struct GcnSideParams {
  Matrix w1;        // d x hidden, shared
  Matrix w2_mu;     // hidden x D
  Matrix w2_sigma;  // hidden x D
};

struct EncoderParams {
  GcnSideParams side1;
  GcnSideParams side2;

  std::vector<Matrix*> all() {
    return {&side1.w1, &side1.w2_mu, &side1.w2_sigma,
            &side2.w1, &side2.w2_mu, &side2.w2_sigma};
  }
};

struct LatentState {
  Matrix mu1, log_sigma1, z1;
  Matrix mu2, log_sigma2, z2;
  LatentSignature signature;
};

// One-hot session-to-plant assignment.
struct PlantAssignment {
  Matrix p;  // n1 x u, one-hot rows

  std::size_t plants() const { return p.cols(); }
  void validate() const;
  std::vector<std::size_t> plant_of_session() const;
  // Column-normalized P; zero columns (plants without sessions) stay zero.
  Matrix p_tilde() const;
};

struct FairTrainConfig {
  double delta = 0.0;           // independence penalty weight
  std::size_t iterations = 1000;
  double learning_rate = 0.01;
  std::size_t restarts = 10;
  LatentSignature signature{2, 2};
  std::size_t hidden = 32;
  std::size_t rff_features = 100;
  std::uint64_t seed = 0;
  std::uint64_t stream_base = 0;  // offset so trials draw disjoint streams
};

// Normalized biadjacency D1^{-1/2} B D2^{-1/2}; zero-degree rows or columns
// are an error here (the training path tolerates them separately, since a
// held-out split can empty a low-degree row).
Matrix normalize_biadjacency(const Matrix& b);
Matrix normalize_biadjacency_clamped(const Matrix& b);

LatentState encode(const BipartiteGraph& graph, EncoderParams& params,
                   const LatentSignature& signature, RngStream* rng);  // rng null => z = mu

// Edge probabilities sigmoid(z1_i^T I_{+,-} z2_j).
Matrix decode(const Matrix& z1, const Matrix& z2, const LatentSignature& signature);
Matrix decode_logits(const Matrix& z1, const Matrix& z2, const LatentSignature& signature);

// Plant-level aggregation 1{(P^T B) > 0}.
Matrix aggregate_plants(const Matrix& b, const Matrix& plant_onehot);

// One uniformly chosen session latent per plant; plants without sessions are
// reported in `missing` and receive a zero row.
struct PlantLatents {
  Matrix z;  // u x D
  std::vector<bool> present;
  std::vector<std::size_t> chosen_session;  // undefined where !present
};
PlantLatents sample_plant_latents(const Matrix& z1, const Matrix& plant_onehot, RngStream& rng);

// Session-probability average per plant: P_tilde^T B_hat.
Matrix predict_plant_matrix(const Matrix& b_hat, const Matrix& plant_onehot);

// --- differentiable loss builders -----------------------------------------

struct EncoderNodes {
  ad::Var mu1, log_sigma1, z1;
  ad::Var mu2, log_sigma2, z2;
};

// Message-passing operators and feature constants of a (train) graph,
// fixed across iterations of a run.
struct MessagePassing {
  SparseMatrix bn;    // normalized biadjacency
  SparseMatrix bn_t;  // its transpose
  bool x1_present = false;
  bool x2_present = false;
  bool x1_is_sparse = false;
  bool x2_is_sparse = false;
  SparseMatrix x1_sp, x1_sp_t;
  SparseMatrix x2_sp, x2_sp_t;
  Matrix x1_dense, x2_dense;

  MessagePassing(const Matrix& b_train, const std::optional<Matrix>& x1,
                 const std::optional<Matrix>& x2);
  ad::Var features_times(ad::Tape& t, bool side1, ad::Var w1) const;
};

struct ParamVars {
  ad::Var w1_1, w2_mu1, w2_sigma1;
  ad::Var w1_2, w2_mu2, w2_sigma2;
};

ParamVars register_params(ad::Tape& t, const EncoderParams& p, bool trainable);

// Two GCNs per side with a shared first layer; side 1 aggregates over columns
// first, side 2 over rows first. Null noise means z = mu.
EncoderNodes build_encoder(ad::Tape& t, const MessagePassing& g, const ParamVars& pv,
                           const Matrix* eps1, const Matrix* eps2);

ad::Var build_decoder_logits(ad::Tape& t, ad::Var z1, ad::Var z2,
                             const LatentSignature& sig);

// Glorot draws plus one noise-free calibration forward that rescales the
// posterior-mean heads to sd 0.5 and the log-sigma heads to mean -1.
EncoderParams init_params_calibrated(const BipartiteGraph& graph,
                                     const MessagePassing& gctx,
                                     const FairTrainConfig& cfg, RngStream& rng);

// Precomputed per-run constants for the loss builders. Weight matrices
// encode the train mask, the positive-class weight and the normalization.
struct ReconWeights {
  Matrix w_sum;  // (w_pos*y + (1-y)) * mask / n_unmasked
  Matrix w_pos;  // w_pos*y * mask / n_unmasked
};
ReconWeights recon_weights(const Matrix& b_train, const eval::EdgeSplit& split);

// Weighted binary cross-entropy from logits:
// sum(w_sum .* softplus(logits)) - sum(w_pos .* logits).
ad::Var bce_from_logits(ad::Tape& tape, ad::Var logits, const ReconWeights& w);

// Closed-form per-node KL to the standard normal prior:
// 0.5 * sum_dims(sigma^2 + mu^2 - 1 - 2 log sigma). n x 1.
Matrix kl_per_node(const Matrix& mu, const Matrix& log_sigma);

// Total KL term as it enters the loss (lineage 1/n^2 scaling).
ad::Var kl_to_prior(ad::Tape& tape, ad::Var mu, ad::Var log_sigma);

// Loss components with their scalar values broken out for reporting.
struct LossParts {
  ad::Var total;
  double reconstruction = 0.0;
  double kl = 0.0;
  double independence = 0.0;
  double aggregate = 0.0;
};

// Negative evidence lower bound: masked weighted reconstruction plus both
// KL terms. Minimized during training.
LossParts elbo_loss(ad::Tape& tape, const EncoderNodes& enc, ad::Var logits,
                    const ReconWeights& recon);

// elbo_loss + delta * rff_hsic(standardized mu1, psi_s). psi_s holds the
// features of the (standardized) protected variable.
LossParts fair_loss(ad::Tape& tape, const EncoderNodes& enc, ad::Var logits,
                    const ReconWeights& recon, double delta,
                    const hsic::RffMap& map_mu, const Matrix& psi_s);

// fair_loss + plant-level reconstruction of the observed aggregate network
// through one fresh sample of session latents per plant.
LossParts spipoll_loss(ad::Tape& tape, const EncoderNodes& enc, ad::Var logits,
                       const ReconWeights& recon, double delta,
                       const hsic::RffMap* map_mu, const Matrix* psi_s,
                       const std::vector<std::size_t>& chosen_sessions,
                       const ReconWeights& aggregate_w, const LatentSignature& sig);

// --- training --------------------------------------------------------------

struct TrainHistory {
  std::vector<double> total, reconstruction, kl, independence, aggregate;
};

struct TrainResult {
  EncoderParams params;
  LatentState latent;        // deterministic (z = mu) at the selected restart
  TrainHistory history;      // history of the selected restart
  double validation_auc = 0.0;
  std::size_t chosen_restart = 0;
  std::size_t diverged_restarts = 0;
};

// Optional plant-level supervision for the two-level model.
struct AggregateSupervision {
  const PlantAssignment* plants = nullptr;
  const eval::AggregateSplit* split = nullptr;
  Matrix b_prime_observed;  // u x n2
};

// Trains `restarts` independent initializations and returns the one with the
// best validation AUC. `protected_s` is required when delta > 0.
TrainResult train(const BipartiteGraph& graph, const eval::EdgeSplit& split,
                  const FairTrainConfig& cfg, const Matrix* protected_s,
                  const AggregateSupervision* aggregate = nullptr);

}  // namespace fairbide::bvgae
