#include "fairbide/bvgae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fairbide/fastmath.hpp"

namespace fairbide::bvgae {

void PlantAssignment::validate() const {
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double row_sum = 0.0;
    for (std::size_t k = 0; k < p.cols(); ++k) {
      const double v = p(i, k);
      if (v != 0.0 && v != 1.0)
        throw DataError("plant assignment: non-binary entry at session " + std::to_string(i));
      row_sum += v;
    }
    if (row_sum != 1.0)
      throw DataError("plant assignment: session " + std::to_string(i) +
                      " must have exactly one plant");
  }
}

std::vector<std::size_t> PlantAssignment::plant_of_session() const {
  std::vector<std::size_t> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    std::size_t k = p.cols();
    for (std::size_t c = 0; c < p.cols(); ++c)
      if (p(i, c) != 0.0) {
        k = c;
        break;
      }
    if (k == p.cols())
      throw DataError("plant assignment: session " + std::to_string(i) + " has no plant");
    out[i] = k;
  }
  return out;
}

Matrix PlantAssignment::p_tilde() const {
  Matrix out = p;
  for (std::size_t k = 0; k < p.cols(); ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) total += p(i, k);
    if (total == 0.0) continue;
    for (std::size_t i = 0; i < p.rows(); ++i) out(i, k) /= total;
  }
  return out;
}

namespace {

void degree_sums(const Matrix& b, std::vector<double>& row_deg, std::vector<double>& col_deg) {
  row_deg.assign(b.rows(), 0.0);
  col_deg.assign(b.cols(), 0.0);
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      row_deg[i] += b(i, j);
      col_deg[j] += b(i, j);
    }
}

Matrix normalize_with(const Matrix& b, const std::vector<double>& row_deg,
                      const std::vector<double>& col_deg) {
  Matrix out(b.rows(), b.cols());
  std::vector<double> inv_col(b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j)
    inv_col[j] = 1.0 / std::sqrt(std::max(col_deg[j], 1.0));
  for (std::size_t i = 0; i < b.rows(); ++i) {
    const double ir = 1.0 / std::sqrt(std::max(row_deg[i], 1.0));
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = b(i, j) * ir * inv_col[j];
  }
  return out;
}

}  // namespace

Matrix normalize_biadjacency(const Matrix& b) {
  std::vector<double> row_deg, col_deg;
  degree_sums(b, row_deg, col_deg);
  for (std::size_t i = 0; i < row_deg.size(); ++i)
    if (row_deg[i] == 0.0)
      throw DataError("normalize_biadjacency: zero-degree row " + std::to_string(i));
  for (std::size_t j = 0; j < col_deg.size(); ++j)
    if (col_deg[j] == 0.0)
      throw DataError("normalize_biadjacency: zero-degree column " + std::to_string(j));
  return normalize_with(b, row_deg, col_deg);
}

Matrix normalize_biadjacency_clamped(const Matrix& b) {
  std::vector<double> row_deg, col_deg;
  degree_sums(b, row_deg, col_deg);
  return normalize_with(b, row_deg, col_deg);
}

// ---------------------------------------------------------------------------

namespace {

bool worth_sparse(const Matrix& m) {
  double nnz = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.data()[i] != 0.0) nnz += 1.0;
  return nnz / static_cast<double>(m.size()) < 0.35;
}

Matrix signature_signs(const LatentSignature& s) {
  Matrix row(1, s.total());
  for (std::size_t c = 0; c < s.total(); ++c)
    row.data()[c] = c < s.d_plus ? 1.0 : -1.0;
  return row;
}

}  // namespace

MessagePassing::MessagePassing(const Matrix& b_train, const std::optional<Matrix>& x1,
                               const std::optional<Matrix>& x2) {
  bn = SparseMatrix(normalize_biadjacency_clamped(b_train));
  bn_t = bn.transposed();
  if (x1) {
    x1_present = true;
    x1_is_sparse = worth_sparse(*x1);
    if (x1_is_sparse) {
      x1_sp = SparseMatrix(*x1);
      x1_sp_t = x1_sp.transposed();
    } else {
      x1_dense = *x1;
    }
  }
  if (x2) {
    x2_present = true;
    x2_is_sparse = worth_sparse(*x2);
    if (x2_is_sparse) {
      x2_sp = SparseMatrix(*x2);
      x2_sp_t = x2_sp.transposed();
    } else {
      x2_dense = *x2;
    }
  }
}

ad::Var MessagePassing::features_times(ad::Tape& t, bool side1, ad::Var w1) const {
  if (side1) {
    if (!x1_present) return w1;
    if (x1_is_sparse) return t.spmm(&x1_sp, &x1_sp_t, w1);
    return t.matmul(t.constant(x1_dense), w1);
  }
  if (!x2_present) return w1;
  if (x2_is_sparse) return t.spmm(&x2_sp, &x2_sp_t, w1);
  return t.matmul(t.constant(x2_dense), w1);
}

ParamVars register_params(ad::Tape& t, const EncoderParams& p, bool trainable) {
  auto put = [&](const Matrix& m) { return trainable ? t.parameter(m) : t.constant(m); };
  return {put(p.side1.w1), put(p.side1.w2_mu), put(p.side1.w2_sigma),
          put(p.side2.w1), put(p.side2.w2_mu), put(p.side2.w2_sigma)};
}

EncoderNodes build_encoder(ad::Tape& t, const MessagePassing& g, const ParamVars& pv,
                           const Matrix* eps1, const Matrix* eps2) {
  ad::Var a1 = g.features_times(t, /*side1=*/true, pv.w1_1);
  ad::Var h1 = t.relu(t.spmm(&g.bn_t, &g.bn, a1));  // n2 x hidden
  ad::Var mu1 = t.spmm(&g.bn, &g.bn_t, t.matmul(h1, pv.w2_mu1));
  ad::Var ls1 = t.spmm(&g.bn, &g.bn_t, t.matmul(h1, pv.w2_sigma1));

  ad::Var a2 = g.features_times(t, /*side1=*/false, pv.w1_2);
  ad::Var h2 = t.relu(t.spmm(&g.bn, &g.bn_t, a2));  // n1 x hidden
  ad::Var mu2 = t.spmm(&g.bn_t, &g.bn, t.matmul(h2, pv.w2_mu2));
  ad::Var ls2 = t.spmm(&g.bn_t, &g.bn, t.matmul(h2, pv.w2_sigma2));

  EncoderNodes out{mu1, ls1, mu1, mu2, ls2, mu2};
  if (eps1) out.z1 = t.add(mu1, t.mul(t.exp(ls1), t.constant(*eps1)));
  if (eps2) out.z2 = t.add(mu2, t.mul(t.exp(ls2), t.constant(*eps2)));
  return out;
}

ad::Var build_decoder_logits(ad::Tape& t, ad::Var z1, ad::Var z2,
                             const LatentSignature& sig) {
  if (z1.value().cols() != sig.total() || z2.value().cols() != sig.total())
    throw DimensionError("decode: signature does not match latent dimension");
  ad::Var z2_signed = t.broadcast_mul_row(z2, t.constant(signature_signs(sig)));
  return t.matmul(z1, t.transpose(z2_signed));
}

LatentState encode(const BipartiteGraph& graph, EncoderParams& params,
                   const LatentSignature& signature, RngStream* rng) {
  MessagePassing g(graph.b, graph.x1, graph.x2);
  ad::Tape t;
  ParamVars pv = register_params(t, params, /*trainable=*/false);
  Matrix eps1, eps2;
  const Matrix* e1 = nullptr;
  const Matrix* e2 = nullptr;
  const std::size_t d = signature.total();
  if (rng) {
    eps1 = draw_normal(graph.n1(), d, *rng);
    eps2 = draw_normal(graph.n2(), d, *rng);
    e1 = &eps1;
    e2 = &eps2;
  }
  EncoderNodes nodes = build_encoder(t, g, pv, e1, e2);
  LatentState s;
  s.mu1 = nodes.mu1.value();
  s.log_sigma1 = nodes.log_sigma1.value();
  s.z1 = nodes.z1.value();
  s.mu2 = nodes.mu2.value();
  s.log_sigma2 = nodes.log_sigma2.value();
  s.z2 = nodes.z2.value();
  s.signature = signature;
  return s;
}

Matrix decode_logits(const Matrix& z1, const Matrix& z2, const LatentSignature& sig) {
  if (z1.cols() != sig.total() || z2.cols() != sig.total())
    throw DimensionError("decode: signature does not match latent dimension");
  Matrix z2_signed = z2;
  for (std::size_t i = 0; i < z2.rows(); ++i)
    for (std::size_t c = sig.d_plus; c < sig.total(); ++c) z2_signed(i, c) = -z2_signed(i, c);
  return matmul_nt(z1, z2_signed);
}

Matrix decode(const Matrix& z1, const Matrix& z2, const LatentSignature& sig) {
  Matrix logits = decode_logits(z1, z2, sig);
  fastmath::sigmoid_inplace(logits.data(), logits.size());
  return logits;
}

Matrix aggregate_plants(const Matrix& b, const Matrix& plant_onehot) {
  if (plant_onehot.rows() != b.rows())
    throw DimensionError("aggregate_plants: row mismatch");
  Matrix pt_b = matmul_tn(plant_onehot, b);  // u x n2
  for (std::size_t i = 0; i < pt_b.size(); ++i)
    pt_b.data()[i] = pt_b.data()[i] > 0.0 ? 1.0 : 0.0;
  return pt_b;
}

PlantLatents sample_plant_latents(const Matrix& z1, const Matrix& plant_onehot,
                                  RngStream& rng) {
  const std::size_t u = plant_onehot.cols();
  std::vector<std::vector<std::size_t>> sessions(u);
  for (std::size_t i = 0; i < plant_onehot.rows(); ++i)
    for (std::size_t k = 0; k < u; ++k)
      if (plant_onehot(i, k) != 0.0) sessions[k].push_back(i);
  PlantLatents out;
  out.z = Matrix(u, z1.cols(), 0.0);
  out.present.assign(u, false);
  out.chosen_session.assign(u, 0);
  for (std::size_t k = 0; k < u; ++k) {
    if (sessions[k].empty()) continue;
    const std::size_t pick = sessions[k][rng.uniform_index(sessions[k].size())];
    out.present[k] = true;
    out.chosen_session[k] = pick;
    std::copy(z1.row(pick), z1.row(pick) + z1.cols(), out.z.row(k));
  }
  return out;
}

Matrix predict_plant_matrix(const Matrix& b_hat, const Matrix& plant_onehot) {
  if (plant_onehot.rows() != b_hat.rows())
    throw DimensionError("predict_plant_matrix: row mismatch");
  PlantAssignment pa{plant_onehot};
  return matmul_tn(pa.p_tilde(), b_hat);
}

ReconWeights recon_weights(const Matrix& b_train, const eval::EdgeSplit& split) {
  const std::size_t n1 = b_train.rows(), n2 = b_train.cols();
  Matrix mask(n1, n2, 1.0);
  for (const auto& [i, j] : split.held_out_pairs()) mask(i, j) = 0.0;
  double n_edges = 0.0, n_unmasked = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    n_unmasked += 1.0;
    if (b_train.data()[i] != 0.0) n_edges += 1.0;
  }
  if (n_edges == 0.0) throw DataError("recon_weights: no training edges");
  const double pos_weight = (n_unmasked - n_edges) / n_edges;
  ReconWeights w;
  w.w_sum = Matrix(n1, n2, 0.0);
  w.w_pos = Matrix(n1, n2, 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    const bool edge = b_train.data()[i] != 0.0;
    w.w_pos.data()[i] = edge ? pos_weight / n_unmasked : 0.0;
    w.w_sum.data()[i] = (edge ? pos_weight : 1.0) / n_unmasked;
  }
  return w;
}

ad::Var bce_from_logits(ad::Tape& tape, ad::Var logits, const ReconWeights& w) {
  ad::Var soft = tape.softplus(logits);
  return tape.sub(tape.weighted_sum(soft, &w.w_sum), tape.weighted_sum(logits, &w.w_pos));
}

Matrix kl_per_node(const Matrix& mu, const Matrix& log_sigma) {
  if (!mu.same_shape(log_sigma)) throw DimensionError("kl_per_node: shape mismatch");
  Matrix out(mu.rows(), 1, 0.0);
  for (std::size_t i = 0; i < mu.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < mu.cols(); ++c) {
      const double ls = log_sigma(i, c);
      acc += std::exp(2.0 * ls) + mu(i, c) * mu(i, c) - 1.0 - 2.0 * ls;
    }
    out(i, 0) = 0.5 * acc;
  }
  return out;
}

ad::Var kl_to_prior(ad::Tape& tape, ad::Var mu, ad::Var log_sigma) {
  // 0.5 * sum(sigma^2 + mu^2 - 1 - 2 log sigma), scaled by 1/n^2 following
  // the graph auto-encoder lineage; the stronger 1/n scaling collapses the
  // posterior to the prior before the decoder learns anything.
  ad::Var two_ls = tape.scale(log_sigma, 2.0);
  ad::Var inner = tape.sub(tape.add(tape.exp(two_ls), tape.square(mu)),
                           tape.add_scalar(two_ls, 1.0));
  const double n = static_cast<double>(mu.value().rows());
  return tape.scale(tape.sum(inner), 0.5 / (n * n));
}

LossParts elbo_loss(ad::Tape& tape, const EncoderNodes& enc, ad::Var logits,
                    const ReconWeights& recon) {
  LossParts parts;
  ad::Var r = bce_from_logits(tape, logits, recon);
  ad::Var kl = tape.add(kl_to_prior(tape, enc.mu1, enc.log_sigma1),
                        kl_to_prior(tape, enc.mu2, enc.log_sigma2));
  parts.reconstruction = r.value()(0, 0);
  parts.kl = kl.value()(0, 0);
  parts.total = tape.add(r, kl);
  return parts;
}

LossParts fair_loss(ad::Tape& tape, const EncoderNodes& enc, ad::Var logits,
                    const ReconWeights& recon, double delta,
                    const hsic::RffMap& map_mu, const Matrix& psi_s) {
  LossParts parts = elbo_loss(tape, enc, logits, recon);
  if (delta > 0.0) {
    ad::Var mu_std = tape.standardize_cols(enc.mu1, 1e-12);
    ad::Var psi_mu = hsic::rff_features_node(tape, mu_std, map_mu);
    ad::Var pen =
        tape.scale(hsic::rff_hsic_node(tape, psi_mu, tape.constant(psi_s)), delta);
    parts.independence = pen.value()(0, 0);
    parts.total = tape.add(parts.total, pen);
  }
  return parts;
}

LossParts spipoll_loss(ad::Tape& tape, const EncoderNodes& enc, ad::Var logits,
                       const ReconWeights& recon, double delta,
                       const hsic::RffMap* map_mu, const Matrix* psi_s,
                       const std::vector<std::size_t>& chosen_sessions,
                       const ReconWeights& aggregate_w, const LatentSignature& sig) {
  LossParts parts = delta > 0.0 ? fair_loss(tape, enc, logits, recon, delta, *map_mu, *psi_s)
                                : elbo_loss(tape, enc, logits, recon);
  ad::Var z1_plants = tape.row_select(enc.z1, chosen_sessions);
  ad::Var agg_logits = build_decoder_logits(tape, z1_plants, enc.z2, sig);
  ad::Var agg = bce_from_logits(tape, agg_logits, aggregate_w);
  parts.aggregate = agg.value()(0, 0);
  parts.total = tape.add(parts.total, agg);
  return parts;
}

// ---------------------------------------------------------------------------

namespace {

Matrix glorot(std::size_t rows, std::size_t cols, RngStream& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return draw_uniform(rows, cols, -a, a, rng);
}

double entry_sd(const Matrix& m) {
  const double mu = mean(m);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double c = m.data()[i] - mu;
    acc += c * c;
  }
  return std::sqrt(acc / static_cast<double>(m.size()));
}


double pair_auc(const Matrix& mu1, const Matrix& mu2, const LatentSignature& sig,
                const std::vector<eval::Pair>& edges,
                const std::vector<eval::Pair>& nonedges) {
  std::vector<double> scores, labels;
  scores.reserve(edges.size() + nonedges.size());
  labels.reserve(scores.capacity());
  auto logit = [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < sig.total(); ++c) {
      const double sign = c < sig.d_plus ? 1.0 : -1.0;
      acc += mu1(i, c) * sign * mu2(j, c);
    }
    return acc;
  };
  for (const auto& [i, j] : edges) {
    scores.push_back(logit(i, j));
    labels.push_back(1.0);
  }
  for (const auto& [i, j] : nonedges) {
    scores.push_back(logit(i, j));
    labels.push_back(0.0);
  }
  return eval::auc(scores, labels);
}

// Aggregate-term weights over aggregate-train pairs, zero for plants
// without sessions.
ReconWeights aggregate_weights(const Matrix& b_prime, const eval::AggregateSplit& agg,
                               const std::vector<bool>& plant_present) {
  double n_edges = 0.0, n_total = 0.0;
  for (const auto& [k, j] : agg.train_pairs) {
    if (!plant_present[k]) continue;
    n_total += 1.0;
    if (b_prime(k, j) != 0.0) n_edges += 1.0;
  }
  if (n_total == 0.0 || n_edges == 0.0)
    throw DataError("aggregate_weights: empty aggregate train set");
  const double pos_weight = (n_total - n_edges) / n_edges;
  ReconWeights w;
  w.w_sum = Matrix(b_prime.rows(), b_prime.cols(), 0.0);
  w.w_pos = Matrix(b_prime.rows(), b_prime.cols(), 0.0);
  for (const auto& [k, j] : agg.train_pairs) {
    if (!plant_present[k]) continue;
    const bool edge = b_prime(k, j) != 0.0;
    w.w_pos(k, j) = edge ? pos_weight / n_total : 0.0;
    w.w_sum(k, j) = (edge ? pos_weight : 1.0) / n_total;
  }
  return w;
}

struct RestartOutcome {
  bool diverged = false;
  EncoderParams params;
  LatentState latent;
  TrainHistory history;
  double validation_auc = -1.0;
};

}  // namespace

// Glorot draws, then one noise-free forward pass to calibrate the output
// heads: posterior means start at sd 0.5 and log-sigmas at mean -1. Plain
// Glorot leaves mu ~ 1e-2 against unit reparameterization noise, and the
// optimizer then spends most of the iteration budget waiting for sigma to
// shrink before anything can be learned.
EncoderParams init_params_calibrated(const BipartiteGraph& graph, const MessagePassing& gctx,
                          const FairTrainConfig& cfg, RngStream& rng) {
  EncoderParams p;
  const std::size_t d = cfg.signature.total();
  p.side1.w1 = glorot(graph.d1(), cfg.hidden, rng);
  p.side1.w2_mu = glorot(cfg.hidden, d, rng);
  p.side1.w2_sigma = glorot(cfg.hidden, d, rng);
  p.side2.w1 = glorot(graph.d2(), cfg.hidden, rng);
  p.side2.w2_mu = glorot(cfg.hidden, d, rng);
  p.side2.w2_sigma = glorot(cfg.hidden, d, rng);
  // The propagated hidden state B~ relu(...) is entrywise nonnegative, so an
  // all-negative sigma head yields log-sigma < 0 without a bias term.
  for (auto* w : {&p.side1.w2_sigma, &p.side2.w2_sigma})
    for (std::size_t i = 0; i < w->size(); ++i) w->data()[i] = -std::fabs(w->data()[i]);

  ad::Tape t;
  ParamVars pv = register_params(t, p, /*trainable=*/false);
  EncoderNodes enc = build_encoder(t, gctx, pv, nullptr, nullptr);
  const double mu_target = 0.5, log_sigma_target = -1.0;
  const double s1 = entry_sd(enc.mu1.value());
  const double s2 = entry_sd(enc.mu2.value());
  const double m1 = mean(enc.log_sigma1.value());
  const double m2 = mean(enc.log_sigma2.value());
  if (s1 > 0.0) p.side1.w2_mu = scale(p.side1.w2_mu, mu_target / s1);
  if (s2 > 0.0) p.side2.w2_mu = scale(p.side2.w2_mu, mu_target / s2);
  if (m1 < 0.0) p.side1.w2_sigma = scale(p.side1.w2_sigma, log_sigma_target / m1);
  if (m2 < 0.0) p.side2.w2_sigma = scale(p.side2.w2_sigma, log_sigma_target / m2);
  return p;
}

TrainResult train(const BipartiteGraph& graph, const eval::EdgeSplit& split,
                  const FairTrainConfig& cfg, const Matrix* protected_s,
                  const AggregateSupervision* aggregate) {
  if (cfg.restarts == 0) throw ConfigError("train: restarts must be >= 1");
  if (cfg.delta > 0.0 && protected_s == nullptr)
    throw ConfigError("train: independence penalty requires the protected variable");
  if (cfg.delta > 0.0 && protected_s->rows() != graph.n1())
    throw DimensionError("train: protected variable row mismatch");

  const Matrix b_train = eval::training_biadjacency(graph.b, split);
  MessagePassing gctx(b_train, graph.x1, graph.x2);
  const ReconWeights rw = recon_weights(b_train, split);

  Matrix s_std;
  if (cfg.delta > 0.0) s_std = standardize_columns(*protected_s, 1e-12);

  // Plant-level supervision context.
  std::vector<std::vector<std::size_t>> plant_sessions;
  std::vector<bool> plant_present;
  ReconWeights aw;
  bool with_aggregate = aggregate != nullptr;
  if (with_aggregate) {
    const Matrix& p = aggregate->plants->p;
    plant_sessions.assign(p.cols(), {});
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t k = 0; k < p.cols(); ++k)
        if (p(i, k) != 0.0) plant_sessions[k].push_back(i);
    plant_present.assign(p.cols(), false);
    for (std::size_t k = 0; k < p.cols(); ++k) plant_present[k] = !plant_sessions[k].empty();
    aw = aggregate_weights(aggregate->b_prime_observed, *aggregate->split, plant_present);
  }

  const std::size_t d = cfg.signature.total();
  RestartOutcome best;
  std::size_t best_restart = 0;
  std::size_t diverged = 0;
  bool have_best = false;

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    const std::uint64_t rbase = cfg.stream_base + restart * 8;
    RngStream rng_init(cfg.seed, rbase + 0);
    RngStream rng_noise(cfg.seed, rbase + 1);
    RngStream rng_map(cfg.seed, rbase + 2);
    RngStream rng_qtilde(cfg.seed, rbase + 3);

    EncoderParams params = init_params_calibrated(graph, gctx, cfg, rng_init);
    AdamState adam(AdamConfig{.learning_rate = cfg.learning_rate});

    hsic::RffMap map_mu, map_s;
    Matrix psi_s;
    if (cfg.delta > 0.0) {
      map_mu = hsic::make_rff_map(cfg.rff_features, d, 1.0, rng_map);
      map_s = hsic::make_rff_map(cfg.rff_features, s_std.cols(), 1.0, rng_map);
      psi_s = hsic::rff_features(s_std, map_s);
    }

    RestartOutcome outcome;
    outcome.history.total.reserve(cfg.iterations);
    bool ok = true;

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
      const Matrix eps1 = draw_normal(graph.n1(), d, rng_noise);
      const Matrix eps2 = draw_normal(graph.n2(), d, rng_noise);

      ad::Tape t;
      ParamVars pv = register_params(t, params, /*trainable=*/true);
      EncoderNodes enc = build_encoder(t, gctx, pv, &eps1, &eps2);
      ad::Var logits = build_decoder_logits(t, enc.z1, enc.z2, cfg.signature);

      LossParts parts;
      if (with_aggregate) {
        // one fresh uniform pick per plant per iteration
        std::vector<std::size_t> chosen(plant_sessions.size(), 0);
        for (std::size_t k = 0; k < plant_sessions.size(); ++k)
          if (plant_present[k])
            chosen[k] = plant_sessions[k][rng_qtilde.uniform_index(plant_sessions[k].size())];
        parts = spipoll_loss(t, enc, logits, rw, cfg.delta, &map_mu, &psi_s, chosen, aw,
                             cfg.signature);
      } else if (cfg.delta > 0.0) {
        parts = fair_loss(t, enc, logits, rw, cfg.delta, map_mu, psi_s);
      } else {
        parts = elbo_loss(t, enc, logits, rw);
      }

      const double loss_value = parts.total.value()(0, 0);
      if (!std::isfinite(loss_value)) {
        ok = false;
        break;
      }
      outcome.history.total.push_back(loss_value);
      outcome.history.reconstruction.push_back(parts.reconstruction);
      outcome.history.kl.push_back(parts.kl);
      outcome.history.independence.push_back(parts.independence);
      outcome.history.aggregate.push_back(parts.aggregate);

      t.backward(parts.total);
      std::vector<Matrix*> ps = params.all();
      std::vector<const Matrix*> gs = {&t.grad(pv.w1_1), &t.grad(pv.w2_mu1),
                                       &t.grad(pv.w2_sigma1), &t.grad(pv.w1_2),
                                       &t.grad(pv.w2_mu2), &t.grad(pv.w2_sigma2)};
      adam.step(ps, gs);
    }

    if (!ok) {
      ++diverged;
      std::fprintf(stderr, "[train] restart %zu diverged, discarding\n", restart);
      continue;
    }

    // deterministic latent for selection and reporting
    ad::Tape t;
    ParamVars pv = register_params(t, params, /*trainable=*/false);
    EncoderNodes enc = build_encoder(t, gctx, pv, nullptr, nullptr);
    outcome.latent.mu1 = enc.mu1.value();
    outcome.latent.log_sigma1 = enc.log_sigma1.value();
    outcome.latent.z1 = enc.mu1.value();
    outcome.latent.mu2 = enc.mu2.value();
    outcome.latent.log_sigma2 = enc.log_sigma2.value();
    outcome.latent.z2 = enc.mu2.value();
    outcome.latent.signature = cfg.signature;
    outcome.params = std::move(params);
    outcome.validation_auc = pair_auc(outcome.latent.mu1, outcome.latent.mu2,
                                      cfg.signature, split.val_edges, split.val_nonedges);

    if (!have_best || outcome.validation_auc > best.validation_auc) {
      best = std::move(outcome);
      best_restart = restart;
      have_best = true;
    }
  }

  if (!have_best) throw NumericError("train: all restarts diverged");

  TrainResult result;
  result.params = std::move(best.params);
  result.latent = std::move(best.latent);
  result.history = std::move(best.history);
  result.validation_auc = best.validation_auc;
  result.chosen_restart = best_restart;
  result.diverged_restarts = diverged;
  return result;
}

}  // namespace fairbide::bvgae
