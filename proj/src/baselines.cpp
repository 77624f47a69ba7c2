#include "fairbide/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fairbide/hsic.hpp"

namespace fairbide::baselines {

std::vector<Matrix*> AdversaryParams::all() {
  std::vector<Matrix*> out;
  for (auto& w : weights) out.push_back(&w);
  for (auto& b : biases) out.push_back(&b);
  return out;
}

ad::Var adversary_forward(ad::Tape& tape, ad::Var input,
                          const std::vector<ad::Var>& weights,
                          const std::vector<ad::Var>& biases) {
  if (weights.size() != biases.size())
    throw DimensionError("adversary_forward: weight/bias count mismatch");
  ad::Var h = input;
  for (std::size_t layer = 0; layer < weights.size(); ++layer) {
    h = tape.broadcast_add_row(tape.matmul(h, weights[layer]), biases[layer]);
    if (layer + 1 < weights.size()) h = tape.relu(h);
  }
  return h;
}

namespace {

Matrix glorot(std::size_t rows, std::size_t cols, RngStream& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return draw_uniform(rows, cols, -a, a, rng);
}

AdversaryParams init_adversary(std::size_t input_dim, std::size_t output_dim,
                               const AdversarialConfig& cfg, RngStream& rng) {
  AdversaryParams p;
  std::vector<std::size_t> dims{input_dim, cfg.hidden[0], cfg.hidden[1], cfg.hidden[2],
                                output_dim};
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p.weights.push_back(glorot(dims[l], dims[l + 1], rng));
    p.biases.push_back(Matrix(1, dims[l + 1], 0.0));
  }
  return p;
}

std::vector<ad::Var> register_all(ad::Tape& t, std::vector<Matrix>& mats, bool trainable) {
  std::vector<ad::Var> out;
  for (auto& m : mats) out.push_back(trainable ? t.parameter(m) : t.constant(m));
  return out;
}

double pair_auc(const Matrix& mu1, const Matrix& mu2, const bvgae::LatentSignature& sig,
                const std::vector<eval::Pair>& edges,
                const std::vector<eval::Pair>& nonedges) {
  std::vector<double> scores, labels;
  auto logit = [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < sig.total(); ++c)
      acc += mu1(i, c) * (c < sig.d_plus ? 1.0 : -1.0) * mu2(j, c);
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

}  // namespace

bvgae::TrainResult train_adversarial(const bvgae::BipartiteGraph& graph,
                                     const eval::EdgeSplit& split,
                                     const bvgae::FairTrainConfig& cfg,
                                     const AdversarialConfig& adv_cfg, const Matrix& s,
                                     const bvgae::AggregateSupervision* aggregate) {
  if (s.rows() != graph.n1())
    throw DimensionError("train_adversarial: protected variable row mismatch");
  if (cfg.restarts == 0) throw ConfigError("train_adversarial: restarts must be >= 1");

  const Matrix b_train = eval::training_biadjacency(graph.b, split);
  bvgae::MessagePassing gctx(b_train, graph.x1, graph.x2);
  const bvgae::ReconWeights rw = bvgae::recon_weights(b_train, split);
  const Matrix s_std = standardize_columns(s, 1e-12);

  std::vector<std::vector<std::size_t>> plant_sessions;
  std::vector<bool> plant_present;
  bvgae::ReconWeights aw;
  const bool with_aggregate = aggregate != nullptr;
  if (with_aggregate) {
    const Matrix& p = aggregate->plants->p;
    plant_sessions.assign(p.cols(), {});
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t k = 0; k < p.cols(); ++k)
        if (p(i, k) != 0.0) plant_sessions[k].push_back(i);
    plant_present.assign(p.cols(), false);
    for (std::size_t k = 0; k < p.cols(); ++k) plant_present[k] = !plant_sessions[k].empty();
  }

  const std::size_t d = cfg.signature.total();
  bvgae::TrainResult best;
  bool have_best = false;
  std::size_t best_restart = 0;
  std::size_t diverged = 0;

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    const std::uint64_t rbase = cfg.stream_base + restart * 8;
    RngStream rng_init(cfg.seed, rbase + 0);
    RngStream rng_noise(cfg.seed, rbase + 1);
    RngStream rng_qtilde(cfg.seed, rbase + 3);
    RngStream rng_adv(cfg.seed, rbase + 4);

    bvgae::EncoderParams params = bvgae::init_params_calibrated(graph, gctx, cfg, rng_init);
    AdversaryParams adversary = init_adversary(d, s.cols(), adv_cfg, rng_adv);
    AdamState adam_encoder(AdamConfig{.learning_rate = cfg.learning_rate});
    AdamState adam_adversary(AdamConfig{.learning_rate = cfg.learning_rate});

    bvgae::TrainHistory history;
    bool ok = true;

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
      const Matrix eps1 = draw_normal(graph.n1(), d, rng_noise);
      const Matrix eps2 = draw_normal(graph.n2(), d, rng_noise);

      // encoder pass (trainable)
      ad::Tape t;
      bvgae::ParamVars pv = bvgae::register_params(t, params, /*trainable=*/true);
      bvgae::EncoderNodes enc = bvgae::build_encoder(t, gctx, pv, &eps1, &eps2);

      // adversary step on the detached posterior mean
      {
        ad::Tape ta;
        ad::Var mu_detached = ta.constant(enc.mu1.value());
        std::vector<ad::Var> ws = register_all(ta, adversary.weights, true);
        std::vector<ad::Var> bs = register_all(ta, adversary.biases, true);
        ad::Var pred = adversary_forward(ta, mu_detached, ws, bs);
        ad::Var mse = ta.mean(ta.square(ta.sub(pred, ta.constant(s_std))));
        ta.backward(mse);
        std::vector<Matrix*> ptrs = adversary.all();
        std::vector<const Matrix*> grads;
        for (auto& v : ws) grads.push_back(&ta.grad(v));
        for (auto& v : bs) grads.push_back(&ta.grad(v));
        adam_adversary.step(ptrs, grads);
      }

      // encoder step against the updated adversary (constants here)
      ad::Var logits = bvgae::build_decoder_logits(t, enc.z1, enc.z2, cfg.signature);
      bvgae::LossParts parts;
      if (with_aggregate) {
        std::vector<std::size_t> chosen(plant_sessions.size(), 0);
        for (std::size_t k = 0; k < plant_sessions.size(); ++k)
          if (plant_present[k])
            chosen[k] = plant_sessions[k][rng_qtilde.uniform_index(plant_sessions[k].size())];
        parts = bvgae::spipoll_loss(t, enc, logits, rw, 0.0, nullptr, nullptr, chosen, aw,
                                    cfg.signature);
      } else {
        parts = bvgae::elbo_loss(t, enc, logits, rw);
      }
      std::vector<ad::Var> ws = register_all(t, adversary.weights, false);
      std::vector<ad::Var> bs = register_all(t, adversary.biases, false);
      ad::Var pred = adversary_forward(t, enc.mu1, ws, bs);
      ad::Var adv_mse = t.mean(t.square(t.sub(pred, t.constant(s_std))));
      ad::Var total = t.add(parts.total, t.scale(adv_mse, -adv_cfg.lambda));

      const double loss_value = total.value()(0, 0);
      if (!std::isfinite(loss_value)) {
        ok = false;
        break;
      }
      history.total.push_back(loss_value);
      history.reconstruction.push_back(parts.reconstruction);
      history.kl.push_back(parts.kl);
      history.independence.push_back(adv_mse.value()(0, 0));
      history.aggregate.push_back(parts.aggregate);

      t.backward(total);
      std::vector<Matrix*> ps = params.all();
      std::vector<const Matrix*> gs = {&t.grad(pv.w1_1), &t.grad(pv.w2_mu1),
                                       &t.grad(pv.w2_sigma1), &t.grad(pv.w1_2),
                                       &t.grad(pv.w2_mu2), &t.grad(pv.w2_sigma2)};
      adam_encoder.step(ps, gs);
    }

    if (!ok) {
      ++diverged;
      std::fprintf(stderr, "[train_adversarial] restart %zu diverged, discarding\n", restart);
      continue;
    }

    ad::Tape t;
    bvgae::ParamVars pv = bvgae::register_params(t, params, false);
    bvgae::EncoderNodes enc = bvgae::build_encoder(t, gctx, pv, nullptr, nullptr);
    bvgae::TrainResult candidate;
    candidate.latent.mu1 = enc.mu1.value();
    candidate.latent.log_sigma1 = enc.log_sigma1.value();
    candidate.latent.z1 = enc.mu1.value();
    candidate.latent.mu2 = enc.mu2.value();
    candidate.latent.log_sigma2 = enc.log_sigma2.value();
    candidate.latent.z2 = enc.mu2.value();
    candidate.latent.signature = cfg.signature;
    candidate.params = std::move(params);
    candidate.history = std::move(history);
    candidate.validation_auc = pair_auc(candidate.latent.mu1, candidate.latent.mu2,
                                        cfg.signature, split.val_edges, split.val_nonedges);
    if (!have_best || candidate.validation_auc > best.validation_auc) {
      best = std::move(candidate);
      best_restart = restart;
      have_best = true;
    }
  }

  if (!have_best) throw NumericError("train_adversarial: all restarts diverged");
  best.chosen_restart = best_restart;
  best.diverged_restarts = diverged;
  return best;
}

// ---------------------------------------------------------------------------

Matrix project_out(const Matrix& x, const Matrix& s) {
  if (x.rows() != s.rows()) throw DimensionError("project_out: row mismatch");
  Matrix gram = matmul_tn(s, s);  // d_s x d_s
  Matrix stx = matmul_tn(s, x);   // d_s x d
  Matrix coef;
  try {
    coef = solve_linear(gram, stx);
  } catch (const NumericError&) {
    std::fprintf(stderr, "[project_out] near-singular S^T S, adding 1e-8 ridge\n");
    for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) += 1e-8;
    coef = solve_linear(gram, stx);
  }
  return sub(x, matmul(s, coef));
}

namespace {

Matrix center_columns(const Matrix& x) {
  Matrix out = x;
  Matrix m = col_mean(x);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) -= m.data()[j];
  return out;
}

}  // namespace

LinearAeResult train_linear_autoencoder(const Matrix& x_raw, LinearVariant variant,
                                        const Matrix& s, const LinearAeConfig& cfg) {
  const Matrix x = center_columns(x_raw);
  const std::size_t n = x.rows(), d = x.cols(), k = cfg.latent_dim;
  const Matrix input = variant == LinearVariant::projected ? project_out(x, s) : x;
  const double inv_nd = 1.0 / static_cast<double>(n * d);

  Matrix s_std;
  hsic::RffMap map_latent, map_s;
  Matrix psi_s;
  const bool penalized = variant == LinearVariant::hsic;
  const std::size_t restarts = penalized ? cfg.restarts : 1;

  LinearAeResult best;
  best.variant = variant;
  double best_penalty = std::numeric_limits<double>::infinity();

  for (std::size_t restart = 0; restart < restarts; ++restart) {
    RngStream rng(cfg.seed, cfg.stream_base + restart * 4);
    if (penalized) {
      s_std = standardize_columns(s, 1e-12);
      map_latent = hsic::make_rff_map(cfg.rff_features, k, 1.0, rng);
      map_s = hsic::make_rff_map(cfg.rff_features, s_std.cols(), 1.0, rng);
      psi_s = hsic::rff_features(s_std, map_s);
    }
    Matrix w_enc = glorot(d, k, rng);
    Matrix w_dec = glorot(k, d, rng);
    AdamState adam(AdamConfig{.learning_rate = cfg.learning_rate});
    double last_penalty = 0.0;

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
      ad::Tape t;
      ad::Var we = t.parameter(w_enc);
      ad::Var wd = t.parameter(w_dec);
      ad::Var latent = t.matmul(t.constant(input), we);
      ad::Var recon = t.matmul(latent, wd);
      ad::Var err = t.sub(recon, t.constant(x));
      ad::Var loss = t.scale(t.frobenius_sq(err), inv_nd);
      if (penalized) {
        ad::Var latent_std = t.standardize_cols(latent, 1e-12);
        ad::Var psi = hsic::rff_features_node(t, latent_std, map_latent);
        ad::Var pen = hsic::rff_hsic_node(t, psi, t.constant(psi_s));
        last_penalty = pen.value()(0, 0);
        loss = t.add(loss, t.scale(pen, cfg.delta));
      }
      t.backward(loss);
      std::vector<Matrix*> ps{&w_enc, &w_dec};
      std::vector<const Matrix*> gs{&t.grad(we), &t.grad(wd)};
      adam.step(ps, gs);
    }

    const double penalty = penalized ? last_penalty : 0.0;
    if (!penalized || penalty < best_penalty) {
      best_penalty = penalty;
      best.encoder = w_enc;
      best.decoder = w_dec;
      best.train_hsic = penalty;
    }
  }
  return best;
}

Matrix linear_encode(const Matrix& x, const Matrix& s, const LinearAeResult& model) {
  Matrix input = center_columns(x);
  if (model.variant == LinearVariant::projected) input = project_out(input, s);
  return matmul(input, model.encoder);
}

Matrix linear_reconstruct(const Matrix& x, const Matrix& s, const LinearAeResult& model) {
  return matmul(linear_encode(x, s, model), model.decoder);
}

namespace {

// Orthonormal basis of the column span (modified Gram-Schmidt).
Matrix orthonormalize(const Matrix& a) {
  Matrix q = a;
  for (std::size_t c = 0; c < q.cols(); ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot_cp = 0.0;
      for (std::size_t i = 0; i < q.rows(); ++i) dot_cp += q(i, c) * q(i, p);
      for (std::size_t i = 0; i < q.rows(); ++i) q(i, c) -= dot_cp * q(i, p);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < q.rows(); ++i) norm += q(i, c) * q(i, c);
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericError("orthonormalize: rank-deficient basis");
    for (std::size_t i = 0; i < q.rows(); ++i) q(i, c) /= norm;
  }
  return q;
}

}  // namespace

SubspaceComparison check_subspace_equivalence(const Matrix& x, const Matrix& s,
                                              const LinearAeConfig& cfg) {
  LinearAeConfig c = cfg;
  LinearAeResult plain = train_linear_autoencoder(x, LinearVariant::plain, s, c);
  c.stream_base += 1000;
  LinearAeResult projected = train_linear_autoencoder(x, LinearVariant::projected, s, c);
  c.stream_base += 1000;
  LinearAeResult penalized = train_linear_autoencoder(x, LinearVariant::hsic, s, c);

  // latent configurations (n x k); the projected model encodes P_{S^perp} X
  const Matrix xc = center_columns(x);
  Matrix latent_projected = matmul(project_out(xc, s), projected.encoder);
  Matrix latent_hsic = matmul(xc, penalized.encoder);

  // principal angles between the two latent column spans
  Matrix q1 = orthonormalize(latent_projected);
  Matrix q2 = orthonormalize(latent_hsic);
  Matrix m = matmul_tn(q1, q2);  // k x k
  Matrix mtm = matmul_tn(m, m);
  double min_sv_sq = 1.0, max_sv_sq = 0.0;
  if (mtm.rows() == 2) {
    const double tr = mtm(0, 0) + mtm(1, 1);
    const double det = mtm(0, 0) * mtm(1, 1) - mtm(0, 1) * mtm(1, 0);
    const double disc = std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
    min_sv_sq = std::max(tr / 2.0 - disc, 0.0);
    max_sv_sq = std::max(tr / 2.0 + disc, 0.0);
  } else {
    for (std::size_t i = 0; i < mtm.rows(); ++i) {
      min_sv_sq = std::min(min_sv_sq, mtm(i, i));
      max_sv_sq = std::max(max_sv_sq, mtm(i, i));
    }
  }
  SubspaceComparison out;
  auto angle_deg = [](double sv_sq) {
    const double c = std::clamp(std::sqrt(std::max(sv_sq, 0.0)), 0.0, 1.0);
    return std::acos(c) * 180.0 / 3.14159265358979323846;
  };
  out.largest_principal_angle_degrees = angle_deg(min_sv_sq);
  out.smallest_principal_angle_degrees = angle_deg(max_sv_sq);
  out.cor_plain = eval::correlation_norm(linear_encode(x, s, plain), s);
  out.cor_projected = eval::correlation_norm(latent_projected, s);
  out.cor_hsic = eval::correlation_norm(latent_hsic, s);
  return out;
}

}  // namespace fairbide::baselines
