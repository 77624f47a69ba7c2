#include "fairbide/simgen.hpp"

#include <cmath>

#include "fairbide/fastmath.hpp"

namespace fairbide::simgen {

namespace {

SimpleSimData gen_simple_impl(std::size_t n1, std::size_t n2,
                              const bvgae::LatentSignature& sig, RngStream& rng,
                              bool binary_s) {
  if (n1 == 0 || n2 == 0) throw ConfigError("gen_simple: empty graph");
  if (sig.total() != 2) throw ConfigError("gen_simple: generative latent is 2-dimensional");
  SimpleSimData out;
  out.s = binary_s ? draw(Distribution::rademacher, n1, 1, rng) : draw_normal(n1, 1, rng);
  out.t = draw_normal(n1, 1, rng);
  out.z1_true = Matrix(n1, 2);
  for (std::size_t i = 0; i < n1; ++i) {
    out.z1_true(i, 0) = out.s(i, 0);
    out.z1_true(i, 1) = out.t(i, 0);
  }
  out.z2_true = draw_normal(n2, 2, rng);
  Matrix probs = bvgae::decode(out.z1_true, out.z2_true, sig);
  out.graph.b = Matrix(n1, n2);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      out.graph.b(i, j) = rng.bernoulli(probs(i, j)) ? 1.0 : 0.0;
  return out;
}

}  // namespace

SimpleSimData gen_simple(std::size_t n1, std::size_t n2,
                         const bvgae::LatentSignature& sig, RngStream& rng) {
  return gen_simple_impl(n1, n2, sig, rng, /*binary_s=*/false);
}

SimpleSimData gen_simple_binary(std::size_t n1, std::size_t n2,
                                const bvgae::LatentSignature& sig, RngStream& rng) {
  return gen_simple_impl(n1, n2, sig, rng, /*binary_s=*/true);
}

void SbmSpec::validate() const {
  auto check_props = [](const std::array<double, 3>& p, const char* what) {
    double total = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw ConfigError(std::string("sbm: negative proportion in ") + what);
      total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9)
      throw ConfigError(std::string("sbm: ") + what + " must sum to 1");
  };
  check_props(row_groups, "row groups");
  check_props(col_groups, "column groups");
  if (connectivity.rows() != 3 || connectivity.cols() != 3)
    throw ConfigError("sbm: connectivity must be 3x3");
  for (std::size_t i = 0; i < connectivity.size(); ++i) {
    const double v = connectivity.data()[i];
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("sbm: connectivity outside [0,1]");
  }
  for (double h : hard_prob)
    if (!(h >= 0.0 && h <= 1.0)) throw ConfigError("sbm: hard probability outside [0,1]");
  if (plants == 0 || insects == 0) throw ConfigError("sbm: empty network");
}

double SbmSpec::expected_density() const {
  double total = 0.0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      total += row_groups[a] * col_groups[b] * connectivity(a, b);
  return total;
}

GroundTruth gen_sbm(const SbmSpec& spec, RngStream& rng) {
  spec.validate();
  GroundTruth out;
  out.plant_group.resize(spec.plants);
  out.insect_group.resize(spec.insects);
  out.hard.resize(spec.insects);
  for (std::size_t k = 0; k < spec.plants; ++k)
    out.plant_group[k] = static_cast<int>(rng.multinomial(spec.row_groups));
  for (std::size_t j = 0; j < spec.insects; ++j) {
    out.insect_group[j] = static_cast<int>(rng.multinomial(spec.col_groups));
    out.hard[j] = rng.bernoulli(spec.hard_prob[out.insect_group[j]]);
  }
  out.pi = Matrix(spec.plants, spec.insects);
  out.b0_prime = Matrix(spec.plants, spec.insects);
  for (std::size_t k = 0; k < spec.plants; ++k)
    for (std::size_t j = 0; j < spec.insects; ++j) {
      const double p = spec.connectivity(out.plant_group[k], out.insect_group[j]);
      out.pi(k, j) = p;
      out.b0_prime(k, j) = rng.bernoulli(p) ? 1.0 : 0.0;
    }
  return out;
}

ObservedData gen_observations(const GroundTruth& truth, const ObservationSpec& spec,
                              RngStream& rng) {
  if (!(spec.w_easy > 0.0) || !(spec.w_hard > 0.0))
    throw ConfigError("gen_observations: weights must be positive");
  const std::size_t u = truth.b0_prime.rows();
  const std::size_t n2 = truth.b0_prime.cols();
  const std::size_t n1 = spec.observers;

  ObservedData out;
  out.b = Matrix(n1, n2, 0.0);
  out.plant_onehot = Matrix(n1, u, 0.0);
  out.experience.resize(n1);
  out.empty_session.assign(n1, false);

  std::vector<std::size_t> candidates;
  std::vector<double> weights;
  for (std::size_t i = 0; i < n1; ++i) {
    const double raw = rng.exponential(spec.experience_mean);
    const std::int64_t exp_count = static_cast<std::int64_t>(std::llround(raw)) + 1;
    out.experience[i] = exp_count;
    const std::size_t k = rng.uniform_index(u);
    out.plant_onehot(i, k) = 1.0;

    const auto obs_budget = static_cast<std::int64_t>(
        std::llround(2.0 * std::log(static_cast<double>(exp_count))));

    candidates.clear();
    weights.clear();
    for (std::size_t j = 0; j < n2; ++j)
      if (truth.b0_prime(k, j) != 0.0) {
        candidates.push_back(j);
        weights.push_back(truth.hard[j] ? spec.w_hard : spec.w_easy);
      }
    std::int64_t to_draw = std::min<std::int64_t>(obs_budget,
                                                  static_cast<std::int64_t>(candidates.size()));
    if (to_draw <= 0) {
      out.empty_session[i] = true;
      continue;
    }
    // successive weighted draws without replacement
    double weight_total = 0.0;
    for (double w : weights) weight_total += w;
    for (std::int64_t draw_ix = 0; draw_ix < to_draw; ++draw_ix) {
      double ticket = rng.uniform01() * weight_total;
      std::size_t pick = candidates.size() - 1;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (weights[c] <= 0.0) continue;
        if (ticket < weights[c]) {
          pick = c;
          break;
        }
        ticket -= weights[c];
      }
      out.b(i, candidates[pick]) = 1.0;
      weight_total -= weights[pick];
      weights[pick] = 0.0;
    }
  }
  out.b_prime_observed = bvgae::aggregate_plants(out.b, out.plant_onehot);
  return out;
}

Matrix experience_protected(const std::vector<std::int64_t>& experience) {
  if (experience.empty()) throw DataError("experience_protected: empty input");
  Matrix s(experience.size(), 1);
  for (std::size_t i = 0; i < experience.size(); ++i) {
    if (experience[i] < 1)
      throw DataError("experience_protected: nonpositive experience at " + std::to_string(i));
    s(i, 0) = std::log10(static_cast<double>(experience[i]));
  }
  try {
    return standardize_columns(s);
  } catch (const NumericError&) {
    throw DataError("experience_protected: constant protected variable");
  }
}

PreparedSpipoll prepare_training(const GroundTruth& truth, const ObservedData& obs) {
  const std::size_t n1 = obs.b.rows(), n2 = obs.b.cols(), u = obs.plant_onehot.cols();
  PreparedSpipoll out;
  for (std::size_t i = 0; i < n1; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n2; ++j) deg += obs.b(i, j);
    if (deg > 0.0) out.kept_sessions.push_back(i);
  }
  for (std::size_t j = 0; j < n2; ++j) {
    double deg = 0.0;
    for (std::size_t i = 0; i < n1; ++i) deg += obs.b(i, j);
    if (deg > 0.0) out.kept_insects.push_back(j);
  }
  out.dropped_sessions = n1 - out.kept_sessions.size();
  out.dropped_insects = n2 - out.kept_insects.size();
  if (out.kept_sessions.empty() || out.kept_insects.empty())
    throw DataError("prepare_training: no observations survived");

  const std::size_t m1 = out.kept_sessions.size(), m2 = out.kept_insects.size();
  out.graph.b = Matrix(m1, m2);
  Matrix p(m1, u);
  out.experience_kept.resize(m1);
  for (std::size_t r = 0; r < m1; ++r) {
    const std::size_t i = out.kept_sessions[r];
    out.experience_kept[r] = obs.experience[i];
    for (std::size_t c = 0; c < m2; ++c) out.graph.b(r, c) = obs.b(i, out.kept_insects[c]);
    for (std::size_t k = 0; k < u; ++k) p(r, k) = obs.plant_onehot(i, k);
  }
  out.plants.p = p;
  out.graph.x1 = p;
  out.graph.x2 = std::nullopt;  // identity features
  out.s = experience_protected(out.experience_kept);

  out.b_prime_observed = bvgae::aggregate_plants(out.graph.b, p);
  out.b0_prime = Matrix(u, m2);
  out.pi = Matrix(u, m2);
  for (std::size_t k = 0; k < u; ++k)
    for (std::size_t c = 0; c < m2; ++c) {
      out.b0_prime(k, c) = truth.b0_prime(k, out.kept_insects[c]);
      out.pi(k, c) = truth.pi(k, out.kept_insects[c]);
    }
  return out;
}

double expected_detection_count(double experience_mean) {
  // P(round(E) = k) for E ~ Exp(mean): F(k+1/2) - F(k-1/2), F(x) = 1 - e^{-x/mean}
  auto cdf = [experience_mean](double x) {
    return x <= 0.0 ? 0.0 : 1.0 - std::exp(-x / experience_mean);
  };
  double total = 0.0;
  double mass = 0.0;
  for (std::int64_t k = 0; k < 100000; ++k) {
    const double p = cdf(static_cast<double>(k) + 0.5) - cdf(static_cast<double>(k) - 0.5);
    const double obs = std::llround(2.0 * std::log(static_cast<double>(k + 1)));
    total += p * obs;
    mass += p;
    if (1.0 - mass < 1e-12) break;
  }
  return total;
}

}  // namespace fairbide::simgen
