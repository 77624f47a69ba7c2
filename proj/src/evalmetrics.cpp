#include "fairbide/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "fairbide/special.hpp"

namespace fairbide::eval {

std::vector<Pair> EdgeSplit::held_out_pairs() const {
  std::vector<Pair> out;
  out.reserve(val_edges.size() + test_edges.size() + val_nonedges.size() +
              test_nonedges.size());
  for (const auto& v : {val_edges, test_edges, val_nonedges, test_nonedges})
    out.insert(out.end(), v.begin(), v.end());
  return out;
}

EdgeSplit split_edges(const Matrix& b, const SplitFractions& fractions, RngStream& rng) {
  const std::size_t n1 = b.rows(), n2 = b.cols();
  std::vector<Pair> edges;
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      if (b(i, j) != 0.0) edges.emplace_back(i, j);
  if (edges.size() < 10) throw DataError("split_edges: need at least 10 edges");

  const std::size_t n_edges = edges.size();
  const std::size_t n_test =
      static_cast<std::size_t>(std::floor(fractions.test * static_cast<double>(n_edges)));
  const std::size_t n_val =
      static_cast<std::size_t>(std::floor(fractions.validation * static_cast<double>(n_edges)));
  if (n_test == 0 || n_val == 0)
    throw DataError("split_edges: fractions leave an empty held-out set");

  rng.shuffle(edges);
  EdgeSplit split;
  split.test_edges.assign(edges.begin(), edges.begin() + n_test);
  split.val_edges.assign(edges.begin() + n_test, edges.begin() + n_test + n_val);
  split.train_edges.assign(edges.begin() + n_test + n_val, edges.end());

  // matched non-edges, sampled uniformly without replacement
  const std::size_t needed = n_test + n_val;
  const std::size_t zeros = n1 * n2 - n_edges;
  if (zeros < needed) throw DataError("split_edges: insufficient non-edges");
  std::unordered_set<std::uint64_t> taken;
  std::vector<Pair> nonedges;
  nonedges.reserve(needed);
  while (nonedges.size() < needed) {
    const std::size_t i = rng.uniform_index(n1);
    const std::size_t j = rng.uniform_index(n2);
    if (b(i, j) != 0.0) continue;
    const std::uint64_t key = static_cast<std::uint64_t>(i) * n2 + j;
    if (!taken.insert(key).second) continue;
    nonedges.emplace_back(i, j);
  }
  split.test_nonedges.assign(nonedges.begin(), nonedges.begin() + n_test);
  split.val_nonedges.assign(nonedges.begin() + n_test, nonedges.end());
  return split;
}

Matrix training_biadjacency(const Matrix& b, const EdgeSplit& split) {
  Matrix out = b;
  for (const auto& [i, j] : split.val_edges) out(i, j) = 0.0;
  for (const auto& [i, j] : split.test_edges) out(i, j) = 0.0;
  return out;
}

AggregateSplit build_aggregate_split(const EdgeSplit& split, const Matrix& b,
                                     const Matrix& plant_onehot) {
  const std::size_t n1 = b.rows(), n2 = b.cols(), u = plant_onehot.cols();
  if (plant_onehot.rows() != n1)
    throw DimensionError("build_aggregate_split: plant assignment row mismatch");

  std::vector<std::size_t> plant_of(n1);
  for (std::size_t i = 0; i < n1; ++i) {
    std::size_t k = u;
    for (std::size_t c = 0; c < u; ++c)
      if (plant_onehot(i, c) != 0.0) {
        k = c;
        break;
      }
    if (k == u) throw DataError("build_aggregate_split: session without plant");
    plant_of[i] = k;
  }

  // (k, j) is a certain positive when a train edge reveals it, and a certain
  // negative when no session of plant k touches column j with an edge or a
  // held-out pair. Everything else cannot be decided from train data.
  Matrix has_train_edge(u, n2, 0.0);
  for (const auto& [i, j] : split.train_edges) has_train_edge(plant_of[i], j) = 1.0;

  Matrix touched(u, n2, 0.0);
  for (const auto& [i, j] : split.held_out_pairs()) touched(plant_of[i], j) = 1.0;

  AggregateSplit agg;
  for (std::size_t k = 0; k < u; ++k)
    for (std::size_t j = 0; j < n2; ++j) {
      if (has_train_edge(k, j) != 0.0)
        agg.train_pairs.emplace_back(k, j);
      else if (touched(k, j) == 0.0)
        agg.train_pairs.emplace_back(k, j);
      else
        agg.test_pairs.emplace_back(k, j);
    }
  return agg;
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: length mismatch");
  std::size_t n_pos = 0;
  for (double l : labels) {
    if (l != 0.0 && l != 1.0) throw DataError("auc: labels must be 0/1");
    if (l == 1.0) ++n_pos;
  }
  const std::size_t n = scores.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc: both classes required");
  const std::vector<double> r = ranks(std::vector<double>(scores.begin(), scores.end()));
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] == 1.0) rank_sum_pos += r[i];
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) throw NumericError("pearson: degenerate input");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman: length mismatch");
  if (a.size() < 3) throw DataError("spearman: need at least 3 observations");
  const auto ra = ranks(std::vector<double>(a.begin(), a.end()));
  const auto rb = ranks(std::vector<double>(b.begin(), b.end()));
  try {
    return pearson(ra, rb);
  } catch (const NumericError&) {
    throw NumericError("spearman: degenerate ranks");
  }
}

double correlation_norm(const Matrix& z, const Matrix& s) {
  if (z.rows() != s.rows()) throw DimensionError("correlation_norm: row mismatch");
  const std::size_t n = z.rows();
  auto column = [n](const Matrix& m, std::size_t j) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = m(i, j);
    return v;
  };
  double total = 0.0;
  for (std::size_t a = 0; a < z.cols(); ++a) {
    const auto za = column(z, a);
    for (std::size_t b = 0; b < s.cols(); ++b) {
      const double c = pearson(za, column(s, b));
      total += c * c;
    }
  }
  return std::sqrt(total);
}

std::vector<std::string> metric_names() {
  return {"auc_B", "auc_Btilde_prime", "auc_Bhat_prime", "hsic", "p_value", "cor", "cor_sp"};
}

double metric_value(const TrialMetrics& m, const std::string& name) {
  if (name == "auc_B") return m.auc_B;
  if (name == "auc_Btilde_prime") return m.auc_Btilde_prime;
  if (name == "auc_Bhat_prime") return m.auc_Bhat_prime;
  if (name == "hsic") return m.hsic;
  if (name == "p_value") return m.p_value;
  if (name == "cor") return m.cor;
  if (name == "cor_sp") return m.cor_sp;
  throw ConfigError("unknown metric: " + name);
}

ExperimentReport aggregate_trials(std::vector<TrialMetrics> trials) {
  if (trials.empty()) throw DataError("aggregate_trials: no trials");
  ExperimentReport r;
  r.trials = std::move(trials);
  for (const auto& name : metric_names()) {
    std::vector<double> vals;
    for (const auto& t : r.trials) {
      const double v = metric_value(t, name);
      if (std::isfinite(v)) vals.push_back(v);
    }
    if (vals.empty()) continue;
    SummaryStat s;
    s.count = vals.size();
    s.single_trial = vals.size() == 1;
    double m = 0.0;
    for (double v : vals) m += v;
    m /= static_cast<double>(vals.size());
    s.mean = m;
    if (vals.size() > 1) {
      double acc = 0.0;
      for (double v : vals) acc += (v - m) * (v - m);
      s.std = std::sqrt(acc / static_cast<double>(vals.size() - 1));
    }
    r.summary[name] = s;
  }
  for (const auto& t : r.trials)
    if (std::isfinite(t.p_value) && t.p_value < 0.05) r.rejections++;
  return r;
}

}  // namespace fairbide::eval
