#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "fairbide/evalmetrics.hpp"
#include "fairbide/rng.hpp"

using namespace fairbide;
using namespace fairbide::eval;

namespace {

// Brute-force AUC: count wins and half-credit ties over all pos/neg pairs.
double auc_bruteforce(const std::vector<double>& scores, const std::vector<double>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (labels[p] != 1.0) continue;
    for (std::size_t q = 0; q < scores.size(); ++q) {
      if (labels[q] != 0.0) continue;
      ++pairs;
      if (scores[p] > scores[q])
        wins += 1.0;
      else if (scores[p] == scores[q])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

Matrix random_binary(std::size_t r, std::size_t c, double density, RngStream& rng) {
  return draw(Distribution::bernoulli, r, c, rng, density);
}

}  // namespace

TEST_CASE("auc basics") {
  std::vector<double> s1{1, 2, 3, 4}, l1{0, 0, 1, 1};
  CHECK(auc(s1, l1) == doctest::Approx(1.0));
  std::vector<double> s2{5, 5, 5, 5}, l2{0, 1, 0, 1};
  CHECK(auc(s2, l2) == doctest::Approx(0.5));
  std::vector<double> s3{0.1, 0.4, 0.35, 0.8}, l3{0, 0, 1, 1};
  CHECK(auc(s3, l3) == doctest::Approx(0.75));
  std::vector<double> single{1, 2}, lab{1, 1};
  CHECK_THROWS_AS(auc(single, lab), DataError);
}

TEST_CASE("auc equals exhaustive pairwise oracle on short inputs") {
  RngStream rng(101, 0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(11);
    std::vector<double> scores(n), labels(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // small alphabet to provoke ties
      scores[i] = static_cast<double>(rng.uniform_index(4)) / 3.0;
      labels[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      has_pos |= labels[i] == 1.0;
      has_neg |= labels[i] == 0.0;
    }
    if (!has_pos || !has_neg) continue;
    CHECK(auc(scores, labels) == doctest::Approx(auc_bruteforce(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("spearman closed forms and symmetry") {
  std::vector<double> a{1, 2, 3};
  std::vector<double> b{1, 3, 2};
  CHECK(spearman(a, a) == doctest::Approx(1.0));
  std::vector<double> neg{-1, -2, -3};
  CHECK(spearman(a, neg) == doctest::Approx(-1.0));
  CHECK(spearman(a, b) == doctest::Approx(0.5));
  CHECK(spearman(a, b) == doctest::Approx(spearman(b, a)));
  std::vector<double> constant{2, 2, 2};
  CHECK_THROWS_AS(spearman(a, constant), NumericError);
}

TEST_CASE("spearman invariant under monotone transforms") {
  RngStream rng(7, 0);
  std::vector<double> a(50), b(50), a_t(50);
  for (int i = 0; i < 50; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
    a_t[i] = std::exp(2.0 * a[i]) + 1.0;  // strictly increasing transform
  }
  CHECK(spearman(a, b) == doctest::Approx(spearman(a_t, b)).epsilon(1e-12));
}

TEST_CASE("correlation_norm basics") {
  RngStream rng(9, 0);
  Matrix s = draw_normal(1000, 1, rng);
  CHECK(correlation_norm(s, s) == doctest::Approx(1.0));

  Matrix z = draw_normal(1000, 3, rng);
  CHECK(correlation_norm(z, s) < 0.15);

  // affine rescaling of a column leaves correlations unchanged
  Matrix z2 = z;
  for (std::size_t i = 0; i < z2.rows(); ++i) z2(i, 1) = 5.0 * z2(i, 1) - 7.0;
  CHECK(correlation_norm(z2, s) == doctest::Approx(correlation_norm(z, s)).epsilon(1e-12));

  Matrix constant(1000, 1, 1.0);
  CHECK_THROWS_AS(correlation_norm(constant, s), NumericError);
}

TEST_CASE("split_edges: fractions, disjointness, determinism") {
  RngStream rng(33, 0);
  Matrix b(20, 20, 0.0);
  // plant exactly 100 edges
  std::size_t placed = 0;
  while (placed < 100) {
    const std::size_t i = rng.uniform_index(20), j = rng.uniform_index(20);
    if (b(i, j) == 0.0) {
      b(i, j) = 1.0;
      ++placed;
    }
  }
  RngStream srng(5, 0);
  EdgeSplit split = split_edges(b, {}, srng);
  CHECK(split.train_edges.size() == 70);
  CHECK(split.val_edges.size() == 20);
  CHECK(split.test_edges.size() == 10);
  CHECK(split.val_nonedges.size() == 20);
  CHECK(split.test_nonedges.size() == 10);

  // determinism
  RngStream srng2(5, 0);
  EdgeSplit split2 = split_edges(b, {}, srng2);
  CHECK(split.train_edges == split2.train_edges);
  CHECK(split.test_nonedges == split2.test_nonedges);

  // non-edges actually non-edges, held-out edges actually edges
  for (const auto& [i, j] : split.val_nonedges) CHECK(b(i, j) == 0.0);
  for (const auto& [i, j] : split.test_edges) CHECK(b(i, j) == 1.0);

  Matrix zeroed = training_biadjacency(b, split);
  for (const auto& [i, j] : split.val_edges) CHECK(zeroed(i, j) == 0.0);
  for (const auto& [i, j] : split.train_edges) CHECK(zeroed(i, j) == 1.0);
}

TEST_CASE("split_edges: disjointness across random trials") {
  for (int trial = 0; trial < 100; ++trial) {
    RngStream rng(200 + trial, 0);
    Matrix b = random_binary(15, 12, 0.4, rng);
    double edges = sum(b);
    if (edges < 10) continue;
    EdgeSplit split = split_edges(b, {}, rng);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::size_t total = 0;
    for (const auto* v : {&split.train_edges, &split.val_edges, &split.test_edges,
                          &split.val_nonedges, &split.test_nonedges}) {
      for (const auto& p : *v) {
        seen.insert(p);
        ++total;
      }
    }
    CHECK(seen.size() == total);
  }
}

TEST_CASE("split_edges: error contracts") {
  Matrix complete(10, 10, 1.0);
  RngStream rng(1, 0);
  CHECK_THROWS_AS(split_edges(complete, {}, rng), DataError);
  Matrix sparse(5, 5, 0.0);
  sparse(0, 0) = 1.0;
  CHECK_THROWS_AS(split_edges(sparse, {}, rng), DataError);
}

TEST_CASE("build_aggregate_split: certainty rule") {
  // 3 sessions, 2 plants, 3 insects
  Matrix b = Matrix::from_rows({{1, 0, 1}, {0, 1, 0}, {1, 1, 0}});
  Matrix p = Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}});

  SUBCASE("no held-out pairs: everything is aggregate-train") {
    EdgeSplit split;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (b(i, j) == 1.0) split.train_edges.emplace_back(i, j);
    AggregateSplit agg = build_aggregate_split(split, b, p);
    CHECK(agg.train_pairs.size() == 6);
    CHECK(agg.test_pairs.empty());
  }

  SUBCASE("plant whose only supporting edge is held out goes to test") {
    EdgeSplit split;
    split.test_edges.emplace_back(1, 1);  // session 1 is plant 0's only edge at j=1
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (b(i, j) == 1.0 && !(i == 1 && j == 1)) split.train_edges.emplace_back(i, j);
    AggregateSplit agg = build_aggregate_split(split, b, p);
    bool pair_in_test = false;
    for (const auto& pr : agg.test_pairs) pair_in_test |= (pr == Pair{0, 1});
    CHECK(pair_in_test);
    // partition property
    CHECK(agg.train_pairs.size() + agg.test_pairs.size() == 6);
  }

  SUBCASE("held-out non-edge makes the pair uncertain") {
    EdgeSplit split;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (b(i, j) == 1.0) split.train_edges.emplace_back(i, j);
    split.val_nonedges.emplace_back(2, 2);  // touches plant 1, insect 2
    AggregateSplit agg = build_aggregate_split(split, b, p);
    bool in_test = false;
    for (const auto& pr : agg.test_pairs) in_test |= (pr == Pair{1, 2});
    CHECK(in_test);
  }
}

TEST_CASE("aggregate_trials statistics") {
  TrialMetrics t1, t2;
  t1.auc_B = 0.6;
  t2.auc_B = 0.7;
  t1.p_value = 0.01;
  t2.p_value = 0.2;
  ExperimentReport r = aggregate_trials({t1, t2});
  CHECK(r.summary["auc_B"].mean == doctest::Approx(0.65));
  CHECK(r.summary["auc_B"].std == doctest::Approx(std::sqrt(0.005)).epsilon(1e-9));
  CHECK(r.rejections == 1);

  ExperimentReport single = aggregate_trials({t1});
  CHECK(single.summary["auc_B"].std == 0.0);
  CHECK(single.summary["auc_B"].single_trial);

  TrialMetrics c1, c2;
  c1.hsic = 0.5;
  c2.hsic = 0.5;
  ExperimentReport constant = aggregate_trials({c1, c2});
  CHECK(constant.summary["hsic"].std == 0.0);
}
