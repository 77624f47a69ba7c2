#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairbide/matrix.hpp"
#include "fairbide/rng.hpp"

namespace fairbide::eval {

using Pair = std::pair<std::size_t, std::size_t>;

struct SplitFractions {
  double train = 0.70;
  double validation = 0.20;
  double test = 0.10;
};

// Disjoint train/validation/test edge sets plus matched non-edge samples for
// the held-out sets. Counts use floor for test and validation; the train set
// absorbs the rounding remainder.
struct EdgeSplit {
  std::vector<Pair> train_edges;
  std::vector<Pair> val_edges;
  std::vector<Pair> test_edges;
  std::vector<Pair> val_nonedges;
  std::vector<Pair> test_nonedges;

  std::vector<Pair> held_out_pairs() const;  // val+test, edges and non-edges
};

EdgeSplit split_edges(const Matrix& b, const SplitFractions& fractions, RngStream& rng);

// Copy of B with validation and test edges zeroed.
Matrix training_biadjacency(const Matrix& b, const EdgeSplit& split);

// Plant-level pairs whose observed status is certain from train data alone
// go to the aggregate train set; everything else is aggregate test.
struct AggregateSplit {
  std::vector<Pair> train_pairs;
  std::vector<Pair> test_pairs;
};

AggregateSplit build_aggregate_split(const EdgeSplit& split, const Matrix& b,
                                     const Matrix& plant_onehot);

// Mann-Whitney AUC via average ranks: P(score+ > score-) + 0.5 P(tie).
double auc(std::span<const double> scores, std::span<const double> labels);

double spearman(std::span<const double> a, std::span<const double> b);

// Euclidean norm of the cross-correlation matrix between the columns of z
// and the columns of s.
double correlation_norm(const Matrix& z, const Matrix& s);

// One row of an experiment report; metrics not applicable to a run stay NaN
// and are skipped during aggregation.
struct TrialMetrics {
  double auc_B = std::numeric_limits<double>::quiet_NaN();
  double auc_Btilde_prime = std::numeric_limits<double>::quiet_NaN();
  double auc_Bhat_prime = std::numeric_limits<double>::quiet_NaN();
  double hsic = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  double cor = std::numeric_limits<double>::quiet_NaN();
  double cor_sp = std::numeric_limits<double>::quiet_NaN();
};

struct SummaryStat {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = 0.0;
  std::size_t count = 0;
  bool single_trial = false;
};

struct ExperimentReport {
  std::vector<TrialMetrics> trials;
  std::map<std::string, SummaryStat> summary;  // keyed by metric name
  std::size_t rejections = 0;                  // p_value < 0.05 count
};

ExperimentReport aggregate_trials(std::vector<TrialMetrics> trials);

std::vector<std::string> metric_names();
double metric_value(const TrialMetrics& m, const std::string& name);

}  // namespace fairbide::eval
