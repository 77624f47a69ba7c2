#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fairbide/bvgae.hpp"
#include "fairbide/matrix.hpp"
#include "fairbide/rng.hpp"

namespace fairbide::simgen {

// --- simple latent-space simulation ----------------------------------------

struct SimpleSimData {
  bvgae::BipartiteGraph graph;  // featureless on both sides
  Matrix s;                     // n1 x 1 protected variable
  Matrix t;                     // n1 x 1 nuisance variable
  Matrix z1_true;               // n1 x 2, columns (s, t)
  Matrix z2_true;               // n2 x 2
};

// Edges drawn Bernoulli(sigmoid(z1_i^T I_{+,-} z2_j)) from standard-normal
// latents, with z1 = (s, t).
SimpleSimData gen_simple(std::size_t n1, std::size_t n2,
                         const bvgae::LatentSignature& signature, RngStream& rng);

// Same construction with a Rademacher protected variable.
SimpleSimData gen_simple_binary(std::size_t n1, std::size_t n2,
                                const bvgae::LatentSignature& signature, RngStream& rng);

// --- plant-pollinator sampling-process simulation ---------------------------

struct SbmSpec {
  std::array<double, 3> row_groups{0.3, 0.4, 0.3};     // plant group proportions
  std::array<double, 3> col_groups{0.2, 0.4, 0.4};     // insect group proportions
  Matrix connectivity = Matrix::from_rows({{0.95, 0.80, 0.50},
                                           {0.90, 0.55, 0.20},
                                           {0.70, 0.25, 0.06}});
  std::array<double, 3> hard_prob{0.9, 0.6, 0.1};      // P(hard | insect group)
  std::size_t plants = 83;
  std::size_t insects = 306;

  void validate() const;
  // Expected edge density sum_ab alpha_a beta_b pi_ab.
  double expected_density() const;
};

struct GroundTruth {
  Matrix b0_prime;               // plants x insects, the true binary network
  Matrix pi;                     // plants x insects, true probabilities
  std::vector<int> plant_group;  // 0-based labels
  std::vector<int> insect_group;
  std::vector<bool> hard;        // per insect
};

GroundTruth gen_sbm(const SbmSpec& spec, RngStream& rng);

struct ObservationSpec {
  std::size_t observers = 3000;
  double experience_mean = 21.0;  // exponential mean of prior session count
  double w_easy = 0.8;
  double w_hard = 0.2;
};

// Each observer monitors one uniformly chosen plant and detects
// round(2 ln(experience)) of its true partners, drawn without replacement
// with probability proportional to the difficulty weights.
struct ObservedData {
  Matrix b;                          // observers x insects (may contain empty rows)
  Matrix plant_onehot;               // observers x plants
  std::vector<std::int64_t> experience;  // per observer, >= 1
  std::vector<bool> empty_session;
  Matrix b_prime_observed;           // aggregate_plants(b, plant_onehot)
};

ObservedData gen_observations(const GroundTruth& truth, const ObservationSpec& spec,
                              RngStream& rng);

// log10 of the experience counts, standardized. Errors when the counts are
// constant or nonpositive.
Matrix experience_protected(const std::vector<std::int64_t>& experience);

// Training view of an observation simulation: empty sessions and never
// observed insects removed, protected variable recomputed on the kept rows.
struct PreparedSpipoll {
  bvgae::BipartiteGraph graph;     // x1 = plant one-hot
  bvgae::PlantAssignment plants;
  Matrix s;                        // kept sessions x 1
  Matrix b_prime_observed;         // plants x kept insects
  Matrix b0_prime;                 // ground truth restricted to kept insects
  Matrix pi;                       // same restriction
  std::vector<std::size_t> kept_sessions;
  std::vector<std::size_t> kept_insects;
  std::size_t dropped_sessions = 0;
  std::size_t dropped_insects = 0;
  std::vector<std::int64_t> experience_kept;
};

PreparedSpipoll prepare_training(const GroundTruth& truth, const ObservedData& obs);

// Exact mean of round(2 ln(round(Exp(mean)) + 1)) by summation over the
// discretized exponential; the oracle behind the detection-count invariant.
double expected_detection_count(double experience_mean);

}  // namespace fairbide::simgen
