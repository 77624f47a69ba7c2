#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairbide/baselines.hpp"
#include "fairbide/bvgae.hpp"
#include "fairbide/evalmetrics.hpp"
#include "fairbide/simgen.hpp"

namespace fairbide::runner {

enum class ModelKind { bvgae, fair, adv };
enum class DataMode { simple, simple_binary, spipoll, files };

ModelKind model_from_string(const std::string& s);
DataMode mode_from_string(const std::string& s);
std::string to_string(ModelKind m);
std::string to_string(DataMode m);

struct ExperimentConfig {
  DataMode mode = DataMode::simple;
  ModelKind model = ModelKind::bvgae;
  std::size_t trials = 10;
  std::size_t n1 = 1000;
  std::size_t n2 = 100;
  simgen::SbmSpec sbm;                 // spipoll mode
  simgen::ObservationSpec observation; // spipoll mode
  bvgae::LatentSignature generative{1, 1};
  bvgae::FairTrainConfig train;        // delta here is ignored; see below
  double delta = -1.0;                 // < 0 means "n1" for the fair model
  baselines::AdversarialConfig adversarial;
  eval::SplitFractions fractions;
  std::uint64_t seed = 0;
  std::size_t threads = 0;             // 0 = hardware concurrency
  bool shared_network = false;         // one dataset reused across trials
  std::string input_dir;               // files mode
};

// One simulated (or loaded) trial dataset plus its split.
struct TrialData {
  bvgae::BipartiteGraph graph;
  Matrix s;
  std::optional<bvgae::PlantAssignment> plants;
  Matrix b_prime_observed;  // spipoll
  Matrix b0_prime;          // spipoll ground truth (restricted)
  Matrix pi;                // spipoll ground truth probabilities
  eval::EdgeSplit split;
  std::optional<eval::AggregateSplit> aggregate;
};

TrialData make_trial_data(const ExperimentConfig& cfg, std::size_t trial);

struct TrialOutcome {
  eval::TrialMetrics metrics;
  bvgae::TrainResult result;
};

TrialOutcome run_trial(const ExperimentConfig& cfg, const TrialData& data, std::size_t trial);

// Full experiment: trials dispatched to a worker pool, reduced in order.
eval::ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Deterministic parallel map: fn(i) for i in [0, n), `threads` workers.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

// --- CLI commands (library form, shared with the acceptance suite) ---------

struct CommandIo {
  std::string out_dir = ".";
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
};

int cmd_simulate(const nlohmann::json& config, const CommandIo& io);
int cmd_train(const nlohmann::json& config, const CommandIo& io);
int cmd_delta_sweep(const nlohmann::json& config, const CommandIo& io);
int cmd_hsic_test(const nlohmann::json& config, const CommandIo& io);
int cmd_bench_hsic(const nlohmann::json& config, const CommandIo& io);
int cmd_pca_demo(const nlohmann::json& config, const CommandIo& io);

// PCA comparison used by cmd_pca_demo and the acceptance suite.
struct PcaDemoRow {
  double mse = 0.0;
  double hsic = 0.0;
  double p_value = 1.0;
  double cor = 0.0;
};
struct PcaDemoReport {
  std::vector<PcaDemoRow> plain, projected, penalized;
};
PcaDemoReport run_pca_demo(std::size_t trials, std::size_t n_train, std::size_t n_test,
                           const baselines::LinearAeConfig& cfg, std::uint64_t seed,
                           std::size_t threads);

// Exact-vs-RFF benchmark row (value + gradient timings and accuracy).
struct BenchRow {
  std::size_t n = 0;
  double exact_seconds = 0.0;
  double rff_seconds = 0.0;
  double rel_sq_error_null = 0.0;
  double rel_sq_error_alt = 0.0;
};
BenchRow bench_hsic_at(std::size_t n, std::size_t repetitions, std::uint64_t seed);

// Shared config-validation helper: throws ConfigError on unknown keys.
void require_keys(const nlohmann::json& config, const std::vector<std::string>& allowed);

nlohmann::json config_with_defaults(const nlohmann::json& config);
ExperimentConfig parse_experiment_config(const nlohmann::json& config);

}  // namespace fairbide::runner
