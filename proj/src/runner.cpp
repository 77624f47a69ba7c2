#include "fairbide/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <malloc.h>
#include <map>
#include <mutex>
#include <thread>

#include "fairbide/hsic.hpp"
#include "fairbide/io.hpp"
#include "fairbide/special.hpp"

namespace fairbide::runner {

namespace fs = std::filesystem;
using nlohmann::json;

ModelKind model_from_string(const std::string& s) {
  if (s == "bvgae") return ModelKind::bvgae;
  if (s == "fair") return ModelKind::fair;
  if (s == "adv") return ModelKind::adv;
  throw ConfigError("unknown model '" + s + "' (expected bvgae|fair|adv)");
}

DataMode mode_from_string(const std::string& s) {
  if (s == "simple") return DataMode::simple;
  if (s == "simple-binary") return DataMode::simple_binary;
  if (s == "spipoll") return DataMode::spipoll;
  if (s == "files") return DataMode::files;
  throw ConfigError("unknown mode '" + s + "' (expected simple|simple-binary|spipoll|files)");
}

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::bvgae: return "bvgae";
    case ModelKind::fair: return "fair";
    case ModelKind::adv: return "adv";
  }
  return "?";
}

std::string to_string(DataMode m) {
  switch (m) {
    case DataMode::simple: return "simple";
    case DataMode::simple_binary: return "simple-binary";
    case DataMode::spipoll: return "spipoll";
    case DataMode::files: return "files";
  }
  return "?";
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// --- stream id layout --------------------------------------------------------

namespace {

constexpr std::uint64_t kTrialSpan = 1'000'000;

std::uint64_t trial_base(const ExperimentConfig& cfg, std::size_t trial) {
  return (static_cast<std::uint64_t>(trial) + 1) * kTrialSpan;
}

std::uint64_t data_stream(const ExperimentConfig& cfg, std::size_t trial) {
  return cfg.shared_network ? 777 : trial_base(cfg, trial);
}

}  // namespace

// --- dataset construction ----------------------------------------------------

namespace {

TrialData load_files_dataset(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.input_dir;
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw DataError("files mode: missing manifest.json in " + cfg.input_dir);
  json manifest = json::parse(mf);
  const std::string mode = manifest.value("mode", "");
  TrialData data;
  if (mode == "simple" || mode == "simple-binary") {
    const auto rows = io::read_csv((dir / "edges.csv").string());
    if (rows.empty() || rows[0] != std::vector<std::string>{"row", "col"})
      throw DataError("files mode: edges.csv must have header row,col");
    const std::size_t n1 = manifest.at("n1").get<std::size_t>();
    const std::size_t n2 = manifest.at("n2").get<std::size_t>();
    data.graph.b = Matrix(n1, n2, 0.0);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const std::size_t i = std::stoul(rows[r].at(0));
      const std::size_t j = std::stoul(rows[r].at(1));
      if (i >= n1 || j >= n2) throw DataError("files mode: edge index out of range");
      data.graph.b(i, j) = 1.0;
    }
    const auto prot = io::read_csv((dir / "protected.csv").string());
    if (prot.size() != n1 + 1) throw DataError("files mode: protected.csv row count mismatch");
    data.s = Matrix(n1, 1);
    for (std::size_t r = 1; r < prot.size(); ++r)
      data.s(std::stoul(prot[r].at(0)), 0) = std::stod(prot[r].at(1));
  } else if (mode == "spipoll") {
    io::IngestResult ing = io::ingest((dir / "edges.csv").string());
    data.graph = ing.graph;
    data.s = ing.s;
    data.plants = ing.plants;
    data.b_prime_observed = bvgae::aggregate_plants(ing.graph.b, ing.plants.p);
    const fs::path truth_path = dir / "truth.csv";
    if (fs::exists(truth_path)) {
      std::map<std::string, std::size_t> genus_index, taxon_index;
      for (std::size_t k = 0; k < ing.plant_genera.size(); ++k)
        genus_index[ing.plant_genera[k]] = k;
      for (std::size_t j = 0; j < ing.insect_taxa.size(); ++j)
        taxon_index[ing.insect_taxa[j]] = j;
      data.b0_prime = Matrix(ing.plant_genera.size(), ing.insect_taxa.size(), 0.0);
      data.pi = Matrix(ing.plant_genera.size(), ing.insect_taxa.size(), 0.0);
      const auto rows = io::read_csv(truth_path.string());
      for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto gi = genus_index.find(rows[r].at(0));
        const auto ti = taxon_index.find(rows[r].at(1));
        if (gi == genus_index.end() || ti == taxon_index.end()) continue;  // unseen taxon
        data.b0_prime(gi->second, ti->second) = std::stod(rows[r].at(2));
        data.pi(gi->second, ti->second) = std::stod(rows[r].at(3));
      }
    }
  } else {
    throw DataError("files mode: manifest mode '" + mode + "' not loadable");
  }
  return data;
}

}  // namespace

TrialData make_trial_data(const ExperimentConfig& cfg, std::size_t trial) {
  TrialData data;
  switch (cfg.mode) {
    case DataMode::simple:
    case DataMode::simple_binary: {
      RngStream rng(cfg.seed, data_stream(cfg, trial));
      simgen::SimpleSimData sim =
          cfg.mode == DataMode::simple
              ? simgen::gen_simple(cfg.n1, cfg.n2, cfg.generative, rng)
              : simgen::gen_simple_binary(cfg.n1, cfg.n2, cfg.generative, rng);
      data.graph = std::move(sim.graph);
      data.s = std::move(sim.s);
      break;
    }
    case DataMode::spipoll: {
      RngStream rng(cfg.seed, data_stream(cfg, trial));
      simgen::GroundTruth truth = simgen::gen_sbm(cfg.sbm, rng);
      simgen::ObservedData obs = simgen::gen_observations(truth, cfg.observation, rng);
      simgen::PreparedSpipoll prep = simgen::prepare_training(truth, obs);
      data.graph = std::move(prep.graph);
      data.s = std::move(prep.s);
      data.plants = std::move(prep.plants);
      data.b_prime_observed = std::move(prep.b_prime_observed);
      data.b0_prime = std::move(prep.b0_prime);
      data.pi = std::move(prep.pi);
      break;
    }
    case DataMode::files:
      data = load_files_dataset(cfg);
      break;
  }
  RngStream split_rng(cfg.seed, trial_base(cfg, trial) + 10);
  data.split = eval::split_edges(data.graph.b, cfg.fractions, split_rng);
  if (data.plants)
    data.aggregate = eval::build_aggregate_split(data.split, data.graph.b, data.plants->p);
  return data;
}

// --- per-trial training and evaluation ----------------------------------------

namespace {

double auc_on_pairs(const Matrix& probs, const std::vector<eval::Pair>& edges,
                    const std::vector<eval::Pair>& nonedges) {
  std::vector<double> scores, labels;
  scores.reserve(edges.size() + nonedges.size());
  for (const auto& [i, j] : edges) {
    scores.push_back(probs(i, j));
    labels.push_back(1.0);
  }
  for (const auto& [i, j] : nonedges) {
    scores.push_back(probs(i, j));
    labels.push_back(0.0);
  }
  return eval::auc(scores, labels);
}

}  // namespace

TrialOutcome run_trial(const ExperimentConfig& cfg, const TrialData& data, std::size_t trial) {
  bvgae::FairTrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  // models share a trial's streams so same-seed comparisons are paired and
  // the fair path at delta 0 reproduces the plain model exactly
  tc.stream_base = trial_base(cfg, trial) + 100'000;
  switch (cfg.model) {
    case ModelKind::bvgae:
      tc.delta = 0.0;
      break;
    case ModelKind::fair:
      tc.delta = cfg.delta < 0.0 ? static_cast<double>(data.graph.n1()) : cfg.delta;
      break;
    case ModelKind::adv:
      tc.delta = 0.0;
      break;
  }

  bvgae::AggregateSupervision agg;
  const bvgae::AggregateSupervision* agg_ptr = nullptr;
  if (data.plants && data.aggregate) {
    agg.plants = &*data.plants;
    agg.split = &*data.aggregate;
    agg.b_prime_observed = data.b_prime_observed;
    agg_ptr = &agg;
  }

  TrialOutcome out;
  if (cfg.model == ModelKind::adv) {
    out.result = baselines::train_adversarial(data.graph, data.split, tc, cfg.adversarial,
                                              data.s, agg_ptr);
  } else {
    out.result = bvgae::train(data.graph, data.split, tc, &data.s, agg_ptr);
  }

  const bvgae::LatentState& latent = out.result.latent;
  Matrix probs = bvgae::decode(latent.mu1, latent.mu2, tc.signature);
  out.metrics.auc_B = auc_on_pairs(probs, data.split.test_edges, data.split.test_nonedges);

  const Matrix mu_std = standardize_columns(latent.mu1, 1e-12);
  const Matrix s_std = standardize_columns(data.s, 1e-12);
  hsic::HsicTestResult ht = hsic::hsic_gamma_test(mu_std, s_std);
  out.metrics.hsic = ht.hsic;
  out.metrics.p_value = ht.p_value;
  out.metrics.cor = eval::correlation_norm(latent.mu1, data.s);

  if (data.plants && data.aggregate && data.b0_prime.size() > 0) {
    const Matrix& p = data.plants->p;
    Matrix b_hat_prime = bvgae::predict_plant_matrix(probs, p);
    RngStream eval_rng(cfg.seed, trial_base(cfg, trial) + 20);
    bvgae::PlantLatents pl = bvgae::sample_plant_latents(latent.mu1, p, eval_rng);
    Matrix b_tilde_prime = bvgae::decode(pl.z, latent.mu2, tc.signature);

    std::vector<double> s_hat, s_tilde, labels, pi_vals;
    for (const auto& [k, j] : data.aggregate->test_pairs) {
      if (!pl.present[k]) continue;
      s_hat.push_back(b_hat_prime(k, j));
      s_tilde.push_back(b_tilde_prime(k, j));
      labels.push_back(data.b0_prime(k, j));
      pi_vals.push_back(data.pi(k, j));
    }
    if (!labels.empty()) {
      out.metrics.auc_Bhat_prime = eval::auc(s_hat, labels);
      out.metrics.auc_Btilde_prime = eval::auc(s_tilde, labels);
      out.metrics.cor_sp = eval::spearman(s_hat, pi_vals);
    }
  }
  return out;
}

eval::ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  // keep large freed blocks reusable instead of returning them to the kernel
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
  if (cfg.trials == 0) throw ConfigError("run_experiment: trials must be >= 1");
  std::vector<eval::TrialMetrics> metrics(cfg.trials);
  parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
    TrialData data = make_trial_data(cfg, t);
    metrics[t] = run_trial(cfg, data, t).metrics;
  });
  return eval::aggregate_trials(std::move(metrics));
}

// --- configuration parsing ----------------------------------------------------

void require_keys(const json& config, const std::vector<std::string>& allowed) {
  for (auto it = config.begin(); it != config.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown config key '" + it.key() + "'");
  }
}

namespace {

const std::vector<std::string> kExperimentKeys{
    "mode",        "model",      "trials",   "n1",     "n2",       "seed",
    "delta",       "iterations", "restarts", "learning_rate",      "d_plus",
    "d_minus",     "hidden",     "rff_features",       "threads",  "input",
    "shared_network",            "train_fraction",     "validation_fraction",
    "test_fraction",             "plants",   "insects", "observers",
    "experience_mean",           "adv_lambda",          "generative_d_plus",
    "generative_d_minus"};

}  // namespace

ExperimentConfig parse_experiment_config(const json& config) {
  require_keys(config, kExperimentKeys);
  ExperimentConfig cfg;
  cfg.mode = mode_from_string(config.value("mode", "simple"));
  cfg.model = model_from_string(config.value("model", "bvgae"));
  cfg.trials = config.value("trials", 10);
  cfg.n1 = config.value("n1", 1000);
  cfg.n2 = config.value("n2", 100);
  cfg.seed = config.value("seed", 0);
  cfg.threads = config.value("threads", 0);
  cfg.shared_network = config.value("shared_network", false);
  cfg.input_dir = config.value("input", "");
  if (cfg.mode == DataMode::files && cfg.input_dir.empty())
    throw ConfigError("files mode requires 'input'");

  if (config.contains("delta")) {
    const auto& d = config.at("delta");
    if (d.is_string()) {
      if (d.get<std::string>() != "n1")
        throw ConfigError("delta must be a number or \"n1\"");
      cfg.delta = -1.0;
    } else {
      cfg.delta = d.get<double>();
      if (cfg.delta < 0.0) throw ConfigError("delta must be nonnegative");
    }
  }

  cfg.train.iterations = config.value("iterations", 1000);
  cfg.train.restarts = config.value("restarts", 10);
  cfg.train.learning_rate = config.value("learning_rate", 0.01);
  cfg.train.signature.d_plus = config.value("d_plus", 2);
  cfg.train.signature.d_minus = config.value("d_minus", 2);
  cfg.train.hidden = config.value("hidden", 32);
  cfg.train.rff_features = config.value("rff_features", 100);
  cfg.generative.d_plus = config.value("generative_d_plus", 1);
  cfg.generative.d_minus = config.value("generative_d_minus", 1);
  cfg.fractions.train = config.value("train_fraction", 0.70);
  cfg.fractions.validation = config.value("validation_fraction", 0.20);
  cfg.fractions.test = config.value("test_fraction", 0.10);
  cfg.sbm.plants = config.value("plants", 83);
  cfg.sbm.insects = config.value("insects", 306);
  cfg.observation.observers = config.value("observers", 3000);
  cfg.observation.experience_mean = config.value("experience_mean", 21.0);
  cfg.adversarial.lambda = config.value("adv_lambda", 1.0);
  return cfg;
}

// --- commands -----------------------------------------------------------------

namespace {

void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& input_files,
                    const std::vector<std::string>& output_files,
                    const json& extra = json::object()) {
  json m = extra;
  m["command"] = command;
  m["seed"] = seed;
  m["config"] = config;
  json inputs = json::object();
  for (const auto& f : input_files)
    if (fs::exists(f)) inputs[f] = io::file_hash_hex(f);
  m["input_hashes"] = inputs;
  json outputs = json::object();
  for (const auto& f : output_files) {
    const fs::path p = out_dir / f;
    if (fs::exists(p)) outputs[f] = io::file_hash_hex(p.string());
  }
  m["output_hashes"] = outputs;
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw DataError("cannot write manifest.json in " + out_dir.string());
  out << m.dump(2) << "\n";
}

std::uint64_t effective_seed(const json& config, const CommandIo& io_opts) {
  if (io_opts.has_seed_override) return io_opts.seed_override;
  return config.value("seed", 0);
}

std::string format_id(const char* prefix, std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, value);
  return buf;
}

}  // namespace

int cmd_simulate(const json& config_in, const CommandIo& io_opts) {
  json config = config_in;
  require_keys(config, {"mode", "n1", "n2", "seed", "plants", "insects", "observers",
                        "experience_mean", "generative_d_plus", "generative_d_minus"});
  const std::string mode = config.value("mode", "simple");
  const std::uint64_t seed = effective_seed(config, io_opts);
  config["seed"] = seed;
  const fs::path out_dir = io_opts.out_dir;
  fs::create_directories(out_dir);

  if (mode == "simple" || mode == "simple-binary") {
    const std::size_t n1 = config.value("n1", 1000);
    const std::size_t n2 = config.value("n2", 100);
    bvgae::LatentSignature gen{config.value("generative_d_plus", 1),
                               config.value("generative_d_minus", 1)};
    RngStream rng(seed, 777);
    simgen::SimpleSimData sim = mode == "simple" ? simgen::gen_simple(n1, n2, gen, rng)
                                                 : simgen::gen_simple_binary(n1, n2, gen, rng);
    std::vector<std::vector<std::string>> edges;
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        if (sim.graph.b(i, j) != 0.0)
          edges.push_back({std::to_string(i), std::to_string(j)});
    io::write_csv((out_dir / "edges.csv").string(), {"row", "col"}, edges);

    std::vector<std::vector<std::string>> prot;
    char buf[32];
    for (std::size_t i = 0; i < n1; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", sim.s(i, 0));
      prot.push_back({std::to_string(i), buf});
    }
    io::write_csv((out_dir / "protected.csv").string(), {"index", "value"}, prot);

    std::vector<std::vector<std::string>> feats;
    auto put_latents = [&](const Matrix& z, int side) {
      for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t c = 0; c < z.cols(); ++c) {
          std::snprintf(buf, sizeof(buf), "%.17g", z(i, c));
          feats.push_back({std::to_string(side), std::to_string(i), std::to_string(c), buf});
        }
    };
    put_latents(sim.z1_true, 1);
    put_latents(sim.z2_true, 2);
    io::write_csv((out_dir / "features.csv").string(), {"side", "index", "dim", "value"}, feats);

    write_manifest(out_dir, "simulate", config, seed, {},
                   {"edges.csv", "protected.csv", "features.csv"},
                   json{{"mode", mode}, {"n1", n1}, {"n2", n2}});
    return 0;
  }

  if (mode == "spipoll") {
    simgen::SbmSpec sbm;
    sbm.plants = config.value("plants", 83);
    sbm.insects = config.value("insects", 306);
    simgen::ObservationSpec obs_spec;
    obs_spec.observers = config.value("observers", 3000);
    obs_spec.experience_mean = config.value("experience_mean", 21.0);
    RngStream rng(seed, 777);
    simgen::GroundTruth truth = simgen::gen_sbm(sbm, rng);
    simgen::ObservedData obs = simgen::gen_observations(truth, obs_spec, rng);
    simgen::PreparedSpipoll prep = simgen::prepare_training(truth, obs);

    // interaction file in the ingestion schema; session order = kept order,
    // taxon/genus names zero-padded so the lexicographic ingest order matches
    const auto plant_of = prep.plants.plant_of_session();
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < prep.graph.b.rows(); ++r) {
      for (std::size_t c = 0; c < prep.graph.b.cols(); ++c) {
        if (prep.graph.b(r, c) == 0.0) continue;
        rows.push_back({format_id("s", r, 5), format_id("i", prep.kept_insects[c], 4),
                        format_id("p", plant_of[r], 3), format_id("u", r, 5),
                        std::to_string(prep.experience_kept[r] - 1), "", "2020-06-15"});
      }
    }
    io::write_csv((out_dir / "edges.csv").string(),
                  {"session_id", "insect_taxon", "plant_genus", "user_id",
                   "prior_session_count", "temperature", "date"},
                  rows);

    std::vector<std::vector<std::string>> truth_rows;
    char buf[32];
    for (std::size_t k = 0; k < prep.b0_prime.rows(); ++k)
      for (std::size_t c = 0; c < prep.b0_prime.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", prep.pi(k, c));
        truth_rows.push_back({format_id("p", k, 3), format_id("i", prep.kept_insects[c], 4),
                              prep.b0_prime(k, c) != 0.0 ? "1" : "0", buf,
                              std::to_string(truth.plant_group[k]),
                              std::to_string(truth.insect_group[prep.kept_insects[c]]),
                              truth.hard[prep.kept_insects[c]] ? "1" : "0"});
      }
    io::write_csv((out_dir / "truth.csv").string(),
                  {"plant_genus", "insect_taxon", "b0", "pi", "plant_group", "insect_group",
                   "insect_hard"},
                  truth_rows);

    std::vector<std::vector<std::string>> prot;
    for (std::size_t r = 0; r < prep.s.rows(); ++r) {
      std::snprintf(buf, sizeof(buf), "%.17g", prep.s(r, 0));
      prot.push_back({std::to_string(r), buf, std::to_string(prep.experience_kept[r])});
    }
    io::write_csv((out_dir / "protected.csv").string(), {"index", "value", "experience"}, prot);

    // session covariates: the one-hot plant assignment in sparse form
    std::vector<std::vector<std::string>> feats;
    for (std::size_t r = 0; r < prep.plants.p.rows(); ++r)
      feats.push_back({std::to_string(r), format_id("p", plant_of[r], 3)});
    io::write_csv((out_dir / "features.csv").string(), {"session", "plant_genus"}, feats);

    write_manifest(out_dir, "simulate", config, seed, {},
                   {"edges.csv", "truth.csv", "protected.csv", "features.csv"},
                   json{{"mode", "spipoll"},
                        {"n1", prep.graph.b.rows()},
                        {"n2", prep.graph.b.cols()},
                        {"dropped_sessions", prep.dropped_sessions},
                        {"dropped_insects", prep.dropped_insects}});
    return 0;
  }

  throw ConfigError("simulate: unknown mode '" + mode + "'");
}

int cmd_train(const json& config_in, const CommandIo& io_opts) {
  json config = config_in;
  const std::uint64_t seed = effective_seed(config, io_opts);
  config["seed"] = seed;
  ExperimentConfig cfg = parse_experiment_config(config);
  cfg.seed = seed;

  const fs::path out_dir = io_opts.out_dir;
  fs::create_directories(out_dir);

  // train every trial, keep per-trial metrics and the best-validation model
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
  std::vector<eval::TrialMetrics> metrics(cfg.trials);
  std::vector<double> val_auc(cfg.trials, -1.0);
  std::vector<bvgae::EncoderParams> params(cfg.trials);
  parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
    TrialData data = make_trial_data(cfg, t);
    TrialOutcome outcome = run_trial(cfg, data, t);
    metrics[t] = outcome.metrics;
    val_auc[t] = outcome.result.validation_auc;
    params[t] = std::move(outcome.result.params);
  });
  eval::ExperimentReport report = eval::aggregate_trials(metrics);

  io::write_summary_json((out_dir / "summary.json").string(), report);
  io::write_trials_csv((out_dir / "trials.csv").string(), report);

  std::size_t best = 0;
  for (std::size_t t = 1; t < cfg.trials; ++t)
    if (val_auc[t] > val_auc[best]) best = t;
  const std::string config_hash = [&] {
    const std::string dump = config.dump();
    return io::content_hash_hex(dump.data(), dump.size());
  }();
  io::write_checkpoint((out_dir / "model.ckpt").string(), params[best], cfg.train.signature,
                       config_hash);

  std::vector<std::string> inputs;
  if (cfg.mode == DataMode::files) {
    for (const char* f : {"edges.csv", "protected.csv", "truth.csv", "manifest.json"}) {
      const fs::path p = fs::path(cfg.input_dir) / f;
      if (fs::exists(p)) inputs.push_back(p.string());
    }
  }
  write_manifest(out_dir, "train", config, seed, inputs,
                 {"summary.json", "trials.csv", "model.ckpt"});
  return 0;
}

int cmd_delta_sweep(const json& config_in, const CommandIo& io_opts) {
  json config = config_in;
  if (!config.contains("deltas") || !config.at("deltas").is_array())
    throw ConfigError("delta-sweep requires a 'deltas' array");
  std::vector<double> deltas;
  for (const auto& d : config.at("deltas")) deltas.push_back(d.get<double>());
  json base = config;
  base.erase("deltas");
  const std::uint64_t seed = effective_seed(config, io_opts);
  base["seed"] = seed;
  base["shared_network"] = true;  // one network across the sweep

  const fs::path out_dir = io_opts.out_dir;
  fs::create_directories(out_dir);

  std::vector<std::vector<std::string>> rows;
  char buf[64];
  json summaries = json::object();
  for (const double delta : deltas) {
    json cfg_json = base;
    cfg_json["model"] = delta == 0.0 ? "bvgae" : "fair";
    cfg_json["delta"] = delta;
    ExperimentConfig cfg = parse_experiment_config(cfg_json);
    cfg.seed = seed;
    eval::ExperimentReport report = run_experiment(cfg);
    const auto& auc = report.summary.at("auc_B");
    const auto& hs = report.summary.at("hsic");
    const auto& cor = report.summary.at("cor");
    std::vector<std::string> row;
    std::snprintf(buf, sizeof(buf), "%g", delta);
    row.emplace_back(buf);
    for (double v : {auc.mean, auc.std, hs.mean, cor.mean}) {
      std::snprintf(buf, sizeof(buf), "%.10g", v);
      row.emplace_back(buf);
    }
    row.push_back(std::to_string(report.rejections));
    row.push_back(std::to_string(report.trials.size()));
    rows.push_back(std::move(row));
    std::snprintf(buf, sizeof(buf), "%g", delta);
    summaries[buf] = {{"auc_mean", auc.mean},
                      {"auc_std", auc.std},
                      {"hsic_mean", hs.mean},
                      {"cor_mean", cor.mean},
                      {"rejections", report.rejections}};
    std::fprintf(stderr, "[delta-sweep] delta=%g auc=%.3f rejections=%zu/%zu\n", delta,
                 auc.mean, report.rejections, report.trials.size());
  }
  io::write_csv((out_dir / "sweep.csv").string(),
                {"delta", "auc_mean", "auc_std", "hsic_mean", "cor_mean", "rejections",
                 "trials"},
                rows);
  std::ofstream out(out_dir / "summary.json");
  out << summaries.dump(2) << "\n";
  write_manifest(out_dir, "delta-sweep", config, seed, {}, {"sweep.csv", "summary.json"});
  return 0;
}

int cmd_hsic_test(const json& config_in, const CommandIo& io_opts) {
  json config = config_in;
  require_keys(config, {"x", "y", "sigma_x", "sigma_y", "mode", "rff_features", "seed"});
  if (!config.contains("x") || !config.contains("y"))
    throw ConfigError("hsic-test requires 'x' and 'y' file paths");
  const std::string mode = config.value("mode", "exact");
  const std::uint64_t seed = effective_seed(config, io_opts);
  Matrix x = io::read_matrix_csv(config.at("x").get<std::string>());
  Matrix y = io::read_matrix_csv(config.at("y").get<std::string>());
  if (x.rows() != y.rows()) throw DataError("hsic-test: row count mismatch");
  hsic::KernelConfig kc{config.value("sigma_x", 1.0), config.value("sigma_y", 1.0)};

  hsic::HsicTestResult r = hsic::hsic_gamma_test(x, y, kc);
  double statistic = r.statistic;
  if (mode == "rff") {
    const std::size_t h = config.value("rff_features", 100);
    RngStream rng(seed, 99);
    hsic::RffMap mx = hsic::make_rff_map(h, x.cols(), kc.sigma_x, rng);
    hsic::RffMap my = hsic::make_rff_map(h, y.cols(), kc.sigma_y, rng);
    const double value = hsic::rff_hsic(x, y, mx, my);
    statistic = static_cast<double>(x.rows()) * value;
    // gamma moments still come from the exact grams
    r.p_value = 1.0 - gamma_cdf(std::max(statistic, 0.0), r.alpha, r.beta);
    r.hsic = value;
  } else if (mode != "exact") {
    throw ConfigError("hsic-test: mode must be exact or rff");
  }

  json out{{"mode", mode},       {"n", x.rows()},     {"statistic", statistic},
           {"alpha", r.alpha},   {"beta", r.beta},    {"p_value", r.p_value},
           {"hsic", r.hsic}};
  const fs::path out_dir = io_opts.out_dir;
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "hsic_test.json");
  f << out.dump(2) << "\n";
  std::printf("%s\n", out.dump(2).c_str());
  write_manifest(out_dir, "hsic-test", config, seed,
                 {config.at("x").get<std::string>(), config.at("y").get<std::string>()},
                 {"hsic_test.json"});
  return 0;
}

BenchRow bench_hsic_at(std::size_t n, std::size_t repetitions, std::uint64_t seed) {
  if (n < 16) throw ConfigError("bench-hsic: n must be >= 16");
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
  const std::size_t d = 4;
  const std::size_t h = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  BenchRow row;
  row.n = n;
  using clock = std::chrono::steady_clock;

  // The protected side is fixed once per hypothesis, mirroring training where
  // only the embedding moves: under the null an independent draw, under the
  // alternative three times the initial sample. Its gram and feature pieces
  // are prepared outside the timed region.
  RngStream fixed_rng(seed, 4999);
  const Matrix x0 = draw_normal(n, d, fixed_rng);
  const Matrix s_null = draw_normal(n, d, fixed_rng);
  const Matrix s_alt = scale(x0, 3.0);
  const Matrix l_null = hsic::gram(s_null, 1.0);
  const Matrix l_alt = hsic::gram(s_alt, 1.0);

  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    RngStream rng(seed, 5000 + rep);
    const Matrix x = draw_normal(n, d, rng);
    hsic::RffMap map_x = hsic::make_rff_map(h, d, 1.0, rng);
    hsic::RffMap map_s = hsic::make_rff_map(h, d, 1.0, rng);

    for (int alt = 0; alt < 2; ++alt) {
      const Matrix& s = alt ? s_alt : s_null;
      const Matrix& l = alt ? l_alt : l_null;
      const Matrix psi_s = hsic::rff_features(s, map_s);

      const auto t0 = clock::now();
      hsic::ExactHsicGrad exact = hsic::hsic_biased_with_grad(x, l, 1.0);
      const auto t1 = clock::now();

      ad::Tape tape;
      ad::Var xv = tape.parameter(x);
      ad::Var psi_x = hsic::rff_features_node(tape, xv, map_x);
      ad::Var value = hsic::rff_hsic_node(tape, psi_x, tape.constant(psi_s));
      tape.backward(value);
      const double rff_value = value.value()(0, 0);
      const auto t2 = clock::now();

      const double exact_s = std::chrono::duration<double>(t1 - t0).count();
      const double rff_s = std::chrono::duration<double>(t2 - t1).count();
      const double rel = (rff_value - exact.value) / exact.value;
      row.exact_seconds += exact_s / (2.0 * repetitions);
      row.rff_seconds += rff_s / (2.0 * repetitions);
      if (alt)
        row.rel_sq_error_alt += rel * rel / repetitions;
      else
        row.rel_sq_error_null += rel * rel / repetitions;
    }
  }
  return row;
}

int cmd_bench_hsic(const json& config_in, const CommandIo& io_opts) {
  json config = config_in;
  require_keys(config, {"sizes", "repetitions", "seed"});
  if (!config.contains("sizes") || !config.at("sizes").is_array())
    throw ConfigError("bench-hsic requires a 'sizes' array");
  const std::size_t reps = config.value("repetitions", 3);
  const std::uint64_t seed = effective_seed(config, io_opts);

  const fs::path out_dir = io_opts.out_dir;
  fs::create_directories(out_dir);
  std::vector<std::vector<std::string>> rows;
  char buf[64];
  for (const auto& nv : config.at("sizes")) {
    const std::size_t n = nv.get<std::size_t>();
    BenchRow r = bench_hsic_at(n, reps, seed);
    std::vector<std::string> row{std::to_string(n)};
    for (double v : {r.exact_seconds, r.rff_seconds, r.rel_sq_error_null, r.rel_sq_error_alt}) {
      std::snprintf(buf, sizeof(buf), "%.6g", v);
      row.emplace_back(buf);
    }
    rows.push_back(std::move(row));
    std::printf("n=%zu exact %.3fs rff %.4fs rel_sq_err null %.3g alt %.3g\n", n,
                r.exact_seconds, r.rff_seconds, r.rel_sq_error_null, r.rel_sq_error_alt);
  }
  io::write_csv((out_dir / "bench.csv").string(),
                {"n", "exact_seconds", "rff_seconds", "rel_sq_error_null", "rel_sq_error_alt"},
                rows);
  write_manifest(out_dir, "bench-hsic", config, seed, {}, {"bench.csv"});
  return 0;
}

PcaDemoReport run_pca_demo(std::size_t trials, std::size_t n_train, std::size_t n_test,
                           const baselines::LinearAeConfig& cfg_in, std::uint64_t seed,
                           std::size_t threads) {
  PcaDemoReport report;
  report.plain.resize(trials);
  report.projected.resize(trials);
  report.penalized.resize(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    RngStream rng(seed, (t + 1) * 1000);
    Matrix k = scale(draw_normal(2, 5, rng), 3.0);
    auto gen = [&](std::size_t n) {
      Matrix s = draw_normal(n, 1, rng);
      Matrix tt = draw_normal(n, 1, rng);
      Matrix z(n, 2);
      for (std::size_t i = 0; i < n; ++i) {
        z(i, 0) = s(i, 0);
        z(i, 1) = tt(i, 0);
      }
      return std::pair<Matrix, Matrix>(matmul(z, k), s);
    };
    auto [x_train, s_train] = gen(n_train);
    auto [x_test, s_test] = gen(n_test);

    baselines::LinearAeConfig cfg = cfg_in;
    cfg.seed = seed;
    cfg.stream_base = (t + 1) * 100'000;

    auto evaluate = [&](baselines::LinearVariant variant) {
      baselines::LinearAeConfig c = cfg;
      c.stream_base += static_cast<std::uint64_t>(variant) * 10'000;
      baselines::LinearAeResult model =
          baselines::train_linear_autoencoder(x_train, variant, s_train, c);
      Matrix recon = baselines::linear_reconstruct(x_test, s_test, model);
      Matrix xc = x_test;
      Matrix m = col_mean(x_test);
      for (std::size_t i = 0; i < xc.rows(); ++i)
        for (std::size_t j = 0; j < xc.cols(); ++j) xc(i, j) -= m.data()[j];
      PcaDemoRow row;
      row.mse = frobenius_sq(sub(recon, xc)) / static_cast<double>(xc.size());
      Matrix latent = baselines::linear_encode(x_test, s_test, model);
      hsic::HsicTestResult ht = hsic::hsic_gamma_test(
          standardize_columns(latent, 1e-12), standardize_columns(s_test, 1e-12));
      row.hsic = ht.hsic;
      row.p_value = ht.p_value;
      row.cor = eval::correlation_norm(latent, s_test);
      return row;
    };
    report.plain[t] = evaluate(baselines::LinearVariant::plain);
    report.projected[t] = evaluate(baselines::LinearVariant::projected);
    report.penalized[t] = evaluate(baselines::LinearVariant::hsic);
  });
  return report;
}

int cmd_pca_demo(const json& config_in, const CommandIo& io_opts) {
  json config = config_in;
  require_keys(config, {"trials", "n_train", "n_test", "delta", "iterations", "restarts",
                        "learning_rate", "rff_features", "seed", "threads"});
  const std::size_t trials = config.value("trials", 20);
  const std::size_t n_train = config.value("n_train", 1000);
  const std::size_t n_test = config.value("n_test", 200);
  const std::uint64_t seed = effective_seed(config, io_opts);
  baselines::LinearAeConfig cfg;
  cfg.delta = config.value("delta", 1e5);
  cfg.iterations = config.value("iterations", 200);
  cfg.restarts = config.value("restarts", 10);
  cfg.learning_rate = config.value("learning_rate", 0.01);
  cfg.rff_features = config.value("rff_features", 100);

  PcaDemoReport report =
      run_pca_demo(trials, n_train, n_test, cfg, seed, config.value("threads", 0));

  const fs::path out_dir = io_opts.out_dir;
  fs::create_directories(out_dir);
  std::vector<std::vector<std::string>> rows;
  char buf[64];
  auto emit = [&](const char* name, const std::vector<PcaDemoRow>& v) {
    double mse = 0, hs = 0, cor = 0;
    std::size_t rej = 0;
    for (const auto& r : v) {
      mse += r.mse / v.size();
      hs += r.hsic / v.size();
      cor += r.cor / v.size();
      if (r.p_value < 0.05) rej++;
    }
    std::vector<std::string> row{name};
    for (double x : {mse, hs, cor}) {
      std::snprintf(buf, sizeof(buf), "%.6g", x);
      row.emplace_back(buf);
    }
    row.push_back(std::to_string(rej));
    row.push_back(std::to_string(v.size()));
    rows.push_back(std::move(row));
    std::printf("%-10s mse %8.4g hsic %.3g cor %.3f rejections %zu/%zu\n", name, mse, hs, cor,
                rej, v.size());
  };
  emit("plain", report.plain);
  emit("projected", report.projected);
  emit("hsic", report.penalized);
  io::write_csv((out_dir / "pca_demo.csv").string(),
                {"variant", "mse_mean", "hsic_mean", "cor_mean", "rejections", "trials"}, rows);
  write_manifest(out_dir, "pca-demo", config, seed, {}, {"pca_demo.csv"});
  return 0;
}

}  // namespace fairbide::runner
