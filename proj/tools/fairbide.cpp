#include <cstdio>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairbide/errors.hpp"
#include "fairbide/runner.hpp"

namespace {

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw fairbide::DataError("cannot open config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw fairbide::ConfigError(std::string("config parse error: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairbide: debiased bipartite network embeddings and their evaluation harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON configuration file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  CLI::App* train = app.add_subcommand("train", "train a model over repeated trials");
  CLI::App* sweep = app.add_subcommand("delta-sweep", "trade-off curve over the penalty weight");
  CLI::App* hsic_test = app.add_subcommand("hsic-test", "independence test between two samples");
  CLI::App* bench = app.add_subcommand("bench-hsic", "exact-vs-feature-map timing benchmark");
  CLI::App* pca = app.add_subcommand("pca-demo", "linear embedding comparison");
  for (CLI::App* c : {simulate, train, sweep, hsic_test, bench, pca}) add_common(c);

  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json config = load_config(config_path);
    fairbide::runner::CommandIo io;
    io.out_dir = out_dir;
    io.seed_override = seed;
    io.has_seed_override = seed_set;
    if (simulate->parsed()) return fairbide::runner::cmd_simulate(config, io);
    if (train->parsed()) return fairbide::runner::cmd_train(config, io);
    if (sweep->parsed()) return fairbide::runner::cmd_delta_sweep(config, io);
    if (hsic_test->parsed()) return fairbide::runner::cmd_hsic_test(config, io);
    if (bench->parsed()) return fairbide::runner::cmd_bench_hsic(config, io);
    if (pca->parsed()) return fairbide::runner::cmd_pca_demo(config, io);
  } catch (const fairbide::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const fairbide::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const fairbide::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
