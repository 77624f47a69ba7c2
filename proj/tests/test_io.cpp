#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fairbide/io.hpp"
#include "fairbide/runner.hpp"
#include "fairbide/simgen.hpp"

using namespace fairbide;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fairbide_test_" + std::to_string(RngStream(
                                  std::chrono::steady_clock::now().time_since_epoch().count(),
                                  0).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("ingest: small fixture builds the stated pattern") {
  TempDir dir;
  const fs::path f = dir.path / "edges.csv";
  write_file(f,
             "session_id,insect_taxon,plant_genus,user_id,prior_session_count,temperature,date\n"
             "sA,bee,rose,u1,0,,2020-01-01\n"
             "sA,fly,rose,u1,0,,2020-01-01\n"
             "sB,fly,daisy,u2,9,,2020-01-02\n");
  io::IngestResult r = io::ingest(f.string());
  CHECK(r.graph.b.rows() == 2);
  CHECK(r.graph.b.cols() == 2);
  // insect taxa sorted: bee=0, fly=1; session order of appearance: sA=0, sB=1
  CHECK(r.graph.b(0, 0) == 1.0);
  CHECK(r.graph.b(0, 1) == 1.0);
  CHECK(r.graph.b(1, 0) == 0.0);
  CHECK(r.graph.b(1, 1) == 1.0);
  // plant genera sorted: daisy=0, rose=1
  CHECK(r.plants.p(0, 1) == 1.0);
  CHECK(r.plants.p(1, 0) == 1.0);
  CHECK_FALSE(r.has_temperature);
  // prior counts 0 and 9 -> log10(1)=0 and log10(10)=1 before standardization;
  // standardized two-point values are -1 and +1
  CHECK(r.s(0, 0) == doctest::Approx(-1.0));
  CHECK(r.s(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("ingest: error contracts") {
  TempDir dir;
  const fs::path f = dir.path / "bad.csv";

  SUBCASE("wrong header") {
    write_file(f, "a,b,c\n1,2,3\n");
    CHECK_THROWS_AS(io::ingest(f.string()), DataError);
  }
  SUBCASE("conflicting plant names the session") {
    write_file(f,
               "session_id,insect_taxon,plant_genus,user_id,prior_session_count,temperature,date\n"
               "sA,bee,rose,u1,3,,d\n"
               "sA,fly,daisy,u1,3,,d\n");
    CHECK_THROWS_WITH_AS(io::ingest(f.string()),
                         doctest::Contains("session sA has conflicting plant_genus"), DataError);
  }
  SUBCASE("duplicate pair reports the line") {
    write_file(f,
               "session_id,insect_taxon,plant_genus,user_id,prior_session_count,temperature,date\n"
               "sA,bee,rose,u1,3,,d\n"
               "sA,bee,rose,u1,3,,d\n");
    CHECK_THROWS_WITH_AS(io::ingest(f.string()), doctest::Contains("line 3"), DataError);
  }
  SUBCASE("malformed count reports the line") {
    write_file(f,
               "session_id,insect_taxon,plant_genus,user_id,prior_session_count,temperature,date\n"
               "sA,bee,rose,u1,many,,d\n");
    CHECK_THROWS_WITH_AS(io::ingest(f.string()), doctest::Contains("line 2"), DataError);
  }
  SUBCASE("field count reports the line") {
    write_file(f,
               "session_id,insect_taxon,plant_genus,user_id,prior_session_count,temperature,date\n"
               "sA,bee,rose\n");
    CHECK_THROWS_WITH_AS(io::ingest(f.string()), doctest::Contains("line 2"), DataError);
  }
}

TEST_CASE("ingest: temperature column used when fully present") {
  TempDir dir;
  const fs::path f = dir.path / "t.csv";
  write_file(f,
             "session_id,insect_taxon,plant_genus,user_id,prior_session_count,temperature,date\n"
             "sA,bee,rose,u1,1,12.5,d\n"
             "sB,bee,rose,u2,4,30.0,d\n");
  io::IngestResult r = io::ingest(f.string());
  CHECK(r.has_temperature);
  CHECK(r.graph.x1->cols() == r.plants.p.cols() + 1);
  // standardized two-point temperature
  CHECK((*r.graph.x1)(0, r.plants.p.cols()) == doctest::Approx(-1.0));
  CHECK((*r.graph.x1)(1, r.plants.p.cols()) == doctest::Approx(1.0));
}

TEST_CASE("simulate then ingest reproduces the in-memory training objects") {
  // in-memory pipeline
  simgen::SbmSpec sbm;
  sbm.plants = 12;
  sbm.insects = 30;
  simgen::ObservationSpec ospec;
  ospec.observers = 400;
  RngStream rng(21, 777);
  simgen::GroundTruth truth = simgen::gen_sbm(sbm, rng);
  simgen::ObservedData obs = simgen::gen_observations(truth, ospec, rng);
  simgen::PreparedSpipoll prep = simgen::prepare_training(truth, obs);

  // file pipeline with the same seed
  TempDir dir;
  nlohmann::json config{{"mode", "spipoll"}, {"plants", 12}, {"insects", 30},
                        {"observers", 400}, {"seed", 21}};
  runner::CommandIo io_opts;
  io_opts.out_dir = (dir.path / "ds").string();
  CHECK(runner::cmd_simulate(config, io_opts) == 0);
  io::IngestResult ing = io::ingest((dir.path / "ds" / "edges.csv").string());

  REQUIRE(ing.graph.b.rows() == prep.graph.b.rows());
  REQUIRE(ing.graph.b.cols() == prep.graph.b.cols());
  for (std::size_t i = 0; i < prep.graph.b.size(); ++i)
    CHECK(ing.graph.b.data()[i] == prep.graph.b.data()[i]);

  // every plant had at least one kept session in this draw, so the one-hot
  // assignments align column-for-column
  REQUIRE(ing.plants.p.cols() == prep.plants.p.cols());
  for (std::size_t i = 0; i < prep.plants.p.size(); ++i)
    CHECK(ing.plants.p.data()[i] == prep.plants.p.data()[i]);

  for (std::size_t i = 0; i < prep.s.size(); ++i)
    CHECK(ing.s.data()[i] == doctest::Approx(prep.s.data()[i]).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip preserves weights and signature") {
  RngStream rng(31, 0);
  bvgae::EncoderParams p;
  p.side1.w1 = draw_normal(7, 4, rng);
  p.side1.w2_mu = draw_normal(4, 3, rng);
  p.side1.w2_sigma = draw_normal(4, 3, rng);
  p.side2.w1 = draw_normal(5, 4, rng);
  p.side2.w2_mu = draw_normal(4, 3, rng);
  p.side2.w2_sigma = draw_normal(4, 3, rng);
  TempDir dir;
  const std::string path = (dir.path / "model.ckpt").string();
  io::write_checkpoint(path, p, {2, 1}, "abc123");
  io::Checkpoint ck = io::read_checkpoint(path);
  CHECK(ck.config_hash == "abc123");
  CHECK(ck.signature.d_plus == 2);
  CHECK(ck.signature.d_minus == 1);
  CHECK(ck.params.side1.w1.rows() == 7);
  for (std::size_t i = 0; i < p.side1.w1.size(); ++i)
    CHECK(ck.params.side1.w1.data()[i] == p.side1.w1.data()[i]);
  for (std::size_t i = 0; i < p.side2.w2_sigma.size(); ++i)
    CHECK(ck.params.side2.w2_sigma.data()[i] == p.side2.w2_sigma.data()[i]);

  // refuse files without the magic header
  write_file(dir.path / "junk.ckpt", "not-a-checkpoint\n");
  CHECK_THROWS_AS(io::read_checkpoint((dir.path / "junk.ckpt").string()), DataError);
}

TEST_CASE("matrix csv round trip is bit exact") {
  RngStream rng(37, 0);
  Matrix m = draw_normal(9, 4, rng);
  TempDir dir;
  const std::string path = (dir.path / "m.csv").string();
  io::write_matrix_csv(path, m);
  Matrix back = io::read_matrix_csv(path);
  REQUIRE(back.same_shape(m));
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(back.data()[i] == m.data()[i]);
}

TEST_CASE("content hash is stable and input-sensitive") {
  const std::string a = "hello";
  const std::string b = "hellp";
  CHECK(io::content_hash_hex(a.data(), a.size()) == io::content_hash_hex(a.data(), a.size()));
  CHECK(io::content_hash_hex(a.data(), a.size()) != io::content_hash_hex(b.data(), b.size()));
}

TEST_CASE("report writers emit the fixed key roster") {
  eval::TrialMetrics t1;
  t1.auc_B = 0.7;
  t1.p_value = 0.01;
  eval::ExperimentReport report = eval::aggregate_trials({t1});
  TempDir dir;
  io::write_summary_json((dir.path / "summary.json").string(), report);
  io::write_trials_csv((dir.path / "trials.csv").string(), report);
  std::ifstream in(dir.path / "summary.json");
  nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j.at("trials") == 1);
  CHECK(j.at("rejections") == 1);
  CHECK(j.at("metrics").contains("auc_B"));
  const auto rows = io::read_csv((dir.path / "trials.csv").string());
  CHECK(rows[0] == std::vector<std::string>{"trial", "auc_B", "auc_Btilde_prime",
                                            "auc_Bhat_prime", "hsic", "p_value", "cor",
                                            "cor_sp"});
  CHECK(rows.size() == 2);
}

TEST_CASE("commands reject unknown keys and write manifests; inputs unchanged") {
  TempDir dir;
  runner::CommandIo io_opts;
  io_opts.out_dir = (dir.path / "ds").string();
  nlohmann::json bad{{"mode", "simple"}, {"n1", 40}, {"n2", 12}, {"seed", 1}, {"oops", 2}};
  CHECK_THROWS_AS(runner::cmd_simulate(bad, io_opts), ConfigError);

  nlohmann::json good{{"mode", "simple"}, {"n1", 60}, {"n2", 15}, {"seed", 1}};
  CHECK(runner::cmd_simulate(good, io_opts) == 0);
  CHECK(fs::exists(dir.path / "ds" / "manifest.json"));
  const std::string edges_hash = io::file_hash_hex((dir.path / "ds" / "edges.csv").string());

  runner::CommandIo train_io;
  train_io.out_dir = (dir.path / "run").string();
  nlohmann::json tc{{"mode", "files"},  {"input", (dir.path / "ds").string()},
                    {"model", "bvgae"}, {"trials", 1},
                    {"iterations", 30}, {"restarts", 1},
                    {"hidden", 8},      {"seed", 2}};
  CHECK(runner::cmd_train(tc, train_io) == 0);
  CHECK(fs::exists(dir.path / "run" / "summary.json"));
  CHECK(fs::exists(dir.path / "run" / "model.ckpt"));
  CHECK(fs::exists(dir.path / "run" / "manifest.json"));
  // training must not touch its inputs
  CHECK(io::file_hash_hex((dir.path / "ds" / "edges.csv").string()) == edges_hash);
}

TEST_CASE("simulate is byte-identical under the same seed") {
  TempDir dir;
  nlohmann::json config{{"mode", "simple"}, {"n1", 50}, {"n2", 10}, {"seed", 9}};
  runner::CommandIo a, b;
  a.out_dir = (dir.path / "a").string();
  b.out_dir = (dir.path / "b").string();
  CHECK(runner::cmd_simulate(config, a) == 0);
  CHECK(runner::cmd_simulate(config, b) == 0);
  CHECK(io::file_hash_hex((dir.path / "a" / "edges.csv").string()) ==
        io::file_hash_hex((dir.path / "b" / "edges.csv").string()));
  CHECK(io::file_hash_hex((dir.path / "a" / "protected.csv").string()) ==
        io::file_hash_hex((dir.path / "b" / "protected.csv").string()));
  // simple mode has no plant-level truth file
  CHECK_FALSE(fs::exists(dir.path / "a" / "truth.csv"));
}

TEST_CASE("parallel and serial experiment runs agree exactly") {
  runner::ExperimentConfig cfg;
  cfg.mode = runner::DataMode::simple;
  cfg.model = runner::ModelKind::bvgae;
  cfg.trials = 3;
  cfg.n1 = 80;
  cfg.n2 = 20;
  cfg.train.iterations = 40;
  cfg.train.restarts = 2;
  cfg.train.hidden = 8;
  cfg.seed = 13;
  cfg.threads = 1;
  eval::ExperimentReport serial = runner::run_experiment(cfg);
  cfg.threads = 2;
  eval::ExperimentReport parallel = runner::run_experiment(cfg);
  REQUIRE(serial.trials.size() == parallel.trials.size());
  for (std::size_t t = 0; t < serial.trials.size(); ++t) {
    CHECK(serial.trials[t].auc_B == parallel.trials[t].auc_B);
    CHECK(serial.trials[t].hsic == parallel.trials[t].hsic);
    CHECK(serial.trials[t].cor == parallel.trials[t].cor);
  }
}

TEST_CASE("delta zero path equals the plain model bit for bit") {
  runner::ExperimentConfig cfg;
  cfg.mode = runner::DataMode::simple;
  cfg.trials = 1;
  cfg.n1 = 80;
  cfg.n2 = 20;
  cfg.train.iterations = 40;
  cfg.train.restarts = 2;
  cfg.train.hidden = 8;
  cfg.seed = 17;
  cfg.threads = 1;
  cfg.model = runner::ModelKind::bvgae;
  eval::ExperimentReport plain = runner::run_experiment(cfg);
  cfg.model = runner::ModelKind::fair;
  cfg.delta = 0.0;
  eval::ExperimentReport fair0 = runner::run_experiment(cfg);
  CHECK(plain.trials[0].auc_B == fair0.trials[0].auc_B);
  CHECK(plain.trials[0].hsic == fair0.trials[0].hsic);
  CHECK(plain.trials[0].cor == fair0.trials[0].cor);
}
