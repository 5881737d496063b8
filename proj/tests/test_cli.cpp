#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "gcg/harness.hpp"

using namespace gcg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "gcgkit_test";
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const std::string& name, const std::string& content) {
  auto path = temp_dir() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_binary(const std::string& args) {
  std::string cmd = std::string(GCGKIT_BIN) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("load_triplets: basic parsing and shape") {
  auto path = write_file("basic.txt", "1 1 5\n2 2 3\n");
  auto obs = load_triplets(path.string());
  REQUIRE(obs.n == 2);
  REQUIRE(obs.m == 2);
  REQUIRE(obs.train.size() == 2);
  REQUIRE(obs.train[0].row == 0);
  REQUIRE(obs.train[0].col == 0);
  REQUIRE(obs.train[0].value == 5.0);
  REQUIRE(obs.train[1].row == 1);
  REQUIRE(obs.train[1].col == 1);
}

TEST_CASE("load_triplets: dense remap of sparse ids") {
  auto path = write_file("sparse_ids.txt", "5 100 1.5\n9 100 -2\n5 7 0.25\n");
  auto obs = load_triplets(path.string());
  REQUIRE(obs.n == 2);  // users {5, 9} -> {0, 1}
  REQUIRE(obs.m == 2);  // items {7, 100} -> {0, 1}
  REQUIRE(obs.train[0].row == 0);
  REQUIRE(obs.train[0].col == 1);
  REQUIRE(obs.train[2].col == 0);
}

TEST_CASE("load_triplets: duplicates keep the last value") {
  auto path = write_file("dups.txt", "1 1 5\n1 2 2\n1 1 7\n");
  std::size_t dups = 0;
  auto obs = load_triplets(path.string(), ' ', &dups);
  REQUIRE(dups == 1);
  REQUIRE(obs.train.size() == 2);
  REQUIRE(obs.train[0].value == 7.0);
}

TEST_CASE("load_triplets: errors carry line numbers") {
  auto check = [](const std::string& name, const std::string& content,
                  const std::string& needle) {
    auto path = write_file(name, content);
    try {
      load_triplets(path.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  check("bad1.txt", "1 1 5\nnonsense\n", "line 2");
  check("bad2.txt", "1 1 5\n2 2\n", "line 2");
  check("bad3.txt", "0 1 5\n", "line 1");
  check("bad4.txt", "1 1 5 extra\n", "line 1");

  auto empty = write_file("empty.txt", "# only a comment\n");
  REQUIRE_THROWS_AS(load_triplets(empty.string()), EmptyData);
}

TEST_CASE("load_triplets: write/load round-trip") {
  auto data = synth_lowrank(12, 9, 2, 0.6, 0.1, 4);
  auto path = temp_dir() / "roundtrip.txt";
  write_triplets(path.string(), data.obs.train);
  auto loaded = load_triplets(path.string());
  REQUIRE(loaded.train.size() == data.obs.train.size());
  for (std::size_t k = 0; k < loaded.train.size(); ++k) {
    // dense remap may renumber, but this mask covers every row/column index
    REQUIRE(loaded.train[k].value == data.obs.train[k].value);
  }
  REQUIRE(loaded.n == data.obs.n);
  REQUIRE(loaded.m == data.obs.m);
}

TEST_CASE("flat config parsing") {
  auto cfg = parse_flat_config(
      "task = matrix_completion\n# comment\nlambda=2.5\nseed=7\n");
  REQUIRE(cfg.at("task") == "matrix_completion");
  REQUIRE(cfg.at("lambda") == "2.5");
  REQUIRE_THROWS_AS(parse_flat_config("task=x\nno assignment here\n"),
                    ParseError);
  try {
    parse_flat_config("a=1\nbroken line\n");
  } catch (const ParseError& e) {
    REQUIRE(std::string(e.what()).find("line 2") != std::string::npos);
  }
  apply_override(cfg, "lambda=0.5");
  REQUIRE(cfg.at("lambda") == "0.5");
  REQUIRE_THROWS_AS(apply_override(cfg, "nodelimiter"), ConfigError);
}

TEST_CASE("experiment config validation reports the field") {
  auto expect_field = [](FlatConfig cfg, const std::string& field) {
    try {
      ExperimentConfig::from_flat(cfg);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      REQUIRE(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  expect_field({}, "task");
  expect_field({{"task", "unknown"}}, "task");
  expect_field({{"task", "cur"}, {"lambda", "-1"}}, "lambda");
  expect_field({{"task", "cur"}, {"solver", "sgd"}}, "solver");
  expect_field({{"task", "cur"}, {"source", "file"}}, "data");
  // exactly one data source
  expect_field({{"task", "cur"}, {"source", "synth"}, {"data", "x.txt"}},
               "data");
  expect_field({{"task", "cur"}, {"lambda", "abc"}}, "lambda");
}

TEST_CASE("trace CSV format") {
  SolverTrace trace;
  IterRecord r;
  r.t = 1;
  r.time_s = 0.25;
  r.objective = 1.5;
  r.rho = 0.5;
  r.eta = 0.125;
  r.theta = 0.0625;
  r.atoms = 2;
  trace.push_back(r);
  r.t = 2;
  r.gap = 0.001;
  r.test_metric = 0.75;
  trace.push_back(r);

  std::string csv = trace_csv_string(trace);
  auto first_nl = csv.find('\n');
  REQUIRE(csv.substr(0, first_nl) ==
          "iter,time_s,objective,rho,eta,theta,atoms,gap,test_metric");
  // time_s empty by default (determinism contract); optional cells empty
  // when unavailable
  REQUIRE(csv.find("1,,1.5,0.5,0.125,0.0625,2,,\n") != std::string::npos);
  REQUIRE(csv.find("2,,1.5,0.5,0.125,0.0625,2,0.001,0.75\n") !=
          std::string::npos);
  std::string with_time = trace_csv_string(trace, true);
  REQUIRE(with_time.find("1,0.25,") != std::string::npos);
}

TEST_CASE("run_experiment: deterministic trace bytes per config + seed") {
  FlatConfig flat{{"task", "matrix_completion"}, {"solver", "gcg"},
                  {"n", "20"},                   {"m", "15"},
                  {"rank", "2"},                 {"obs_frac", "0.5"},
                  {"lambda", "1.0"},             {"max_iters", "8"},
                  {"seed", "7"}};
  auto cfg = ExperimentConfig::from_flat(flat);
  auto a = run_experiment(cfg);
  auto b = run_experiment(cfg);
  REQUIRE(trace_csv_string(a.trace) == trace_csv_string(b.trace));
  REQUIRE(a.objective == b.objective);
  REQUIRE(trace_objective_nonincreasing(a.trace));
  REQUIRE(a.test_metric.has_value());  // synth data has a held-out split
}

TEST_CASE("run_experiment: gcg and apg agree on a small completion instance") {
  FlatConfig base{{"task", "matrix_completion"}, {"n", "20"},
                  {"m", "15"},                   {"rank", "2"},
                  {"obs_frac", "0.6"},           {"lambda", "0.5"},
                  {"seed", "3"}};
  FlatConfig ga = base, ap = base;
  ga["solver"] = "gcg";
  ga["max_iters"] = "60";
  ap["solver"] = "apg";
  ap["max_iters"] = "2000";
  auto out_g = run_experiment(ExperimentConfig::from_flat(ga));
  auto out_a = run_experiment(ExperimentConfig::from_flat(ap));
  REQUIRE(out_g.objective ==
          Catch::Approx(out_a.objective).epsilon(1e-3));
}

TEST_CASE("summary JSON carries the required fields") {
  FlatConfig flat{{"task", "group_lasso"}, {"solver", "gcg"}, {"n", "6"},
                  {"lambda", "0.8"},       {"max_iters", "20"}, {"seed", "1"}};
  auto cfg = ExperimentConfig::from_flat(flat);
  auto outcome = run_experiment(cfg);
  auto j = summary_json(cfg, outcome);
  REQUIRE(j.contains("objective"));
  REQUIRE(j.contains("test_metric"));
  REQUIRE(j.contains("iterations"));
  REQUIRE(j.contains("wall_time_s"));
  REQUIRE(j.contains("atoms"));
  REQUIRE(j.contains("library_version"));
  REQUIRE(j["config"]["task"] == "group_lasso");
  REQUIRE(j["library_version"] == kLibraryVersion);
}

TEST_CASE("binary: run writes artifacts and is byte-deterministic") {
  auto out1 = temp_dir() / "run1";
  auto out2 = temp_dir() / "run2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  auto cfg = write_file("mc.cfg",
                        "task=matrix_completion\nsolver=gcg\nn=20\nm=15\n"
                        "rank=2\nobs_frac=0.5\nlambda=1.0\nmax_iters=6\n"
                        "seed=7\n");
  std::string base = "run --config " + cfg.string();
  REQUIRE(run_binary(base + " --out-dir " + out1.string()) == 0);
  REQUIRE(run_binary(base + " --out-dir " + out2.string()) == 0);
  REQUIRE(fs::exists(out1 / "trace.csv"));
  REQUIRE(fs::exists(out1 / "summary.json"));
  REQUIRE(read_file(out1 / "trace.csv") == read_file(out2 / "trace.csv"));

  // --set overrides change the run
  auto out3 = temp_dir() / "run3";
  fs::remove_all(out3);
  REQUIRE(run_binary(base + " --set lambda=2.0 --out-dir " + out3.string()) ==
          0);
  REQUIRE(read_file(out3 / "trace.csv") != read_file(out1 / "trace.csv"));
}

TEST_CASE("binary: exit codes") {
  auto bad = write_file("bad.cfg", "task=unknown_task\n");
  REQUIRE(run_binary("run --config " + bad.string()) == 2);
  auto malformed = write_file("malformed.cfg", "not an assignment\n");
  REQUIRE(run_binary("run --config " + malformed.string()) == 2);
  REQUIRE(run_binary("run --set task=matrix_completion --set source=file"
                     " --set data=/nonexistent/file.txt") == 2);
  REQUIRE(run_binary("bogus_subcommand") == 2);
}

TEST_CASE("binary: compare, polar, and synth subcommands") {
  auto out = temp_dir() / "cmp";
  fs::remove_all(out);
  auto cfg = write_file("cmp.cfg",
                        "task=matrix_completion\nn=20\nm=15\nrank=2\n"
                        "obs_frac=0.5\nlambda=1.0\nmax_iters=6\nseed=7\n");
  REQUIRE(run_binary("compare --config " + cfg.string() + " --out-dir " +
                     out.string()) == 0);
  REQUIRE(fs::exists(out / "trace_gcg.csv"));
  REQUIRE(fs::exists(out / "trace_apg.csv"));
  auto summary = read_file(out / "summary.json");
  REQUIRE(summary.find("abs_objective_delta") != std::string::npos);

  REQUIRE(run_binary("polar --set kind=trace --set n=10 --set m=8 --seed 3") ==
          0);
  auto groups = write_file("groups.txt", "1.0: 1 2 3\n0.5: 3 4\n");
  REQUIRE(run_binary("polar --set kind=structured --set groups=" +
                     groups.string()) == 0);
  REQUIRE(run_binary("polar --set kind=bogus") == 2);

  auto synth_out = temp_dir() / "synth";
  fs::remove_all(synth_out);
  REQUIRE(run_binary("synth --set task=matrix_completion --set n=10 --set "
                     "m=8 --set rank=2 --set obs_frac=0.5 --out-dir " +
                     synth_out.string()) == 0);
  auto reloaded = load_triplets((synth_out / "train.txt").string());
  REQUIRE(reloaded.train.size() > 0);
}
