// Command-line experiment harness: config-driven solver runs, cross-solver
// comparison, one-shot polar evaluation, and synthetic dataset emission.
//
// Exit codes: 0 success, 2 configuration/parse error, 3 solver failure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <random>

#include "gcg/harness.hpp"
#include "gcg/numkit.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

gcg::FlatConfig load_config(const std::string& path,
                            const std::vector<std::string>& overrides,
                            const std::string& out_dir, long long seed) {
  gcg::FlatConfig cfg =
      path.empty() ? gcg::FlatConfig{} : gcg::load_flat_config(path);
  for (const auto& assignment : overrides)
    gcg::apply_override(cfg, assignment);
  if (!out_dir.empty()) cfg["out_dir"] = out_dir;
  if (seed >= 0) cfg["seed"] = std::to_string(seed);
  return cfg;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

int cmd_run(const gcg::FlatConfig& flat) {
  auto cfg = gcg::ExperimentConfig::from_flat(flat);
  auto outcome = gcg::run_experiment(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  gcg::write_trace_csv(join_path(cfg.out_dir, cfg.trace_name), outcome.trace,
                       cfg.trace_time);
  auto summary = gcg::summary_json(cfg, outcome);
  if (cfg.solver == "gcg" && cfg.improve)
    summary["objective_nonincreasing"] =
        gcg::trace_objective_nonincreasing(outcome.trace);
  std::ofstream out(join_path(cfg.out_dir, cfg.summary_name));
  out << summary.dump(2) << '\n';
  std::cout << "objective " << gcg::iodetail::fmt(outcome.objective) << '\n';
  return kExitOk;
}

int cmd_compare(const gcg::FlatConfig& flat) {
  gcg::FlatConfig a = flat, b = flat;
  a["solver"] = "gcg";
  b["solver"] = flat.count("baseline") ? flat.at("baseline") : "apg";
  a.erase("baseline");
  b.erase("baseline");
  auto cfg_a = gcg::ExperimentConfig::from_flat(a);
  auto cfg_b = gcg::ExperimentConfig::from_flat(b);
  auto out_a = gcg::run_experiment(cfg_a);
  auto out_b = gcg::run_experiment(cfg_b);
  std::filesystem::create_directories(cfg_a.out_dir);
  gcg::write_trace_csv(join_path(cfg_a.out_dir, "trace_gcg.csv"), out_a.trace,
                       cfg_a.trace_time);
  gcg::write_trace_csv(join_path(cfg_a.out_dir, "trace_" + cfg_b.solver + ".csv"),
                       out_b.trace, cfg_b.trace_time);
  nlohmann::json j;
  j["gcg"] = gcg::summary_json(cfg_a, out_a);
  j[cfg_b.solver] = gcg::summary_json(cfg_b, out_b);
  j["abs_objective_delta"] = std::abs(out_a.objective - out_b.objective);
  std::ofstream out(join_path(cfg_a.out_dir, cfg_a.summary_name));
  out << j.dump(2) << '\n';
  std::cout << "gcg " << gcg::iodetail::fmt(out_a.objective) << ' '
            << cfg_b.solver << ' ' << gcg::iodetail::fmt(out_b.objective)
            << " delta "
            << gcg::iodetail::fmt(std::abs(out_a.objective - out_b.objective))
            << '\n';
  return kExitOk;
}

int cmd_polar(const gcg::FlatConfig& flat) {
  std::string kind = gcg::cfg_require(flat, "kind");
  auto seed = static_cast<std::uint64_t>(gcg::cfg_int(flat, "seed", 0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (kind == "trace") {
    gcg::Index n = gcg::cfg_int(flat, "n", 12);
    gcg::Index m = gcg::cfg_int(flat, "m", 9);
    gcg::Matrix g(n, m);
    for (gcg::Index j = 0; j < m; ++j)
      for (gcg::Index i = 0; i < n; ++i) g(i, j) = gauss(rng);
    auto res = gcg::trace_polar(g);
    std::cout << "trace polar " << gcg::iodetail::fmt(res.value) << '\n';
  } else if (kind == "multiview") {
    gcg::Index n1 = gcg::cfg_int(flat, "n1", 5);
    gcg::Index n2 = gcg::cfg_int(flat, "n2", 4);
    gcg::Index m = gcg::cfg_int(flat, "m", 6);
    gcg::ViewSplit split{n1, n2, gcg::cfg_double(flat, "beta", 1.0),
                         gcg::cfg_double(flat, "gamma", 1.0)};
    gcg::Matrix g(n1 + n2, m);
    for (gcg::Index j = 0; j < m; ++j)
      for (gcg::Index i = 0; i < n1 + n2; ++i) g(i, j) = gauss(rng);
    auto res = gcg::multiview_polar(g, split);
    std::cout << "multiview polar " << gcg::iodetail::fmt(res.value)
              << " mu " << gcg::iodetail::fmt(res.mu) << '\n';
  } else if (kind == "structured") {
    std::string groups_path = gcg::cfg_require(flat, "groups");
    std::ifstream in(groups_path);
    if (!in) throw gcg::ConfigError("groups: cannot open " + groups_path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto gs = gcg::parse_group_structure(ss.str());
    gcg::Vector g(gs.n);
    for (gcg::Index i = 0; i < gs.n; ++i) g[i] = gauss(rng);
    gcg::QExponent q(gcg::cfg_double(flat, "q", 2.0));
    double eps = gcg::cfg_double(flat, "eps", 1e-3);
    auto sm = gcg::group_polar_smoothed(g, gs, q, eps);
    std::cout << "structured polar lambda_eps "
              << gcg::iodetail::fmt(sm.lambda_eps);
    if (gs.n <= 20) {
      auto bf = gcg::polar_bruteforce(g, gs, q);
      std::cout << " bruteforce " << gcg::iodetail::fmt(std::pow(bf.value, q.q));
    }
    std::cout << '\n';
  } else {
    throw gcg::ConfigError("kind: unknown value '" + kind + "'");
  }
  return kExitOk;
}

int cmd_synth(const gcg::FlatConfig& flat) {
  auto cfg = gcg::ExperimentConfig::from_flat(flat);
  std::filesystem::create_directories(cfg.out_dir);
  if (cfg.task == "matrix_completion") {
    auto data = gcg::synth_lowrank(cfg.n, cfg.m, cfg.rank, cfg.obs_frac,
                                   cfg.noise_sigma, cfg.seed);
    gcg::write_triplets(join_path(cfg.out_dir, "train.txt"), data.obs.train);
    gcg::write_triplets(join_path(cfg.out_dir, "test.txt"), data.obs.test);
    std::cout << "wrote " << data.obs.train.size() << " train / "
              << data.obs.test.size() << " test triples\n";
  } else if (cfg.task == "cur") {
    auto data = gcg::synth_cur(cfg.n, cfg.d, cfg.rank, cfg.boost,
                               cfg.noise_sigma, cfg.seed);
    std::vector<gcg::Triplet> triples;
    for (gcg::Index j = 0; j < data.x.cols(); ++j)
      for (gcg::Index i = 0; i < data.x.rows(); ++i)
        triples.push_back({i, j, data.x(i, j)});
    gcg::write_triplets(join_path(cfg.out_dir, "data.txt"), triples);
    std::cout << "wrote " << triples.size() << " entries\n";
  } else {
    throw gcg::ConfigError("task: synth emits matrix_completion or cur data");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gcgkit: conditional-gradient experiment harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  long long seed = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key=value config file");
    sub->add_option("--set", overrides, "override: key=value (repeatable)");
    sub->add_option("--out-dir", out_dir, "output directory");
    sub->add_option("--seed", seed, "random seed override");
  };

  auto* run = app.add_subcommand("run", "run one solver per the config");
  auto* compare =
      app.add_subcommand("compare", "run gcg plus a baseline, report the delta");
  auto* polar = app.add_subcommand("polar", "one-shot polar evaluation");
  auto* synth = app.add_subcommand("synth", "emit a synthetic dataset");
  for (auto* sub : {run, compare, polar, synth}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    gcg::FlatConfig flat = load_config(config_path, overrides, out_dir, seed);
    if (run->parsed()) return cmd_run(flat);
    if (compare->parsed()) return cmd_compare(flat);
    if (polar->parsed()) return cmd_polar(flat);
    return cmd_synth(flat);
  } catch (const gcg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const gcg::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const gcg::EmptyData& e) {
    std::cerr << "empty data: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  }
}
