#pragma once

// Config-driven experiment dispatch shared by the command-line tool and the
// test suite: validates a flat key=value config, runs the requested solver,
// and renders trace/summary artifacts deterministically.

#include <chrono>
#include <json.hpp>
#include <optional>
#include <string>

#include "gcg/baselines.hpp"
#include "gcg/io.hpp"
#include "gcg/lowrank.hpp"
#include "gcg/multiview.hpp"
#include "gcg/structsparse.hpp"
#include "gcg/synth.hpp"
#include "gcg/version.hpp"

namespace gcg {

struct ExperimentConfig {
  std::string task;    // matrix_completion | multiview | group_lasso | cur
  std::string solver;  // gcg | apg | bcd
  std::string source;  // synth | file
  std::string data_path;    // file source
  std::string groups_path;  // group_lasso structure (optional; see below)
  double lambda = 1.0;
  std::uint64_t seed = 0;
  int max_iters = 200;
  double time_budget_s = std::numeric_limits<double>::infinity();
  bool improve = true;
  bool trace_time = false;  // opt-in: real wall-clock in the CSV

  // synthetic-instance parameters (per task)
  Index n = 100, m = 80, rank = 3;
  double obs_frac = 0.3, noise_sigma = 0.1;
  Index n1 = 80, n2 = 100, t_star = 5;
  double corrupt_frac = 0.15, beta = 1.0, gamma = 5.0;
  Index d = 60;
  double boost = 3.0;
  double q = 2.0, eps = 1e-3;

  std::string out_dir = ".";
  std::string trace_name = "trace.csv";
  std::string summary_name = "summary.json";

  FlatConfig raw;  // echoed into the summary

  static ExperimentConfig from_flat(const FlatConfig& cfg) {
    ExperimentConfig out;
    out.raw = cfg;
    out.task = cfg_require(cfg, "task");
    if (out.task != "matrix_completion" && out.task != "multiview" &&
        out.task != "group_lasso" && out.task != "cur")
      throw ConfigError("task: unknown value '" + out.task + "'");
    out.solver = cfg_string(cfg, "solver", "gcg");
    if (out.solver != "gcg" && out.solver != "apg" && out.solver != "bcd")
      throw ConfigError("solver: unknown value '" + out.solver + "'");
    out.source = cfg_string(cfg, "source", "synth");
    if (out.source != "synth" && out.source != "file")
      throw ConfigError("source: unknown value '" + out.source + "'");
    out.data_path = cfg_string(cfg, "data", "");
    if (out.source == "file" && out.data_path.empty())
      throw ConfigError("data: required when source=file");
    if (out.source == "synth" && !out.data_path.empty())
      throw ConfigError("data: conflicts with source=synth (exactly one data source)");
    out.groups_path = cfg_string(cfg, "groups", "");

    out.lambda = cfg_double(cfg, "lambda", out.lambda);
    if (!(out.lambda > 0)) throw ConfigError("lambda: must be positive");
    out.seed = static_cast<std::uint64_t>(cfg_int(cfg, "seed", 0));
    out.max_iters = static_cast<int>(cfg_int(cfg, "max_iters", out.max_iters));
    if (out.max_iters < 1) throw ConfigError("max_iters: must be positive");
    out.time_budget_s = cfg_double(cfg, "time_budget_s", out.time_budget_s);
    out.improve = cfg_bool(cfg, "improve", true);
    out.trace_time = cfg_bool(cfg, "trace_time", false);

    out.n = cfg_int(cfg, "n", out.n);
    out.m = cfg_int(cfg, "m", out.m);
    out.rank = cfg_int(cfg, "rank", out.rank);
    out.obs_frac = cfg_double(cfg, "obs_frac", out.obs_frac);
    out.noise_sigma = cfg_double(cfg, "noise_sigma", out.noise_sigma);
    out.n1 = cfg_int(cfg, "n1", out.n1);
    out.n2 = cfg_int(cfg, "n2", out.n2);
    out.t_star = cfg_int(cfg, "t_star", out.t_star);
    out.corrupt_frac = cfg_double(cfg, "corrupt_frac", out.corrupt_frac);
    out.beta = cfg_double(cfg, "beta", out.beta);
    out.gamma = cfg_double(cfg, "gamma", out.gamma);
    out.d = cfg_int(cfg, "d", out.d);
    out.boost = cfg_double(cfg, "boost", out.boost);
    out.q = cfg_double(cfg, "q", out.q);
    out.eps = cfg_double(cfg, "eps", out.eps);

    out.out_dir = cfg_string(cfg, "out_dir", out.out_dir);
    out.trace_name = cfg_string(cfg, "trace_file", out.trace_name);
    out.summary_name = cfg_string(cfg, "summary_file", out.summary_name);
    return out;
  }
};

struct ExperimentOutcome {
  SolverTrace trace;
  double objective = 0.0;
  std::optional<double> test_metric;
  int atoms = 0;
  double wall_s = 0.0;
};

namespace harnessdetail {

inline SolverOptions solver_options(const ExperimentConfig& cfg) {
  SolverOptions s;
  s.max_iters = cfg.max_iters;
  s.time_budget_s = cfg.time_budget_s;
  s.seed = cfg.seed;
  s.improve = cfg.improve;
  return s;
}

inline MaskedObservations completion_data(const ExperimentConfig& cfg) {
  if (cfg.source == "file") return load_triplets(cfg.data_path);
  return synth_lowrank(cfg.n, cfg.m, cfg.rank, cfg.obs_frac, cfg.noise_sigma,
                       cfg.seed)
      .obs;
}

inline ExperimentOutcome run_matrix_completion(const ExperimentConfig& cfg) {
  MaskedObservations obs = completion_data(cfg);
  ExperimentOutcome out;
  if (cfg.solver == "gcg") {
    LowrankOptions opts;
    opts.solver = solver_options(cfg);
    auto res = solve_matrix_completion(obs, cfg.lambda, opts);
    out.trace = std::move(res.trace);
    out.objective = res.objective;
    out.atoms = static_cast<int>(res.model.u.cols());
    if (!out.trace.empty()) out.test_metric = out.trace.back().test_metric;
  } else if (cfg.solver == "apg") {
    MaskedSquaredLoss loss(obs);
    ApgOptions opts;
    opts.max_iters = cfg.max_iters;
    opts.time_budget_s = cfg.time_budget_s;
    auto res = run_apg_trace(loss, cfg.lambda, 1.0, opts);
    out.trace = std::move(res.trace);
    out.objective = res.objective;
    if (!obs.test.empty())
      out.test_metric =
          loss.test_rmse(res.w, Matrix::Identity(obs.m, obs.m));
  } else {
    throw ConfigError("solver: bcd is not available for matrix_completion");
  }
  return out;
}

inline ExperimentOutcome run_multiview(const ExperimentConfig& cfg) {
  if (cfg.source != "synth")
    throw ConfigError("source: multiview supports source=synth only");
  auto data = synth_multiview(cfg.n1, cfg.n2, cfg.t_star, cfg.m,
                              cfg.corrupt_frac, cfg.seed, cfg.beta, cfg.gamma);
  ViewSplit split{cfg.n1, cfg.n2, cfg.beta, cfg.gamma};
  ExperimentOutcome out;
  if (cfg.solver == "gcg") {
    MultiviewOptions opts;
    opts.lowrank.solver = solver_options(cfg);
    Matrix z_clean(cfg.n1 + cfg.n2, cfg.m);
    z_clean << data.x_clean, data.y_clean;
    FactorMetricHook metric = [&z_clean](const Matrix& u, const Matrix& v) {
      return std::optional<double>((u * v - z_clean).squaredNorm());
    };
    auto res = solve_multiview(data.x_noisy, data.y_noisy, cfg.lambda, split,
                               MultiviewLossKind::SmoothedL1, opts, metric);
    out.trace = std::move(res.trace);
    out.objective = res.objective;
    out.atoms = static_cast<int>(res.h.rows());
    if (!out.trace.empty()) out.test_metric = out.trace.back().test_metric;
  } else if (cfg.solver == "bcd") {
    auto res = multiview_bcd_baseline(data.x_noisy, data.y_noisy, cfg.rank,
                                      cfg.max_iters, cfg.seed);
    out.trace = std::move(res.trace);
    out.objective = res.objective;
    out.atoms = static_cast<int>(res.h.rows());
  } else {
    throw ConfigError("solver: apg is not available for multiview");
  }
  return out;
}

inline GroupStructure lasso_groups(const ExperimentConfig& cfg, Index n) {
  if (!cfg.groups_path.empty()) {
    std::ifstream in(cfg.groups_path);
    if (!in) throw ConfigError("groups: cannot open " + cfg.groups_path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto gs = parse_group_structure(ss.str());
    if (gs.n != n)
      throw ConfigError("groups: structure covers " + std::to_string(gs.n) +
                        " variables, data has " + std::to_string(n));
    return gs;
  }
  // default: singleton unit-cost groups (plain lasso)
  std::vector<std::vector<Index>> groups;
  for (Index i = 0; i < n; ++i) groups.push_back({i});
  return GroupStructure::make(n, groups,
                              std::vector<double>(static_cast<std::size_t>(n), 1.0));
}

inline MaskedObservations lasso_data(const ExperimentConfig& cfg) {
  if (cfg.source == "file") {
    auto obs = load_triplets(cfg.data_path);
    if (obs.m != 1)
      throw ConfigError("data: group_lasso expects a single-column target");
    return obs;
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MaskedObservations obs;
  obs.n = cfg.n;
  obs.m = 1;
  for (Index i = 0; i < cfg.n; ++i) obs.train.push_back({i, 0, gauss(rng)});
  return obs;
}

inline ExperimentOutcome run_group_lasso(const ExperimentConfig& cfg) {
  MaskedObservations obs = lasso_data(cfg);
  MaskedSquaredLoss loss(obs);
  GroupStructure gs = lasso_groups(cfg, obs.n);
  ExperimentOutcome out;
  if (cfg.solver == "gcg") {
    auto res = solve_structured_gcg(loss, gs, cfg.lambda, QExponent(cfg.q),
                                    solver_options(cfg), cfg.eps);
    out.trace = std::move(res.trace);
    out.objective = res.objective;
    out.atoms = static_cast<int>(res.model.atoms.size());
  } else if (cfg.solver == "apg") {
    bool singletons = true;
    for (const auto& g : gs.groups)
      if (g.size() != 1) singletons = false;
    if (!singletons || cfg.q != 2.0)
      throw ConfigError(
          "solver: apg covers the lasso degeneration only "
          "(singleton groups, q=2)");
    ApgOptions opts;
    opts.max_iters = cfg.max_iters;
    opts.time_budget_s = cfg.time_budget_s;
    auto res = run_apg_l1(loss, cfg.lambda, 1.0, opts);
    out.trace = std::move(res.trace);
    out.objective = res.objective;
  } else {
    throw ConfigError("solver: bcd is not available for group_lasso");
  }
  return out;
}

inline ExperimentOutcome run_cur(const ExperimentConfig& cfg) {
  if (cfg.solver != "gcg")
    throw ConfigError("solver: cur supports solver=gcg only");
  Matrix x;
  if (cfg.source == "file") {
    auto obs = load_triplets(cfg.data_path);
    x = Matrix::Zero(obs.n, obs.m);
    for (const auto& t : obs.train) x(t.row, t.col) = t.value;
  } else {
    x = synth_cur(cfg.n, cfg.d, cfg.rank, cfg.boost, cfg.noise_sigma, cfg.seed)
            .x;
  }
  auto res = solve_cur(x, cfg.lambda, solver_options(cfg), cfg.eps);
  ExperimentOutcome out;
  out.trace = std::move(res.trace);
  out.objective = res.objective;
  out.atoms = static_cast<int>(res.model.atoms.size());
  return out;
}

}  // namespace harnessdetail

inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentOutcome out;
  if (cfg.task == "matrix_completion")
    out = harnessdetail::run_matrix_completion(cfg);
  else if (cfg.task == "multiview")
    out = harnessdetail::run_multiview(cfg);
  else if (cfg.task == "group_lasso")
    out = harnessdetail::run_group_lasso(cfg);
  else if (cfg.task == "cur")
    out = harnessdetail::run_cur(cfg);
  else
    throw ConfigError("task: unknown value '" + cfg.task + "'");
  out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             start)
                   .count();
  return out;
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg,
                                   const ExperimentOutcome& outcome) {
  nlohmann::json j;
  j["objective"] = outcome.objective;
  if (outcome.test_metric)
    j["test_metric"] = *outcome.test_metric;
  else
    j["test_metric"] = nullptr;
  j["iterations"] = outcome.trace.size();
  j["wall_time_s"] = outcome.wall_s;
  j["atoms"] = outcome.atoms;
  j["library_version"] = kLibraryVersion;
  nlohmann::json echo;
  for (const auto& [k, v] : cfg.raw) echo[k] = v;
  j["config"] = std::move(echo);
  return j;
}

/// The harness's own post-run spot check: GCG-with-improve traces must have
/// a nonincreasing objective column.
inline bool trace_objective_nonincreasing(const SolverTrace& trace,
                                          double slack = 1e-9) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    double scale = std::max(1.0, std::abs(trace[i - 1].objective));
    if (trace[i].objective > trace[i - 1].objective + slack * scale)
      return false;
  }
  return true;
}

}  // namespace gcg
