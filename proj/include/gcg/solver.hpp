#pragma once

// Generic conditional-gradient driver for gauge-regularized problems
//   min_w  loss(w) + h(kappa(w))
// with h either lambda * t (Linear) or the indicator of [0, zeta]
// (Indicator). Atoms come from a polar oracle; an optional improvement hook
// may replace the iterate between steps as long as it does not increase the
// upper objective.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "gcg/losses.hpp"
#include "gcg/numkit.hpp"
#include "gcg/types.hpp"

namespace gcg {

/// Result of one polar call: atom with gauge at most 1 maximizing <atom, g>,
/// the attained value, and the oracle's accuracy guarantee
/// <atom, g> >= alpha * polar_exact(g) - eps.
struct PolarResult {
  Matrix atom;
  double polar_value = 0.0;
  double additive_error = 0.0;
  double multiplicative_factor = 1.0;
};

class GaugeOracle {
 public:
  virtual ~GaugeOracle() = default;
  virtual PolarResult polar_atom(const Matrix& g) const = 0;
};

struct HSpec {
  enum class Kind { Linear, Indicator };
  Kind kind = Kind::Linear;
  double lambda = 0.0;  // Linear: h(t) = lambda * t
  double zeta = 0.0;    // Indicator: h(t) = 0 on [0, zeta], +inf beyond

  static HSpec linear(double lambda) {
    if (lambda <= 0) throw ConfigError("HSpec: lambda must be positive");
    HSpec h;
    h.kind = Kind::Linear;
    h.lambda = lambda;
    return h;
  }
  static HSpec indicator(double zeta) {
    if (zeta <= 0) throw ConfigError("HSpec: zeta must be positive");
    HSpec h;
    h.kind = Kind::Indicator;
    h.zeta = zeta;
    return h;
  }

  double value(double t) const {
    if (kind == Kind::Linear) return lambda * t;
    return t <= zeta * (1.0 + 1e-12) ? 0.0
                                     : std::numeric_limits<double>::infinity();
  }
};

enum class StepRule { OpenLoop, Adaptive, JointLineSearch };

struct SolverOptions {
  int max_iters = 200;
  double time_budget_s = std::numeric_limits<double>::infinity();
  StepRule step_rule = StepRule::JointLineSearch;
  double rel_obj_tol = 0.0;  // 0 disables the objective-change stop
  std::uint64_t seed = 0;
  bool improve = true;
};

struct IterRecord {
  int t = 0;
  double time_s = 0.0;
  double objective = 0.0;
  double rho = 0.0;
  double eta = 0.0;
  double theta = 0.0;
  int atoms = 0;
  std::optional<double> gap;
  std::optional<double> test_metric;
};

using SolverTrace = std::vector<IterRecord>;

struct GcgResult {
  Matrix w;
  double rho = 0.0;
  double objective = 0.0;
  SolverTrace trace;
};

inline double step_open_loop(int t) { return 2.0 / (t + 2.0); }

/// min(gap / (L * dist_sq), 1); degenerate zero-distance directions with a
/// positive gap map to a full step.
inline double step_adaptive(double gap, double lipschitz, double dist_sq) {
  if (lipschitz <= 0) throw ConfigError("step_adaptive: lipschitz");
  if (gap <= 0.0) return 0.0;
  if (dist_sq <= 0.0) return 1.0;
  return std::min(gap / (lipschitz * dist_sq), 1.0);
}

/// Upper objective used by the driver: loss plus the regularizer evaluated at
/// the maintained gauge bound rho (which dominates kappa(w)).
inline double upper_objective(const SmoothLoss& loss, const Matrix& w,
                              double rho, const HSpec& h) {
  return loss.value(w) + h.value(rho);
}

/// Duality gap for the current iterate. rho_upper must dominate kappa(w).
/// Linear h yields a finite gap only when the polar of the negated gradient
/// is at most lambda; otherwise the conjugate term is infinite.
inline double duality_gap(const SmoothLoss& loss, const Matrix& w,
                          double rho_upper, const HSpec& h,
                          const GaugeOracle& oracle) {
  Matrix g = loss.grad(w);
  PolarResult pr = oracle.polar_atom(Matrix(-g));
  double wg = (w.array() * g.array()).sum();
  if (h.kind == HSpec::Kind::Indicator)
    return wg + h.zeta * pr.polar_value;
  if (pr.polar_value <= h.lambda * (1.0 + 1e-12))
    return wg + h.lambda * rho_upper;
  return std::numeric_limits<double>::infinity();
}

/// Closed-form theta for the quadratic model of the open-loop step with
/// h = lambda * t: minimizes <a, grad> theta + (L/2)||theta a - eta w||^2
/// shifted terms + lambda theta over theta >= 0.
inline double open_loop_theta(const Matrix& a, const Matrix& w,
                              const Matrix& grad, double eta, double lipschitz,
                              double lambda) {
  double num =
      (a.array() * (lipschitz * eta * w - grad).array()).sum() - lambda;
  double den = lipschitz * a.squaredNorm();
  if (den <= 0.0) return 0.0;
  return std::max(0.0, num / den);
}

/// Joint minimization of
///   phi(eta, theta) = loss((1-eta) w + theta a) + lambda ((1-eta) rho + theta)
/// over eta in [0,1], theta >= 0, by alternating exact 1-D searches. The
/// returned pair never does worse than staying put or the full replacement
/// step (eta = 1 with its best theta).
inline std::pair<double, double> joint_eta_theta(const SmoothLoss& loss,
                                                 const Matrix& w, double rho,
                                                 const Matrix& a,
                                                 double lambda) {
  auto phi = [&](double eta, double theta) {
    return loss.value(Matrix((1.0 - eta) * w + theta * a)) +
           lambda * ((1.0 - eta) * rho + theta);
  };
  auto best_theta = [&](double eta) {
    auto g = [&](double theta) { return phi(eta, theta); };
    double hi = 1.0;
    while (hi < 1e12 && g(2.0 * hi) < g(hi)) hi *= 2.0;
    auto [theta, val] = golden_section_min(g, 0.0, 2.0 * hi, 1e-12 * hi);
    if (g(0.0) <= val) return std::make_pair(0.0, g(0.0));
    return std::make_pair(theta, val);
  };

  double eta = 1.0, theta = 0.0;
  std::tie(theta, std::ignore) = best_theta(1.0);
  for (int sweep = 0; sweep < 3; ++sweep) {
    auto f_eta = [&](double e) { return phi(e, theta); };
    std::tie(eta, std::ignore) = golden_section_min(f_eta, 0.0, 1.0, 1e-12);
    std::tie(theta, std::ignore) = best_theta(eta);
  }

  double cur = phi(eta, theta);
  auto [theta_full, val_full] = best_theta(1.0);
  if (val_full < cur) {
    eta = 1.0;
    theta = theta_full;
    cur = val_full;
  }
  if (phi(0.0, 0.0) < cur) {
    eta = 0.0;
    theta = 0.0;
  }
  return {eta, theta};
}

/// Step selection for h = lambda * t, shared by every driver so their
/// trajectories coincide exactly when no improvement hook interferes.
inline std::pair<double, double> choose_linear_step(
    const SmoothLoss& loss, const Matrix& w, double rho, const Matrix& a,
    const Matrix& grad, double gap, double lambda, double lip, StepRule rule,
    int t) {
  double eta = 0.0, theta = 0.0;
  switch (rule) {
    case StepRule::OpenLoop:
      eta = step_open_loop(t);
      theta = open_loop_theta(a, w, grad, eta, lip, lambda);
      break;
    case StepRule::Adaptive:
      // The distance uses the scaled atom rho * a as the target vertex;
      // theta still comes from the quadratic model so rho can grow.
      if (std::isfinite(gap) && rho > 0.0)
        eta = step_adaptive(std::max(gap, 0.0), lip,
                            (rho * a - w).squaredNorm());
      else
        eta = step_open_loop(t);
      theta = open_loop_theta(a, w, grad, eta, lip, lambda);
      break;
    case StepRule::JointLineSearch:
      std::tie(eta, theta) = joint_eta_theta(loss, w, rho, a, lambda);
      break;
  }
  return {eta, theta};
}

/// Hook invoked after each update with the tentative (w, rho). It may return
/// a replacement; the driver keeps it only when it does not increase the
/// upper objective (and, for Indicator h, keeps rho within the ball).
using ImproveHook = std::function<std::optional<std::pair<Matrix, double>>(
    const Matrix& w, double rho, int t)>;

/// Optional per-iteration diagnostic recorded into the trace.
using MetricHook = std::function<std::optional<double>(const Matrix& w)>;

struct OracleFailedAt : OracleFailure {
  OracleFailedAt(const std::string& what, GcgResult last_good)
      : OracleFailure(what), last(std::move(last_good)) {}
  GcgResult last;
};

inline GcgResult run_gcg(const SmoothLoss& loss, const GaugeOracle& oracle,
                         const HSpec& h, const SolverOptions& opts,
                         const ImproveHook& improve = nullptr,
                         const MetricHook& metric = nullptr) {
  if (opts.max_iters <= 0) throw ConfigError("run_gcg: max_iters");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  };
  const double lip = loss.lipschitz_hint().value_or(1.0);

  Matrix w = Matrix::Zero(loss.rows(), loss.cols());
  double rho = 0.0;
  int atoms = 0;
  GcgResult out;

  for (int t = 0; t < opts.max_iters; ++t) {
    Matrix grad = loss.grad(w);
    PolarResult pr;
    try {
      pr = oracle.polar_atom(Matrix(-grad));
    } catch (const OracleFailure& e) {
      out.w = w;
      out.rho = rho;
      out.objective = upper_objective(loss, w, rho, h);
      throw OracleFailedAt(e.what(), std::move(out));
    }
    const Matrix& a = pr.atom;

    double gap = std::numeric_limits<double>::quiet_NaN();
    {
      double wg = (w.array() * grad.array()).sum();
      if (h.kind == HSpec::Kind::Indicator)
        gap = wg + h.zeta * pr.polar_value;
      else
        gap = pr.polar_value <= h.lambda * (1.0 + 1e-12)
                  ? wg + h.lambda * rho
                  : std::numeric_limits<double>::infinity();
    }

    double eta = 0.0, theta = 0.0;
    if (h.kind == HSpec::Kind::Indicator) {
      switch (opts.step_rule) {
        case StepRule::OpenLoop:
          eta = step_open_loop(t);
          break;
        case StepRule::Adaptive: {
          Matrix d = h.zeta * a;
          eta = std::isfinite(gap)
                    ? step_adaptive(std::max(gap, 0.0), lip,
                                    (d - w).squaredNorm())
                    : step_open_loop(t);
          break;
        }
        case StepRule::JointLineSearch: {
          auto f_eta = [&](double e) {
            return loss.value(Matrix((1.0 - e) * w + e * h.zeta * a));
          };
          std::tie(eta, std::ignore) =
              golden_section_min(f_eta, 0.0, 1.0, 1e-12);
          if (f_eta(0.0) <= f_eta(eta)) eta = 0.0;
          break;
        }
      }
      theta = eta * h.zeta;
    } else {
      std::tie(eta, theta) = choose_linear_step(
          loss, w, rho, a, grad, gap, h.lambda, lip, opts.step_rule, t);
    }

    Matrix w_next = (1.0 - eta) * w + theta * a;
    double rho_next = (1.0 - eta) * rho + theta;
    if (theta > 0.0) ++atoms;

    if (opts.improve && improve) {
      double f_pre = upper_objective(loss, w_next, rho_next, h);
      auto repl = improve(w_next, rho_next, t);
      if (repl) {
        double f_repl = upper_objective(loss, repl->first, repl->second, h);
        bool ok = f_repl <= f_pre + 1e-12 * std::max(1.0, std::abs(f_pre));
        if (h.kind == HSpec::Kind::Indicator && repl->second > h.zeta)
          ok = false;
        if (ok) {
          w_next = std::move(repl->first);
          rho_next = repl->second;
        }
      }
    }

    w = std::move(w_next);
    rho = rho_next;

    IterRecord rec;
    rec.t = t + 1;
    rec.time_s = elapsed();
    rec.objective = upper_objective(loss, w, rho, h);
    rec.rho = rho;
    rec.eta = eta;
    rec.theta = theta;
    rec.atoms = atoms;
    if (std::isfinite(gap)) rec.gap = gap;
    if (metric)
      if (auto m = metric(w)) rec.test_metric = *m;
    out.trace.push_back(std::move(rec));

    if (elapsed() > opts.time_budget_s) break;
    if (opts.rel_obj_tol > 0.0 && out.trace.size() >= 6) {
      double now = out.trace.back().objective;
      double then = out.trace[out.trace.size() - 6].objective;
      if (std::abs(then - now) <=
          opts.rel_obj_tol * std::max(1.0, std::abs(then)))
        break;
    }
  }

  out.w = std::move(w);
  out.rho = rho;
  out.objective = upper_objective(loss, out.w, out.rho, h);
  return out;
}

}  // namespace gcg
