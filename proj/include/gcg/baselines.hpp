#pragma once

// Accelerated proximal gradient baseline with the two proximal maps used by
// the experiments: entrywise soft-thresholding and singular-value shrinkage.

#include <chrono>
#include <cmath>
#include <functional>

#include "gcg/losses.hpp"
#include "gcg/numkit.hpp"
#include "gcg/solver.hpp"
#include "gcg/types.hpp"

namespace gcg {

inline Matrix prox_l1(const Matrix& z, double tau) {
  if (tau < 0) throw ConfigError("prox_l1: tau must be nonnegative");
  return z.unaryExpr([tau](double v) {
    return v > tau ? v - tau : (v < -tau ? v + tau : 0.0);
  });
}

inline Matrix prox_trace(const Matrix& z, double tau) {
  if (tau < 0) throw ConfigError("prox_trace: tau must be nonnegative");
  auto [u, sigma, v] = svd_small(z);
  Vector shrunk = (sigma.array() - tau).max(0.0);
  return u * shrunk.asDiagonal() * v.transpose();
}

struct ApgOptions {
  int max_iters = 500;
  double rel_obj_tol = 0.0;
  double time_budget_s = std::numeric_limits<double>::infinity();
};

struct ApgResult {
  Matrix w;
  double objective = 0.0;
  SolverTrace trace;
};

/// Monotone FISTA with backtracking on the smooth part. prox(z, tau) must
/// solve argmin_w  tau * f(w) + 1/2 ||w - z||^2 for the regularizer f, and
/// reg_value(w) must evaluate f(w) for the recorded objective.
inline ApgResult run_apg(
    const SmoothLoss& loss,
    const std::function<Matrix(const Matrix&, double)>& prox,
    const std::function<double(const Matrix&)>& reg_value, double l0,
    const ApgOptions& opts = {}) {
  if (l0 <= 0) throw ConfigError("run_apg: l0 must be positive");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  };
  auto objective = [&](const Matrix& w) {
    return loss.value(w) + reg_value(w);
  };

  Matrix w = Matrix::Zero(loss.rows(), loss.cols());
  Matrix y = w;
  double t_momentum = 1.0;
  double lip = l0;
  double f_w = objective(w);
  ApgResult out;

  for (int t = 0; t < opts.max_iters; ++t) {
    Matrix grad_y = loss.grad(y);
    double loss_y = loss.value(y);

    Matrix z;
    for (int bt = 0; bt < 60; ++bt) {
      z = prox(Matrix(y - grad_y / lip), 1.0 / lip);
      Matrix d = z - y;
      double quad = loss_y + (d.array() * grad_y.array()).sum() +
                    0.5 * lip * d.squaredNorm();
      if (loss.value(z) <= quad + 1e-12 * std::max(1.0, std::abs(quad))) break;
      lip *= 2.0;
    }

    double f_z = objective(z);
    Matrix w_prev = w;
    if (f_z <= f_w) {
      w = z;
      f_w = f_z;
    } else {
      // Monotone variant: keep the best iterate, restart momentum toward it.
      t_momentum = 1.0;
    }

    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
    y = w + ((t_momentum - 1.0) / t_next) * (w - w_prev);
    t_momentum = t_next;

    IterRecord rec;
    rec.t = t + 1;
    rec.time_s = elapsed();
    rec.objective = f_w;
    out.trace.push_back(rec);

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
  out.objective = f_w;
  return out;
}

/// Convenience wrapper for trace-norm regularization with weight lambda.
inline ApgResult run_apg_trace(const SmoothLoss& loss, double lambda,
                               double l0, const ApgOptions& opts = {}) {
  return run_apg(
      loss,
      [lambda](const Matrix& z, double tau) {
        return prox_trace(z, lambda * tau);
      },
      [lambda](const Matrix& w) { return lambda * trace_norm(w); }, l0, opts);
}

/// Convenience wrapper for entrywise l1 regularization with weight lambda.
inline ApgResult run_apg_l1(const SmoothLoss& loss, double lambda, double l0,
                            const ApgOptions& opts = {}) {
  return run_apg(
      loss,
      [lambda](const Matrix& z, double tau) { return prox_l1(z, lambda * tau); },
      [lambda](const Matrix& w) { return lambda * w.cwiseAbs().sum(); }, l0,
      opts);
}

}  // namespace gcg
