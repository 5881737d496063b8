#pragma once

// Core numeric primitives: top singular pair by power iteration, small dense
// SVD, weighted simplex projection, golden section search, and a limited
// memory quasi-Newton minimizer with optional lower bounds.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <numeric>
#include <random>
#include <utility>

#include "gcg/types.hpp"

namespace gcg {

struct SingularTriple {
  double sigma = 0.0;
  Vector u;
  Vector v;
};

namespace detail {

inline Vector seeded_unit_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = gauss(rng);
  double nrm = v.norm();
  if (nrm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    nrm = 1.0;
  }
  return v / nrm;
}

struct SingularEstimate {
  SingularTriple triple;
  double value_error = 0.0;  // estimated |sigma_true - sigma|
  bool converged = false;
};

// Power iteration on the Gram operator x -> Mt(M(x)). The matrix is only
// touched through the two apply callbacks, so sparse inputs never densify.
// Never throws on slow convergence; instead reports the best estimate with
// a value-error bound, so callers can decide whether to accept it.
template <typename ApplyM, typename ApplyMt>
SingularEstimate power_top_pair_budgeted(Index rows, Index cols, ApplyM&& mul,
                                         ApplyMt&& mul_t, double tol,
                                         int max_iter, std::uint64_t seed,
                                         const Vector* warm_start = nullptr) {
  if (rows <= 0 || cols <= 0)
    throw ShapeMismatch("top_singular_pair: empty matrix");
  if (tol <= 0) throw ConfigError("top_singular_pair: tol must be positive");

  Vector v;
  if (warm_start && warm_start->size() == cols && warm_start->norm() > 0)
    v = *warm_start / warm_start->norm();
  else
    v = seeded_unit_vector(cols, seed);
  Vector u = Vector::Zero(rows);
  double sigma = 0.0;
  double sigma_prev = -1.0, delta_prev = -1.0;
  double err = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    Vector mv = mul(v);
    double mv_norm = mv.norm();
    if (mv_norm == 0.0) {
      // v in the null space; restart once, then accept sigma = 0.
      if (it == 0) {
        v = seeded_unit_vector(cols, seed + 0x9e3779b97f4a7c15ull);
        mv = mul(v);
        mv_norm = mv.norm();
      }
      if (mv_norm == 0.0) {
        u = Vector::Unit(rows, 0);
        return {{0.0, u, v}, 0.0, true};
      }
    }
    u = mv / mv_norm;
    Vector mtu = mul_t(u);
    double mtu_norm = mtu.norm();
    if (mtu_norm == 0.0) return {{0.0, u, v}, 0.0, true};
    v = mtu / mtu_norm;
    sigma = mtu_norm;
    if (it % 8 == 7 || it == max_iter - 1) {
      double resid = (mul(v) - sigma * u).norm();
      err = std::min(err, resid);
      if (resid <= tol * sigma) return {{sigma, u, v}, resid, true};
      // Clustered leading singular values make the residual decay with the
      // tiny gap ratio while the value is long converged. The value estimate
      // increases geometrically toward its limit, so bound the remaining
      // error by the extrapolated tail of its increments.
      if (sigma_prev >= 0.0) {
        double delta = sigma - sigma_prev;
        if (delta <= 0.0)
          return {{sigma, u, v}, err, true};  // rounding floor reached
        if (delta_prev > 0.0 && delta < delta_prev) {
          double q = delta / delta_prev;
          double tail = 4.0 * delta * q / (1.0 - q);
          err = std::min(err, tail);
          if (tail <= tol * sigma) return {{sigma, u, v}, tail, true};
        }
        delta_prev = delta;
      }
      sigma_prev = sigma;
    }
  }
  return {{sigma, u, v}, err, false};
}

template <typename ApplyM, typename ApplyMt>
SingularTriple power_top_pair(Index rows, Index cols, ApplyM&& mul,
                              ApplyMt&& mul_t, double tol, int max_iter,
                              std::uint64_t seed,
                              const Vector* warm_start = nullptr) {
  auto est = power_top_pair_budgeted(rows, cols, mul, mul_t, tol, max_iter,
                                     seed, warm_start);
  if (!est.converged)
    throw NonConvergence(
        "top_singular_pair: residual above tol after max_iter");
  return est.triple;
}

}  // namespace detail

inline SingularTriple top_singular_pair(const Matrix& m, double tol = 1e-10,
                                        int max_iter = 2000,
                                        std::uint64_t seed = 0,
                                        const Vector* warm_start = nullptr) {
  return detail::power_top_pair(
      m.rows(), m.cols(), [&](const Vector& x) { return Vector(m * x); },
      [&](const Vector& x) { return Vector(m.transpose() * x); }, tol,
      max_iter, seed, warm_start);
}

inline SingularTriple top_singular_pair(const TripletMatrix& m,
                                        double tol = 1e-10,
                                        int max_iter = 2000,
                                        std::uint64_t seed = 0) {
  return detail::power_top_pair(
      m.rows, m.cols, [&](const Vector& x) { return m.apply(x); },
      [&](const Vector& x) { return m.apply_transpose(x); }, tol, max_iter,
      seed);
}

/// Best-effort variant: never throws on slow convergence; reports the value
/// error actually achieved.
inline detail::SingularEstimate top_singular_estimate(
    const Matrix& m, double tol = 1e-10, int max_iter = 2000,
    std::uint64_t seed = 0, const Vector* warm_start = nullptr) {
  return detail::power_top_pair_budgeted(
      m.rows(), m.cols(), [&](const Vector& x) { return Vector(m * x); },
      [&](const Vector& x) { return Vector(m.transpose() * x); }, tol,
      max_iter, seed, warm_start);
}

struct SvdResult {
  Matrix u;       // orthonormal columns
  Vector sigma;   // nonincreasing, nonnegative
  Matrix v;       // orthonormal columns
};

/// Full thin SVD for small dense matrices (test oracle and prox_trace).
inline SvdResult svd_small(const Matrix& m) {
  if (std::min(m.rows(), m.cols()) > 256)
    throw DimensionTooLarge("svd_small: min dimension exceeds 256");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

inline double trace_norm(const Matrix& m) { return svd_small(m).sigma.sum(); }

/// argmin ||w - v||^2 subject to w >= 0, <b, w> = radius, with b > 0.
/// KKT system solved directly by sort-and-scan over the ratios v_i / b_i.
inline Vector project_weighted_simplex(const Vector& v, const Vector& b,
                                       double radius) {
  const Index n = v.size();
  if (b.size() != n) throw ShapeMismatch("project_weighted_simplex");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index i, Index j) { return v[i] / b[i] > v[j] / b[j]; });

  // With active set A: w_i = v_i - tau * b_i, tau = (sum_A b v - radius) / sum_A b^2.
  double sum_bv = 0.0, sum_bb = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    Index i = order[k];
    sum_bv += b[i] * v[i];
    sum_bb += b[i] * b[i];
    double cand = (sum_bv - radius) / sum_bb;
    if (v[i] / b[i] - cand > 0.0) tau = cand;
    else break;
  }
  Vector w(n);
  for (Index i = 0; i < n; ++i) w[i] = std::max(0.0, v[i] - tau * b[i]);
  return w;
}

/// Golden section search for a convex function on [lo, hi].
inline std::pair<double, double> golden_section_min(
    const std::function<double(double)>& f, double lo, double hi,
    double tol = 1e-10) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  double xm = 0.5 * (a + b);
  double fm = f(xm);
  // Keep the best point actually evaluated.
  if (f1 < fm) { xm = x1; fm = f1; }
  if (f2 < fm) { xm = x2; fm = f2; }
  return {xm, fm};
}

struct MinimizeOptions {
  int max_iter = 20;
  double grad_tol = 1e-8;
  std::optional<Vector> lower_bounds;
  int memory = 10;
};

/// Limited-memory quasi-Newton minimizer with Armijo backtracking.
/// Lower bounds, when given, are enforced exactly by projection.
/// Returns the best iterate found; never worse than x0.
inline Vector minimize_smooth(
    const std::function<double(const Vector&, Vector&)>& f_and_grad,
    const Vector& x0, const MinimizeOptions& opts = {}) {
  const Index n = x0.size();
  auto project = [&](Vector x) {
    if (opts.lower_bounds) x = x.cwiseMax(*opts.lower_bounds);
    return x;
  };
  Vector x = project(x0);
  Vector g(n);
  double fx = f_and_grad(x, g);
  Vector best_x = x;
  double best_f = fx;

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int it = 0; it < opts.max_iter; ++it) {
    // Projected-gradient stationarity.
    Vector pg = x - project(x - g);
    if (pg.norm() <= opts.grad_tol) break;

    // Two-loop recursion.
    Vector d = -g;
    if (!s_hist.empty()) {
      std::vector<double> alpha(s_hist.size());
      for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
        alpha[i] = rho_hist[i] * s_hist[i].dot(d);
        d -= alpha[i] * y_hist[i];
      }
      double gamma = s_hist.back().dot(y_hist.back()) /
                     y_hist.back().squaredNorm();
      d *= gamma;
      for (std::size_t i = 0; i < s_hist.size(); ++i) {
        double beta = rho_hist[i] * y_hist[i].dot(d);
        d += (alpha[i] - beta) * s_hist[i];
      }
    }
    if (!(d.dot(g) < 0)) d = -g;  // restore descent

    // Armijo backtracking along the projected path.
    const double c1 = 1e-4;
    double step = 1.0;
    Vector x_new, g_new(n);
    double f_new = fx;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = project(x + step * d);
      Vector dx = x_new - x;
      if (dx.norm() == 0.0) break;
      f_new = f_and_grad(x_new, g_new);
      if (f_new <= fx + c1 * std::min(0.0, g.dot(dx))) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line search failed: return best so far

    Vector s = x_new - x;
    Vector y = g_new - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / s.dot(y));
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    } else {
      // Negative curvature along s: the stored pairs no longer model the
      // local Hessian, so drop them rather than keep steering with them.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    x = x_new;
    g = g_new;
    fx = f_new;
    if (fx < best_f) {
      best_f = fx;
      best_x = x;
    }
  }
  return best_f <= fx ? best_x : x;
}

/// Truncated Newton (CG on the Hessian-vector product) with Armijo search.
/// Used by the multi-class local improvement when an HVP is available.
inline Vector minimize_newton_cg(
    const std::function<double(const Vector&, Vector&)>& f_and_grad,
    const std::function<Vector(const Vector&, const Vector&)>& hvp,
    const Vector& x0, int max_iter = 20, double grad_tol = 1e-8) {
  Vector x = x0;
  Vector g(x.size());
  double fx = f_and_grad(x, g);
  Vector best_x = x;
  double best_f = fx;
  for (int it = 0; it < max_iter; ++it) {
    if (g.norm() <= grad_tol) break;
    // CG for H p = -g, exiting on negative curvature.
    Vector p = Vector::Zero(x.size());
    Vector r = -g;
    Vector dir = r;
    double r2 = r.squaredNorm();
    double cg_tol = std::min(0.5, std::sqrt(g.norm())) * g.norm();
    for (int k = 0; k < 50; ++k) {
      if (std::sqrt(r2) <= cg_tol) break;
      Vector hd = hvp(x, dir);
      double dhd = dir.dot(hd);
      if (dhd <= 1e-14 * dir.squaredNorm()) {
        if (k == 0) p = -g;
        break;
      }
      double alpha = r2 / dhd;
      p += alpha * dir;
      r -= alpha * hd;
      double r2_new = r.squaredNorm();
      dir = r + (r2_new / r2) * dir;
      r2 = r2_new;
    }
    if (p.squaredNorm() == 0.0) p = -g;
    if (!(p.dot(g) < 0)) p = -g;

    double step = 1.0;
    bool ok = false;
    Vector g_new(x.size());
    for (int ls = 0; ls < 40; ++ls) {
      Vector x_new = x + step * p;
      double f_new = f_and_grad(x_new, g_new);
      if (f_new <= fx + 1e-4 * step * g.dot(p)) {
        x = x_new;
        fx = f_new;
        g = g_new;
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) break;
    if (fx < best_f) {
      best_f = fx;
      best_x = x;
    }
  }
  return best_f <= fx ? best_x : x;
}

}  // namespace gcg
