#pragma once

// Trace-norm style gauges built from rank-one atoms u v^T with bounded
// column and row norms. The polar is a top singular pair, the gauge is
// bounded through the factored half-sum, and the solver interleaves
// conditional-gradient steps with fixed-rank local improvement over the
// factors.

#include <cmath>
#include <functional>
#include <optional>
#include <utility>

#include "gcg/losses.hpp"
#include "gcg/numkit.hpp"
#include "gcg/solver.hpp"
#include "gcg/types.hpp"

namespace gcg {

/// Norm on factor columns/rows, carried as its value and the smooth map
/// x -> 1/2 nu(x)^2 with gradient (all that the local objective needs).
struct FactorNorm {
  std::function<double(const Vector&)> value;
  std::function<double(const Vector&, Vector&)> half_sq;

  static FactorNorm l2() {
    FactorNorm n;
    n.value = [](const Vector& x) { return x.norm(); };
    n.half_sq = [](const Vector& x, Vector& g) {
      g = x;
      return 0.5 * x.squaredNorm();
    };
    return n;
  }
};

struct RankOneAtom {
  Vector u;
  Vector v;
};

struct FactorModel {
  Matrix u;  // n x t
  Matrix v;  // t x m
  double rho = 0.0;

  Index rank() const { return u.cols(); }
  Matrix product() const { return u * v; }
};

struct TracePolarResult {
  RankOneAtom atom;
  double value = 0.0;
};

/// Spectral norm and its maximizing rank-one atom via power iteration.
inline TracePolarResult trace_polar(const Matrix& g, double tol = 1e-10,
                                    int max_iter = 4000,
                                    std::uint64_t seed = 0,
                                    const Vector* warm_start = nullptr) {
  auto [sigma, u, v] = top_singular_pair(g, tol, max_iter, seed, warm_start);
  return {{u, v}, sigma};
}

/// GaugeOracle whose atoms are rank-one, exposing the factor pair of the
/// last atom so factored drivers can split it.
class RankOneOracleBase : public GaugeOracle {
 public:
  virtual const RankOneAtom& last_atom() const = 0;
};

/// GaugeOracle adapter; successive calls advance the power-iteration seed so
/// reruns with the same base seed are reproducible.
class TracePolarOracle final : public RankOneOracleBase {
 public:
  explicit TracePolarOracle(double tol = 1e-10, int max_iter = 4000,
                            std::uint64_t seed = 0)
      : tol_(tol), max_iter_(max_iter), seed_(seed) {}

  PolarResult polar_atom(const Matrix& g) const override {
    // Warm-start from the previous atom: near convergence the gradient's
    // leading singular values cluster and a cold power iteration stalls.
    // When the budget runs out the best estimate is returned with its
    // achieved error in additive_error (the driver tolerates inexact
    // oracles; demanding full accuracy here would deadlock on clustered
    // spectra).
    const Vector* warm =
        last_atom_.v.size() == g.cols() ? &last_atom_.v : nullptr;
    auto est = top_singular_estimate(g, tol_, max_iter_, seed_ + calls_, warm);
    ++calls_;
    PolarResult r;
    r.atom = est.triple.u * est.triple.v.transpose();
    r.polar_value = est.triple.sigma;
    r.additive_error = std::max(est.value_error, tol_ * est.triple.sigma);
    r.multiplicative_factor = 1.0;
    last_atom_ = {est.triple.u, est.triple.v};
    return r;
  }

  const RankOneAtom& last_atom() const override { return last_atom_; }

 private:
  double tol_;
  int max_iter_;
  std::uint64_t seed_;
  mutable std::uint64_t calls_ = 0;
  mutable RankOneAtom last_atom_;
};

/// 1/2 sum_i ( nu_c(U_:i)^2 + nu_r(V_i:)^2 ), an upper bound on the gauge of
/// the product U V that is tight at balanced factors.
inline double variational_bound(const Matrix& u, const Matrix& v,
                                const FactorNorm& nc, const FactorNorm& nr) {
  if (u.cols() != v.rows()) throw ShapeMismatch("variational_bound");
  double s = 0.0;
  for (Index i = 0; i < u.cols(); ++i) {
    double a = nc.value(u.col(i));
    double b = nr.value(v.row(i).transpose());
    s += 0.5 * (a * a + b * b);
  }
  return s;
}

/// Loss evaluated through the factors, with gradients for both.
using FactoredValueGrad = std::function<double(const Matrix& u, const Matrix& v,
                                               Matrix& gu, Matrix& gv)>;

/// Adapter for losses without a specialized factored path.
inline FactoredValueGrad factored_from_dense(const SmoothLoss& loss) {
  return [&loss](const Matrix& u, const Matrix& v, Matrix& gu, Matrix& gv) {
    Matrix w = u * v;
    Matrix g = loss.grad(w);
    gu = g * v.transpose();
    gv = u.transpose() * g;
    return loss.value(w);
  };
}

namespace detail {

struct FactorShape {
  Index n, k, m;
  Index size() const { return n * k + k * m; }
  Matrix unpack_u(const Vector& x) const {
    return Eigen::Map<const Matrix>(x.data(), n, k);
  }
  Matrix unpack_v(const Vector& x) const {
    return Eigen::Map<const Matrix>(x.data() + n * k, k, m);
  }
  Vector pack(const Matrix& u, const Matrix& v) const {
    Vector x(size());
    Eigen::Map<Matrix>(x.data(), n, k) = u;
    Eigen::Map<Matrix>(x.data() + n * k, k, m) = v;
    return x;
  }
};

inline double factor_objective(const FactoredValueGrad& loss_vg,
                               const Matrix& u, const Matrix& v, double lambda,
                               const FactorNorm& nc, const FactorNorm& nr,
                               Matrix& gu, Matrix& gv) {
  double val = loss_vg(u, v, gu, gv);
  for (Index i = 0; i < u.cols(); ++i) {
    Vector g;
    val += lambda * nc.half_sq(u.col(i), g);
    gu.col(i) += lambda * g;
    val += lambda * nr.half_sq(v.row(i).transpose(), g);
    gv.row(i) += lambda * g.transpose();
  }
  return val;
}

}  // namespace detail

/// Descend on F(U, V) = loss(U V) + lambda * halfsum from (u0, v0); returns
/// the initializer whenever the search cannot improve it.
inline std::pair<Matrix, Matrix> local_improve_factored(
    const Matrix& u0, const Matrix& v0, const FactoredValueGrad& loss_vg,
    double lambda, const FactorNorm& nc, const FactorNorm& nr,
    const MinimizeOptions& mopts = {}) {
  if (u0.cols() != v0.rows()) throw ShapeMismatch("local_improve_factored");
  if (u0.cols() == 0) return {u0, v0};
  detail::FactorShape shape{u0.rows(), u0.cols(), v0.cols()};

  auto f = [&](const Vector& x, Vector& g) {
    Matrix u = shape.unpack_u(x);
    Matrix v = shape.unpack_v(x);
    Matrix gu, gv;
    double val = detail::factor_objective(loss_vg, u, v, lambda, nc, nr, gu, gv);
    g = shape.pack(gu, gv);
    return val;
  };

  Vector x0 = shape.pack(u0, v0);
  Vector g0(x0.size());
  double f0 = f(x0, g0);
  Vector x = minimize_smooth(f, x0, mopts);
  Vector gx(x.size());
  if (f(x, gx) > f0) return {u0, v0};
  return {shape.unpack_u(x), shape.unpack_v(x)};
}

/// Newton-CG variant of the local step for losses exposing a Hessian-vector
/// product on the dense variable (multi-class logistic).
inline std::pair<Matrix, Matrix> local_improve_newton(
    const Matrix& u0, const Matrix& v0, const SmoothLoss& loss,
    const std::function<Matrix(const Matrix&, const Matrix&)>& dense_hvp,
    double lambda, int max_iter = 20) {
  if (u0.cols() == 0) return {u0, v0};
  detail::FactorShape shape{u0.rows(), u0.cols(), v0.cols()};
  FactorNorm l2 = FactorNorm::l2();

  auto fvg = factored_from_dense(loss);
  auto f = [&](const Vector& x, Vector& g) {
    Matrix u = shape.unpack_u(x);
    Matrix v = shape.unpack_v(x);
    Matrix gu, gv;
    double val = detail::factor_objective(fvg, u, v, lambda, l2, l2, gu, gv);
    g = shape.pack(gu, gv);
    return val;
  };
  // Gauss-Newton style product for the factored objective:
  //   H[dU] = hvp(W, dU V + U dV) V^T + grad(W) dV^T + lambda dU
  //   H[dV] = U^T hvp(W, dU V + U dV) + dU^T grad(W) + lambda dV
  auto hvp = [&](const Vector& x, const Vector& d) {
    Matrix u = shape.unpack_u(x);
    Matrix v = shape.unpack_v(x);
    Matrix du = shape.unpack_u(d);
    Matrix dv = shape.unpack_v(d);
    Matrix w = u * v;
    Matrix g = loss.grad(w);
    Matrix hw = dense_hvp(w, Matrix(du * v + u * dv));
    Matrix hu = hw * v.transpose() + g * dv.transpose() + lambda * du;
    Matrix hv = u.transpose() * hw + du.transpose() * g + lambda * dv;
    return shape.pack(hu, hv);
  };

  Vector x0 = shape.pack(u0, v0);
  Vector g0(x0.size());
  double f0 = f(x0, g0);
  Vector x = minimize_newton_cg(f, hvp, x0, max_iter);
  Vector gx(x.size());
  if (f(x, gx) > f0) return {u0, v0};
  return {shape.unpack_u(x), shape.unpack_v(x)};
}

struct LowrankOptions {
  SolverOptions solver;
  int improve_iters = 20;
  double polar_tol = 1e-10;
  int polar_max_iter = 4000;
  double prune_rel = 1e-10;
};

struct LowrankResult {
  FactorModel model;
  double objective = 0.0;
  SolverTrace trace;
};

using FactorMetricHook =
    std::function<std::optional<double>(const Matrix& u, const Matrix& v)>;
using FactorImprover =
    std::function<std::pair<Matrix, Matrix>(const Matrix& u, const Matrix& v)>;

/// Conditional-gradient solver keeping the iterate in factored form.
/// With the improvement hook disabled it reproduces run_gcg on the dense
/// variable exactly (same polar seeds, same step searches, same updates).
inline LowrankResult solve_lowrank_gcg(
    const SmoothLoss& loss, const FactoredValueGrad& loss_factored,
    double lambda, const FactorNorm& nc, const FactorNorm& nr,
    const LowrankOptions& opts, const FactorMetricHook& metric = nullptr,
    const FactorImprover& improver = nullptr,
    const RankOneOracleBase* custom_oracle = nullptr) {
  if (lambda <= 0) throw ConfigError("solve_lowrank_gcg: lambda");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  };
  const double lip = loss.lipschitz_hint().value_or(1.0);
  const HSpec h = HSpec::linear(lambda);
  TracePolarOracle default_oracle(opts.polar_tol, opts.polar_max_iter,
                                  opts.solver.seed);
  const RankOneOracleBase& oracle =
      custom_oracle ? *custom_oracle : default_oracle;

  const Index n = loss.rows(), m = loss.cols();
  Matrix w = Matrix::Zero(n, m);
  Matrix u(n, 0), v(0, m);
  double rho = 0.0;
  LowrankResult out;

  FactorImprover improve_fn = improver;
  if (opts.solver.improve && !improve_fn) {
    MinimizeOptions mopts;
    mopts.max_iter = opts.improve_iters;
    improve_fn = [&, mopts](const Matrix& cu, const Matrix& cv) {
      return local_improve_factored(cu, cv, loss_factored, lambda, nc, nr,
                                    mopts);
    };
  }

  for (int t = 0; t < opts.solver.max_iters; ++t) {
    Matrix grad = loss.grad(w);
    double eta = 0.0, theta = 0.0;
    double gap = std::numeric_limits<double>::quiet_NaN();

    if (grad.norm() > 0.0) {
      PolarResult pr;
      try {
        pr = oracle.polar_atom(Matrix(-grad));
      } catch (const OracleFailure& e) {
        GcgResult last;
        last.w = w;
        last.rho = rho;
        last.objective = loss.value(w) + lambda * rho;
        last.trace = out.trace;
        throw OracleFailedAt(e.what(), std::move(last));
      }
      const Matrix& a = pr.atom;
      double wg = (w.array() * grad.array()).sum();
      gap = pr.polar_value <= lambda * (1.0 + 1e-12)
                ? wg + lambda * rho
                : std::numeric_limits<double>::infinity();
      std::tie(eta, theta) = choose_linear_step(
          loss, w, rho, a, grad, gap, lambda, lip, opts.solver.step_rule, t);

      w = (1.0 - eta) * w + theta * a;
      rho = (1.0 - eta) * rho + theta;

      // Factor split matching the dense update: scale existing columns by
      // sqrt(1 - eta) and append the atom with weight split as sqrt(theta).
      const RankOneAtom& atom = oracle.last_atom();
      double se = std::sqrt(std::max(0.0, 1.0 - eta));
      double st = std::sqrt(std::max(0.0, theta));
      Matrix u_next(n, u.cols() + 1), v_next(v.rows() + 1, m);
      u_next.leftCols(u.cols()) = se * u;
      u_next.col(u.cols()) = st * atom.u;
      v_next.topRows(v.rows()) = se * v;
      v_next.row(v.rows()) = st * atom.v.transpose();
      u = std::move(u_next);
      v = std::move(v_next);
    }

    if (opts.solver.improve && improve_fn) {
      double f_pre = loss.value(w) + lambda * rho;
      auto [u2, v2] = improve_fn(u, v);
      double rho2 = variational_bound(u2, v2, nc, nr);
      Matrix w2 = u2 * v2;
      double f_post = loss.value(w2) + lambda * rho2;
      if (f_post <= f_pre + 1e-12 * std::max(1.0, std::abs(f_pre))) {
        u = std::move(u2);
        v = std::move(v2);
        w = std::move(w2);
        rho = rho2;
      }
    }

    // Drop negligible atoms. Without the improvement hook only exact zeros
    // are removed so the dense path is untouched bit for bit.
    {
      double cutoff = opts.solver.improve ? opts.prune_rel * std::max(rho, 1e-300)
                                          : 0.0;
      std::vector<Index> keep;
      for (Index i = 0; i < u.cols(); ++i) {
        double mass = nc.value(u.col(i)) * nr.value(v.row(i).transpose());
        if (mass > cutoff) keep.push_back(i);
      }
      if (static_cast<Index>(keep.size()) < u.cols()) {
        Matrix u2(n, static_cast<Index>(keep.size()));
        Matrix v2(static_cast<Index>(keep.size()), m);
        for (std::size_t i = 0; i < keep.size(); ++i) {
          u2.col(static_cast<Index>(i)) = u.col(keep[i]);
          v2.row(static_cast<Index>(i)) = v.row(keep[i]);
        }
        u = std::move(u2);
        v = std::move(v2);
        if (opts.solver.improve) {
          rho = variational_bound(u, v, nc, nr);
          w = u * v;
        }
      }
    }

    IterRecord rec;
    rec.t = t + 1;
    rec.time_s = elapsed();
    rec.objective = loss.value(w) + lambda * rho;
    rec.rho = rho;
    rec.eta = eta;
    rec.theta = theta;
    rec.atoms = static_cast<int>(u.cols());
    if (std::isfinite(gap)) rec.gap = gap;
    if (metric)
      if (auto mm = metric(u, v)) rec.test_metric = *mm;
    out.trace.push_back(std::move(rec));

    if (elapsed() > opts.solver.time_budget_s) break;
    if (opts.solver.rel_obj_tol > 0.0 && out.trace.size() >= 6) {
      double now = out.trace.back().objective;
      double then = out.trace[out.trace.size() - 6].objective;
      if (std::abs(then - now) <=
          opts.solver.rel_obj_tol * std::max(1.0, std::abs(then)))
        break;
    }
  }

  out.model = {std::move(u), std::move(v), rho};
  out.objective = loss.value(out.model.u * out.model.v) + lambda * rho;
  return out;
}

/// Matrix completion with the trace-norm gauge: masked squared loss, l2/l2
/// factor norms. The trace carries held-out RMSE when test triples exist.
inline LowrankResult solve_matrix_completion(const MaskedObservations& obs,
                                             double lambda,
                                             const LowrankOptions& opts) {
  MaskedSquaredLoss loss(obs);
  FactorNorm l2 = FactorNorm::l2();
  auto floss = [&loss](const Matrix& u, const Matrix& v, Matrix& gu,
                       Matrix& gv) {
    return loss.value_grad_factored(u, v, gu, gv);
  };
  FactorMetricHook metric = nullptr;
  if (!obs.test.empty())
    metric = [&loss](const Matrix& u, const Matrix& v) {
      return loss.test_rmse(u, v);
    };
  return solve_lowrank_gcg(loss, floss, lambda, l2, l2, opts, metric);
}

/// Multi-class classification with a trace-norm penalty on the n x C weight
/// matrix. use_hvp switches the local step to truncated Newton.
inline LowrankResult solve_multiclass_tracenorm(const LabeledDesign& data,
                                                double lambda,
                                                const LowrankOptions& opts,
                                                bool use_hvp = false) {
  MulticlassLogisticLoss loss(data);
  FactorNorm l2 = FactorNorm::l2();
  auto floss = factored_from_dense(loss);
  FactorMetricHook metric = [&loss, &data](const Matrix& u, const Matrix& v) {
    return std::optional<double>(loss.error_rate(u * v, data));
  };
  FactorImprover improver = nullptr;
  if (use_hvp && opts.solver.improve)
    improver = [&loss, lambda, &opts](const Matrix& u, const Matrix& v) {
      return local_improve_newton(
          u, v, loss,
          [&loss](const Matrix& w, const Matrix& d) { return loss.hvp(w, d); },
          lambda, opts.improve_iters);
    };
  return solve_lowrank_gcg(loss, floss, lambda, l2, l2, opts, metric,
                           improver);
}

}  // namespace gcg
