#pragma once

// Two-view dictionary gauge: atoms are [a; b] v^T with per-view radius
// constraints ||a|| <= beta, ||b|| <= gamma, ||v|| <= 1. The polar reduces
// to a one-dimensional minimization of a scaled spectral norm over the
// multiplier mu; atoms are recovered from the null space of the optimal
// multiplier matrix. A block-normalized power heuristic with a KKT
// certificate serves as the fast path.

#include <cmath>
#include <memory>
#include <optional>

#include "gcg/lowrank.hpp"
#include "gcg/numkit.hpp"
#include "gcg/solver.hpp"
#include "gcg/types.hpp"

namespace gcg {

struct ViewSplit {
  Index n1 = 0;
  Index n2 = 0;
  double beta = 1.0;
  double gamma = 1.0;

  void check() const {
    if (n1 < 1 || n2 < 1) throw ShapeMismatch("ViewSplit: dims");
    if (beta <= 0 || gamma <= 0) throw ConfigError("ViewSplit: radii");
  }
};

struct MultiviewAtom {
  Vector a;  // n1, ||a|| <= beta
  Vector b;  // n2, ||b|| <= gamma
  Vector v;  // m,  ||v|| <= 1
};

namespace mvdetail {

// Reduce general radii to the unit case by scaling the view rows.
inline Matrix scale_views(const Matrix& g, const ViewSplit& s) {
  if (g.rows() != s.n1 + s.n2) throw ShapeMismatch("multiview: rows");
  Matrix ghat = g;
  ghat.topRows(s.n1) *= s.beta;
  ghat.bottomRows(s.n2) *= s.gamma;
  return ghat;
}

// || diag(sqrt(1+mu) I1, sqrt(1+1/mu) I2) ghat ||_sp
inline double dmu_norm(const Matrix& ghat, Index n1, double mu) {
  Matrix scaled = ghat;
  scaled.topRows(n1) *= std::sqrt(1.0 + mu);
  scaled.bottomRows(ghat.rows() - n1) *= std::sqrt(1.0 + 1.0 / mu);
  return svd_small(scaled).sigma[0];
}

inline double lambda_max_sym(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace mvdetail

/// Unit-radius atom recovery at an interior optimal mu: null space of
/// M = mu1 I1 + mu2 I2 - ghat ghat^T, with the block-balance condition
/// solved by mixing one positive- and one negative-eigenvalue direction of
/// Q1^T Q1 - Q2^T Q2.
inline std::pair<Vector, Vector> recover_atoms_scaled(const Matrix& ghat,
                                                      double mu_star,
                                                      Index n1) {
  const Index n = ghat.rows();
  const Index n2 = n - n1;
  Matrix gram = ghat * ghat.transpose();
  double value_sq = mvdetail::dmu_norm(ghat, n1, mu_star);
  value_sq *= value_sq;
  double mu1 = value_sq / (1.0 + mu_star);
  double mu2 = value_sq * mu_star / (1.0 + mu_star);

  Matrix m = -gram;
  m.topLeftCorner(n1, n1).diagonal().array() += mu1;
  m.bottomRightCorner(n2, n2).diagonal().array() += mu2;

  auto msvd = svd_small(m);
  double mnorm = msvd.sigma.size() > 0 ? msvd.sigma[0] : 0.0;
  double gram_scale = mvdetail::lambda_max_sym(gram);
  std::vector<Index> null_idx;
  if (mnorm <= 1e-9 * std::max(1.0, gram_scale)) {
    // M vanishes at the scale of the problem: everything is null.
    for (Index i = 0; i < msvd.sigma.size(); ++i) null_idx.push_back(i);
  } else {
    double cut = 1e-6 * mnorm;
    for (Index i = 0; i < msvd.sigma.size(); ++i)
      if (msvd.sigma[i] <= cut) null_idx.push_back(i);
  }
  if (null_idx.empty())
    throw DegenerateNullspace("recover_atoms: empty null space");

  Matrix q(n, static_cast<Index>(null_idx.size()));
  for (std::size_t i = 0; i < null_idx.size(); ++i)
    q.col(static_cast<Index>(i)) = msvd.u.col(null_idx[i]);
  Matrix q1 = q.topRows(n1), q2 = q.bottomRows(n2);

  Eigen::SelfAdjointEigenSolver<Matrix> es(
      Matrix(q1.transpose() * q1 - q2.transpose() * q2));
  Vector evals = es.eigenvalues();
  Matrix evecs = es.eigenvectors();
  const Index k = evals.size();

  // Mix a positive- and a negative-eigenvalue direction so the blocks carry
  // equal weight; a near-zero eigenvalue direction is already balanced.
  Vector mix;
  Index ip = k - 1, in = 0;  // eigenvalues sorted ascending
  if (evals[ip] > 0.0 && evals[in] < 0.0) {
    double sp = evals[ip], sn = evals[in];
    double t_pos = std::sqrt(2.0 * (-sn) / (sp - sn));
    double t_neg = std::sqrt(2.0 * sp / (sp - sn));
    mix = t_pos * evecs.col(ip) + t_neg * evecs.col(in);
  } else {
    Index zi = -1;
    double best = 1e-6;
    for (Index i = 0; i < k; ++i)
      if (std::abs(evals[i]) < best) {
        best = std::abs(evals[i]);
        zi = i;
      }
    if (zi < 0)
      throw DegenerateNullspace("recover_atoms: no sign-mixed pairing");
    mix = std::sqrt(2.0) * evecs.col(zi);
  }

  Vector c = q * mix;
  Vector a = c.head(n1);
  Vector b = c.tail(n2);
  double na = a.norm(), nb = b.norm();
  if (std::abs(na - 1.0) > 1e-6 || std::abs(nb - 1.0) > 1e-6)
    throw DegenerateNullspace("recover_atoms: unbalanced blocks");
  return {a / na, b / nb};
}

/// Spec'd entry point on the raw gradient: scales the views, recovers, and
/// rescales the atom back to the (beta, gamma) radii.
inline std::pair<Vector, Vector> recover_atoms(const Matrix& g, double mu_star,
                                               const ViewSplit& split) {
  split.check();
  Matrix ghat = mvdetail::scale_views(g, split);
  auto [a, b] = recover_atoms_scaled(ghat, mu_star, split.n1);
  return {split.beta * a, split.gamma * b};
}

struct MultiviewPolar {
  Vector a;  // ||a|| <= beta (equality unless degenerate view)
  Vector b;
  double value = 0.0;
  double mu = 1.0;
  bool boundary = false;
};

/// Polar of the two-view gauge: minimize the scaled spectral norm over mu by
/// golden section in log(mu). A clamped mu means one view carries no weight;
/// the atom degenerates to the dominant view's top singular pair.
inline MultiviewPolar multiview_polar(const Matrix& g, const ViewSplit& split,
                                      double tol = 1e-10) {
  split.check();
  Matrix ghat = mvdetail::scale_views(g, split);
  const Index n1 = split.n1;

  if (ghat.norm() == 0.0) {
    MultiviewPolar out;
    out.a = split.beta * Vector::Unit(split.n1, 0);
    out.b = split.gamma * Vector::Unit(split.n2, 0);
    out.value = 0.0;
    return out;
  }

  const double lo = std::log(1e-8), hi = std::log(1e8);
  auto f = [&](double lm) { return mvdetail::dmu_norm(ghat, n1, std::exp(lm)); };
  auto [lm_star, val] = golden_section_min(f, lo, hi, 1e-12 * (hi - lo));

  MultiviewPolar out;
  out.mu = std::exp(lm_star);
  out.value = val;

  // One-sided atom: top singular pair of the dominant block, zero in the
  // other view (feasible — the radii are inequality constraints).
  auto one_sided = [&](bool x_dominant, bool set_value) {
    out.boundary = true;
    if (x_dominant) {
      auto s = svd_small(Matrix(ghat.topRows(n1)));
      out.a = split.beta * s.u.col(0);
      out.b = Vector::Zero(split.n2);
      if (set_value) out.value = s.sigma[0];
    } else {
      auto s = svd_small(Matrix(ghat.bottomRows(split.n2)));
      out.a = Vector::Zero(split.n1);
      out.b = split.gamma * s.u.col(0);
      if (set_value) out.value = s.sigma[0];
    }
  };

  const double edge = 1e-3;  // in log units
  if (lm_star - lo < edge || hi - lm_star < edge) {
    // mu clamped: one view carries no weight in the limit
    one_sided(/*x_dominant=*/lm_star - lo < edge, /*set_value=*/true);
    return out;
  }

  try {
    auto [a, b] = recover_atoms_scaled(ghat, out.mu, n1);
    out.a = split.beta * a;
    out.b = split.gamma * b;
  } catch (const DegenerateNullspace&) {
    double sx = svd_small(Matrix(ghat.topRows(n1))).sigma[0];
    double sy = svd_small(Matrix(ghat.bottomRows(split.n2))).sigma[0];
    one_sided(sx >= sy, /*set_value=*/false);
  }
  return out;
}

struct MultiviewHeuristic {
  Vector a;
  Vector b;
  double value = 0.0;
  bool kkt_certified = false;
};

/// Block-normalized power iteration on ghat ghat^T. On convergence the
/// multipliers are read off the fixed point and certified against the KKT
/// matrix inequality; an uncertified limit returns nothing and the caller
/// falls back to the exact polar.
inline std::optional<MultiviewHeuristic> multiview_power_heuristic(
    const Matrix& g, const ViewSplit& split, int max_iter = 500,
    double tol = 1e-8, std::uint64_t seed = 0) {
  split.check();
  Matrix ghat = mvdetail::scale_views(g, split);
  const Index n1 = split.n1, n2 = split.n2;
  Matrix gram = ghat * ghat.transpose();
  double gram_norm = mvdetail::lambda_max_sym(gram);
  if (gram_norm <= 0.0) return std::nullopt;

  Vector a = detail::seeded_unit_vector(n1, seed);
  Vector b = detail::seeded_unit_vector(n2, seed + 1);
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    Vector c(n1 + n2);
    c << a, b;
    Vector sc = gram * c;
    Vector s = sc.head(n1), t = sc.tail(n2);
    double ns = s.norm(), nt = t.norm();
    if (ns == 0.0 || nt == 0.0) return std::nullopt;  // degenerate view
    Vector a_new = s / ns, b_new = t / nt;
    double move = (a_new - a).norm() + (b_new - b).norm();
    a = a_new;
    b = b_new;
    if (move <= 1e-14) {
      converged = true;
      break;
    }
  }
  if (!converged) return std::nullopt;

  Vector c(n1 + n2);
  c << a, b;
  Vector sc = gram * c;
  double mu1 = a.dot(sc.head(n1));
  double mu2 = b.dot(sc.tail(n2));
  if (mu1 < 0.0 || mu2 < 0.0) return std::nullopt;

  // Certify gram - mu1 I1 - mu2 I2 <= 0 by power iteration: shift by
  // (mu1 + mu2) I so the operator is positive semidefinite, then compare its
  // top eigenvalue against the shift.
  Matrix shifted = gram;
  shifted.topLeftCorner(n1, n1).diagonal().array() += mu2;
  shifted.bottomRightCorner(n2, n2).diagonal().array() += mu1;
  auto est = top_singular_estimate(shifted, 1e-12, 10000, seed + 2);
  double lam_max = est.triple.sigma + est.value_error - (mu1 + mu2);
  if (lam_max > tol * std::max(1.0, gram_norm)) return std::nullopt;

  MultiviewHeuristic out;
  out.a = split.beta * a;
  out.b = split.gamma * b;
  out.value = std::sqrt(mu1 + mu2);
  out.kkt_certified = true;
  return out;
}

/// Rank-one oracle over stacked gradients: heuristic first, exact fallback.
class MultiviewPolarOracle final : public RankOneOracleBase {
 public:
  MultiviewPolarOracle(ViewSplit split, double tol = 1e-9,
                       std::uint64_t seed = 0)
      : split_(std::move(split)), tol_(tol), seed_(seed) {
    split_.check();
  }

  PolarResult polar_atom(const Matrix& g) const override {
    Vector a, b;
    double value = 0.0;
    auto fast = multiview_power_heuristic(g, split_, 500, 1e-8,
                                          seed_ + calls_);
    if (fast) {
      a = fast->a;
      b = fast->b;
      value = fast->value;
    } else {
      auto exact = multiview_polar(g, split_, tol_);
      a = exact.a;
      b = exact.b;
      value = exact.value;
    }
    ++calls_;

    Vector c(split_.n1 + split_.n2);
    c << a, b;
    Vector gv = g.transpose() * c;  // = ghat^T [a_unit; b_unit]
    double gv_norm = gv.norm();
    Vector v = gv_norm > 0 ? Vector(gv / gv_norm)
                           : Vector(Vector::Unit(g.cols(), 0));

    PolarResult r;
    r.atom = c * v.transpose();
    r.polar_value = value;
    r.additive_error = std::max(0.0, value - gv_norm) + tol_ * value;
    r.multiplicative_factor = 1.0;
    last_atom_ = {c, v};
    return r;
  }

  const RankOneAtom& last_atom() const override { return last_atom_; }

 private:
  ViewSplit split_;
  double tol_;
  std::uint64_t seed_;
  mutable std::uint64_t calls_ = 0;
  mutable RankOneAtom last_atom_;
};

/// Column norm max(||a||/beta, ||b||/gamma) with its log-sum-exp smoothing of
/// the square (tau = 1e-3). The smoothed map dominates the true norm, so
/// half-sum bounds computed from it stay valid gauge bounds.
inline FactorNorm multiview_column_norm(const ViewSplit& split,
                                        double tau = 1e-3) {
  split.check();
  Index n1 = split.n1;
  double b2 = split.beta * split.beta, g2 = split.gamma * split.gamma;
  FactorNorm n;
  n.value = [n1, b2, g2](const Vector& x) {
    double xa = x.head(n1).squaredNorm() / b2;
    double xb = x.tail(x.size() - n1).squaredNorm() / g2;
    return std::sqrt(std::max(xa, xb));
  };
  n.half_sq = [n1, b2, g2, tau](const Vector& x, Vector& grad) {
    double xa = x.head(n1).squaredNorm() / b2;
    double xb = x.tail(x.size() - n1).squaredNorm() / g2;
    double mx = std::max(xa, xb);
    double ea = std::exp((xa - mx) / tau), eb = std::exp((xb - mx) / tau);
    double lse = mx + tau * std::log(ea + eb);
    double pa = ea / (ea + eb), pb = eb / (ea + eb);
    grad.resize(x.size());
    grad.head(n1) = (pa / b2) * x.head(n1);
    grad.tail(x.size() - n1) = (pb / g2) * x.tail(x.size() - n1);
    return 0.5 * lse;
  };
  return n;
}

struct MultiviewOptions {
  LowrankOptions lowrank;
  double smoothing_mu = 1e-4;  // Huber parameter for the robust loss
  double polar_tol = 1e-9;
};

enum class MultiviewLossKind { SmoothedL1, Squared };

struct MultiviewResult {
  Matrix a;  // n1 x t
  Matrix b;  // n2 x t
  Matrix h;  // t x m
  double rho = 0.0;
  double objective = 0.0;
  SolverTrace trace;
};

/// Two-view reconstruction min loss([A; B] H) + lambda * gauge, atoms from
/// the multiview polar, local improvement on the smoothed column norm.
inline MultiviewResult solve_multiview(const Matrix& x, const Matrix& y,
                                       double lambda, const ViewSplit& split,
                                       MultiviewLossKind kind,
                                       const MultiviewOptions& opts,
                                       const FactorMetricHook& metric = nullptr) {
  split.check();
  if (x.rows() != split.n1 || y.rows() != split.n2 || x.cols() != y.cols())
    throw ShapeMismatch("solve_multiview: data");
  Matrix z(split.n1 + split.n2, x.cols());
  z << x, y;

  std::unique_ptr<SmoothLoss> loss;
  if (kind == MultiviewLossKind::SmoothedL1)
    loss = std::make_unique<SmoothedL1Loss>(z, opts.smoothing_mu);
  else {
    MaskedObservations obs;
    obs.n = z.rows();
    obs.m = z.cols();
    for (Index i = 0; i < z.rows(); ++i)
      for (Index j = 0; j < z.cols(); ++j)
        obs.train.push_back({i, j, z(i, j)});
    loss = std::make_unique<MaskedSquaredLoss>(std::move(obs));
  }

  FactorNorm nc = multiview_column_norm(split);
  FactorNorm nr = FactorNorm::l2();
  MultiviewPolarOracle oracle(split, opts.polar_tol, opts.lowrank.solver.seed);
  auto floss = factored_from_dense(*loss);

  auto res = solve_lowrank_gcg(*loss, floss, lambda, nc, nr, opts.lowrank,
                               metric, nullptr, &oracle);

  MultiviewResult out;
  out.a = res.model.u.topRows(split.n1);
  out.b = res.model.u.bottomRows(split.n2);
  out.h = res.model.v;
  out.rho = res.model.rho;
  out.objective = res.objective;
  out.trace = std::move(res.trace);
  return out;
}

struct BcdResult {
  Matrix a;
  Matrix b;
  Matrix h;
  double objective = 0.0;  // squared reconstruction objective on the inputs
  SolverTrace trace;
};

/// Fixed-rank alternating least squares baseline on the stacked views.
inline BcdResult multiview_bcd_baseline(const Matrix& x, const Matrix& y,
                                        Index rank, int iters,
                                        std::uint64_t seed = 0,
                                        double ridge = 1e-10) {
  if (rank < 1) throw ConfigError("multiview_bcd_baseline: rank");
  Matrix z(x.rows() + y.rows(), x.cols());
  z << x, y;
  const Index n = z.rows(), m = z.cols();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix c(n, rank);
  for (Index j = 0; j < rank; ++j)
    for (Index i = 0; i < n; ++i) c(i, j) = gauss(rng);
  Matrix h(rank, m);

  BcdResult out;
  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < iters; ++it) {
    Matrix ctc = c.transpose() * c + ridge * Matrix::Identity(rank, rank);
    h = ctc.ldlt().solve(c.transpose() * z);
    Matrix hht = h * h.transpose() + ridge * Matrix::Identity(rank, rank);
    c = (hht.ldlt().solve(h * z.transpose())).transpose();

    IterRecord rec;
    rec.t = it + 1;
    rec.time_s = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - start)
                     .count();
    rec.objective = 0.5 * (z - c * h).squaredNorm();
    out.trace.push_back(rec);
  }
  out.a = c.topRows(x.rows());
  out.b = c.bottomRows(y.rows());
  out.h = h;
  out.objective = out.trace.empty() ? 0.5 * z.squaredNorm()
                                    : out.trace.back().objective;
  return out;
}

}  // namespace gcg
