#pragma once

// Structured-sparsity gauges built from subset costs: a group cost counts
// (with weights) how many groups a support touches. The polar reduces to a
// fractional program over supports, relaxed to a weighted-simplex problem,
// smoothed with a log-sum-exp barrier and solved by an accelerated projected
// method; an integral support is recovered by a sorted-cut rounding sweep
// with a brute-force fallback at small dimension. Atoms feed a totally
// corrective conditional-gradient driver.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gcg/losses.hpp"
#include "gcg/numkit.hpp"
#include "gcg/solver.hpp"
#include "gcg/types.hpp"

namespace gcg {

struct GroupStructure {
  Index n = 0;
  std::vector<std::vector<Index>> groups;  // 0-based variable indices
  std::vector<double> costs;
  std::vector<std::vector<Index>> membership;  // per variable: group ids
  Index r = 0;                                 // max per-variable membership

  static GroupStructure make(Index n, std::vector<std::vector<Index>> groups,
                             std::vector<double> costs) {
    if (n < 1) throw ConfigError("GroupStructure: n must be positive");
    if (groups.size() != costs.size())
      throw ConfigError("GroupStructure: groups/costs size mismatch");
    GroupStructure gs;
    gs.n = n;
    gs.groups = std::move(groups);
    gs.costs = std::move(costs);
    gs.membership.assign(static_cast<std::size_t>(n), {});
    for (std::size_t gi = 0; gi < gs.groups.size(); ++gi) {
      if (!(gs.costs[gi] > 0.0) || !std::isfinite(gs.costs[gi]))
        throw ConfigError("GroupStructure: costs must be finite positive");
      if (gs.groups[gi].empty())
        throw ConfigError("GroupStructure: empty group");
      for (Index i : gs.groups[gi]) {
        if (i < 0 || i >= n)
          throw ConfigError("GroupStructure: variable index out of range");
        gs.membership[static_cast<std::size_t>(i)].push_back(
            static_cast<Index>(gi));
      }
    }
    for (Index i = 0; i < n; ++i) {
      auto& mem = gs.membership[static_cast<std::size_t>(i)];
      std::sort(mem.begin(), mem.end());
      if (std::adjacent_find(mem.begin(), mem.end()) != mem.end())
        throw ConfigError("GroupStructure: duplicate variable in a group");
      if (mem.empty())
        throw ConfigError(
            "GroupStructure: every variable must belong to a group");
      gs.r = std::max(gs.r, static_cast<Index>(mem.size()));
    }
    return gs;
  }

  Index group_count() const { return static_cast<Index>(groups.size()); }
};

/// Text format: one group per line, "cost: i1 i2 i3 ..." with 1-based
/// indices. Blank lines and lines starting with '#' are skipped.
inline GroupStructure parse_group_structure(const std::string& text) {
  std::vector<std::vector<Index>> groups;
  std::vector<double> costs;
  Index n = 0;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::size_t colon = line.find(':');
    if (colon == std::string::npos)
      throw ParseError("group structure line " + std::to_string(lineno) +
                       ": missing ':'");
    double cost = 0.0;
    try {
      std::size_t used = 0;
      cost = std::stod(line.substr(0, colon), &used);
      std::string rest = line.substr(used, colon - used);
      if (rest.find_first_not_of(" \t") != std::string::npos)
        throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("group structure line " + std::to_string(lineno) +
                       ": bad cost");
    }
    std::istringstream idx(line.substr(colon + 1));
    std::vector<Index> g;
    long long v = 0;
    while (idx >> v) {
      if (v < 1)
        throw ParseError("group structure line " + std::to_string(lineno) +
                         ": indices are 1-based");
      g.push_back(static_cast<Index>(v - 1));
      n = std::max(n, static_cast<Index>(v));
    }
    if (!idx.eof())
      throw ParseError("group structure line " + std::to_string(lineno) +
                       ": bad index");
    if (g.empty())
      throw ParseError("group structure line " + std::to_string(lineno) +
                       ": empty group");
    groups.push_back(std::move(g));
    costs.push_back(cost);
  }
  if (groups.empty()) throw ParseError("group structure: no groups");
  return GroupStructure::make(n, std::move(groups), std::move(costs));
}

struct QExponent {
  double q = 2.0;

  QExponent() = default;
  explicit QExponent(double value) : q(value) {
    if (!(q >= 1.0 && q <= 64.0))
      throw ConfigError("QExponent: q must lie in [1, 64]");
  }
  double p() const {
    return q == 1.0 ? std::numeric_limits<double>::infinity()
                    : q / (q - 1.0);
  }
};

/// Weighted count of groups a subset touches.
inline double subset_cost(const std::vector<Index>& a,
                          const GroupStructure& gs) {
  std::vector<char> touched(gs.groups.size(), 0);
  for (Index i : a) {
    if (i < 0 || i >= gs.n) throw ShapeMismatch("subset_cost: index");
    for (Index g : gs.membership[static_cast<std::size_t>(i)])
      touched[static_cast<std::size_t>(g)] = 1;
  }
  double total = 0.0;
  for (std::size_t g = 0; g < touched.size(); ++g)
    if (touched[g]) total += gs.costs[g];
  return total;
}

struct BruteforcePolar {
  double value = 0.0;
  std::vector<Index> support;
};

/// Exhaustive polar over all nonempty supports with a caller-supplied subset
/// cost (infinite costs excluded). Ties broken by smallest support, then by
/// lexicographic order of the sorted index list.
inline BruteforcePolar polar_bruteforce_cost(
    const Vector& g, const std::function<double(std::uint32_t)>& cost_of_mask,
    const QExponent& q) {
  const Index n = g.size();
  if (n > 20) throw DimensionTooLarge("polar_bruteforce: n > 20");
  if (n < 1) throw ShapeMismatch("polar_bruteforce: empty vector");

  auto support_of = [&](std::uint32_t mask) {
    std::vector<Index> s;
    for (Index i = 0; i < n; ++i)
      if (mask & (1u << i)) s.push_back(i);
    return s;
  };

  BruteforcePolar best;
  best.value = -1.0;
  std::vector<Index> best_support;
  int best_size = n + 1;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    double cost = cost_of_mask(mask);
    if (!std::isfinite(cost)) continue;
    double norm_q = 0.0;
    for (Index i = 0; i < n; ++i)
      if (mask & (1u << i)) norm_q += std::pow(std::abs(g[i]), q.q);
    double value = std::pow(norm_q, 1.0 / q.q) / std::pow(cost, 1.0 / q.q);
    int size = __builtin_popcount(mask);
    bool better = value > best.value;
    if (!better && value == best.value) {
      if (size < best_size) {
        better = true;
      } else if (size == best_size) {
        better = support_of(mask) < best_support;
      }
    }
    if (better) {
      best.value = value;
      best_support = support_of(mask);
      best_size = size;
    }
  }
  best.support = best_support;
  return best;
}

inline BruteforcePolar polar_bruteforce(const Vector& g,
                                        const GroupStructure& gs,
                                        const QExponent& q) {
  if (g.size() != gs.n) throw ShapeMismatch("polar_bruteforce: size");
  std::vector<std::uint32_t> group_masks(gs.groups.size(), 0);
  for (std::size_t gi = 0; gi < gs.groups.size(); ++gi)
    for (Index i : gs.groups[gi])
      group_masks[gi] |= (1u << i);
  auto cost = [&](std::uint32_t mask) {
    double total = 0.0;
    for (std::size_t gi = 0; gi < group_masks.size(); ++gi)
      if (mask & group_masks[gi]) total += gs.costs[gi];
    return total;
  };
  return polar_bruteforce_cost(g, cost, q);
}

/// Log-sum-exp smoothing of h(w~) = -sum_i g~_i min_{G ∋ i} w~_G with
/// parameter c = eps / (n log r); O(nr) time. r = 1 short-circuits to the
/// exact linear objective.
inline std::pair<double, Vector> smoothed_h_value_grad(
    const Vector& w_tilde, const Vector& g_tilde, const GroupStructure& gs,
    double eps) {
  if (w_tilde.size() != gs.group_count() || g_tilde.size() != gs.n)
    throw ShapeMismatch("smoothed_h_value_grad: sizes");
  if (!(eps > 0)) throw ConfigError("smoothed_h_value_grad: eps");

  Vector grad = Vector::Zero(gs.group_count());
  if (gs.r == 1) {
    double value = 0.0;
    for (Index i = 0; i < gs.n; ++i) {
      Index g = gs.membership[static_cast<std::size_t>(i)][0];
      value -= g_tilde[i] * w_tilde[g];
      grad[g] -= g_tilde[i];
    }
    return {value, grad};
  }

  const double c =
      eps / (static_cast<double>(gs.n) * std::log(static_cast<double>(gs.r)));
  double value = 0.0;
  std::vector<double> expo(static_cast<std::size_t>(gs.r));
  for (Index i = 0; i < gs.n; ++i) {
    const auto& mem = gs.membership[static_cast<std::size_t>(i)];
    if (g_tilde[i] == 0.0) {
      // uniform softmax: constant value, zero gradient
      value += c * std::log(static_cast<double>(mem.size()));
      continue;
    }
    const double scale = -g_tilde[i] / c;
    double mx = -std::numeric_limits<double>::infinity();
    for (Index g : mem) mx = std::max(mx, scale * w_tilde[g]);
    double denom = 0.0;
    for (std::size_t k = 0; k < mem.size(); ++k) {
      expo[k] = std::exp(scale * w_tilde[mem[k]] - mx);
      denom += expo[k];
    }
    value += c * (mx + std::log(denom));
    for (std::size_t k = 0; k < mem.size(); ++k)
      grad[mem[k]] -= (expo[k] / denom) * g_tilde[i];
  }
  return {value, grad};
}

struct GroupPolarOptions {
  int max_iter = 0;          // 0: ceil((2/eps) sqrt(n log r))
  double stall_tol = 1e-14;  // early exit on iterate stagnation
  // Early exit when the best exact value stops moving for this many
  // iterations. 0 scales it with the budget: the exact piecewise-linear
  // objective can plateau for long stretches while the smoothed objective
  // still progresses, and cutting such a plateau short voids the eps
  // guarantee on lambda_eps.
  int stall_window = 0;
};

struct GroupPolarResult {
  double lambda_eps = 0.0;  // within [lambda* - eps, lambda*]
  Vector w_tilde;           // maximizer over the weighted simplex
};

/// Smoothed relaxation of the fractional polar: maximize -h_eps over
/// {w~ >= 0, sum_G c_G w~_G = 1} by an accelerated projected gradient
/// method with step 1/L, L = (n/eps) ||g~||_inf^2 log r.
inline GroupPolarResult group_polar_smoothed(const Vector& g,
                                             const GroupStructure& gs,
                                             const QExponent& q, double eps,
                                             const GroupPolarOptions& opts = {}) {
  if (g.size() != gs.n) throw ShapeMismatch("group_polar_smoothed: size");
  if (!(eps > 0)) throw ConfigError("group_polar_smoothed: eps");
  const Index m = gs.group_count();
  Vector costs(m);
  for (Index gi = 0; gi < m; ++gi) costs[gi] = gs.costs[static_cast<std::size_t>(gi)];

  Vector g_tilde(gs.n);
  for (Index i = 0; i < gs.n; ++i)
    g_tilde[i] = std::pow(std::abs(g[i]), q.q);

  GroupPolarResult out;
  // feasible start: uniform over groups
  out.w_tilde = Vector::Constant(m, 1.0 / costs.sum());

  if (g_tilde.maxCoeff() == 0.0) return out;

  if (gs.r == 1) {
    // exact linear program: all mass on the best single group
    Vector per_group = Vector::Zero(m);
    for (Index i = 0; i < gs.n; ++i)
      per_group[gs.membership[static_cast<std::size_t>(i)][0]] += g_tilde[i];
    Index best = 0;
    (per_group.array() / costs.array()).maxCoeff(&best);
    out.w_tilde.setZero();
    out.w_tilde[best] = 1.0 / costs[best];
    out.lambda_eps = per_group[best] / costs[best];
    return out;
  }

  const double logr = std::log(static_cast<double>(gs.r));
  const double gmax = g_tilde.maxCoeff();
  const double lip =
      static_cast<double>(gs.n) / eps * gmax * gmax * logr;
  // The accelerated-method step bound carries a max(1, ||g~||_inf) factor:
  // the Lipschitz constant scales with ||g~||_inf^2, so the iteration count
  // for a fixed absolute accuracy scales with ||g~||_inf.
  int max_iter = opts.max_iter > 0
                     ? opts.max_iter
                     : static_cast<int>(std::ceil(
                           2.0 / eps * std::max(1.0, gmax) *
                           std::sqrt(static_cast<double>(gs.n) * logr)));

  // Iterates are driven by the smoothed objective; the reported value is the
  // exact piecewise-linear objective at the best iterate (feasible, so it
  // never exceeds lambda*, and it recovers the smoothing bias).
  auto h_exact = [&](const Vector& wt) {
    double value = 0.0;
    for (Index i = 0; i < gs.n; ++i) {
      if (g_tilde[i] == 0.0) continue;
      double mn = std::numeric_limits<double>::infinity();
      for (Index g : gs.membership[static_cast<std::size_t>(i)])
        mn = std::min(mn, wt[g]);
      value -= g_tilde[i] * mn;
    }
    return value;
  };

  const int stall_window =
      opts.stall_window > 0 ? opts.stall_window : std::max(200, max_iter / 4);

  Vector x = out.w_tilde, y = x;
  double tk = 1.0;
  double best_h = h_exact(x);
  Vector best_x = x;
  int last_improve = 0;
  for (int it = 0; it < max_iter; ++it) {
    auto [hy, gy] = smoothed_h_value_grad(y, g_tilde, gs, eps);
    Vector x_next =
        project_weighted_simplex(Vector(y - gy / lip), costs, 1.0);
    double hx = h_exact(x_next);
    if (hx < best_h - 1e-12 * std::max(1.0, std::abs(best_h))) {
      best_h = hx;
      best_x = x_next;
      last_improve = it;
    }
    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    y = x_next + ((tk - 1.0) / t_next) * (x_next - x);
    double move = (x_next - x).lpNorm<Eigen::Infinity>();
    x = x_next;
    tk = t_next;
    if (move <= opts.stall_tol * std::max(1.0, x.lpNorm<Eigen::Infinity>()))
      break;
    if (it - last_improve >= stall_window) break;
  }
  out.w_tilde = best_x;
  out.lambda_eps = -best_h;
  return out;
}

struct RecoveredSupport {
  std::vector<Index> support;
  double value = 0.0;  // >= lambda* - 2 eps
  bool fell_back = false;
};

/// Sorted-cut rounding: sweep prefixes of the groups ordered by w~* and
/// evaluate the rounded objective in O(nr) total; variables kept are those
/// whose containing groups are all active. Falls back to brute force when
/// the best cut is more than eps below lambda_eps.
inline RecoveredSupport recover_integral_support(const Vector& w_tilde_star,
                                                 const Vector& g_tilde,
                                                 const GroupStructure& gs,
                                                 double lambda_eps,
                                                 double eps) {
  if (w_tilde_star.size() != gs.group_count() || g_tilde.size() != gs.n)
    throw ShapeMismatch("recover_integral_support: sizes");
  const Index m = gs.group_count();
  std::vector<Index> order(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return w_tilde_star[a] > w_tilde_star[b];
  });

  std::vector<Index> remaining(static_cast<std::size_t>(gs.n));
  for (Index i = 0; i < gs.n; ++i)
    remaining[static_cast<std::size_t>(i)] =
        static_cast<Index>(gs.membership[static_cast<std::size_t>(i)].size());
  double covered_sum = 0.0, cost_sum = 0.0;
  double best_value = -1.0;
  Index best_cut = 0;
  for (Index k = 0; k < m; ++k) {
    Index gi = order[static_cast<std::size_t>(k)];
    cost_sum += gs.costs[static_cast<std::size_t>(gi)];
    for (Index i : gs.groups[static_cast<std::size_t>(gi)])
      if (--remaining[static_cast<std::size_t>(i)] == 0)
        covered_sum += g_tilde[i];
    double value = covered_sum / cost_sum;
    if (value > best_value) {
      best_value = value;
      best_cut = k;
    }
  }

  RecoveredSupport out;
  out.value = best_value;
  std::vector<char> active(static_cast<std::size_t>(m), 0);
  for (Index k = 0; k <= best_cut; ++k)
    active[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
  for (Index i = 0; i < gs.n; ++i) {
    bool all = true;
    for (Index gi : gs.membership[static_cast<std::size_t>(i)])
      if (!active[static_cast<std::size_t>(gi)]) {
        all = false;
        break;
      }
    if (all && g_tilde[i] > 0.0) out.support.push_back(i);
  }

  if (best_value < lambda_eps - eps) {
    if (gs.n > 20)
      throw RequiresExactFallback(
          "recover_integral_support: rounding insufficient and n > 20");
    // exact integral maximization of sum_{i in A} g~_i / J(A)
    auto exact = polar_bruteforce(g_tilde, gs, QExponent(1.0));
    out.support = exact.support;
    out.value = exact.value;
    out.fell_back = true;
  }
  return out;
}

struct SupportAtom {
  std::vector<Index> support;
  Vector coeffs;  // values on support, same order
  double cost = 0.0;

  Vector dense(Index n) const {
    Vector w = Vector::Zero(n);
    for (std::size_t k = 0; k < support.size(); ++k)
      w[support[k]] = coeffs[static_cast<Index>(k)];
    return w;
  }
};

/// Polar atom: support from the smoothed relaxation plus rounding, then the
/// Holder-extremal coefficients on that support scaled to the unit gauge
/// sublevel set.
inline SupportAtom polar_atom_PJ(const Vector& g, const GroupStructure& gs,
                                 const QExponent& q, double eps = 1e-3,
                                 const GroupPolarOptions& popts = {}) {
  if (g.size() != gs.n) throw ShapeMismatch("polar_atom_PJ: size");
  if (g.norm() == 0.0) throw ConfigError("polar_atom_PJ: zero input");

  Vector g_tilde(gs.n);
  for (Index i = 0; i < gs.n; ++i)
    g_tilde[i] = std::pow(std::abs(g[i]), q.q);
  auto relaxed = group_polar_smoothed(g, gs, q, eps, popts);
  auto rec = recover_integral_support(relaxed.w_tilde, g_tilde, gs,
                                      relaxed.lambda_eps, eps);

  SupportAtom atom;
  atom.support = rec.support;
  atom.cost = subset_cost(rec.support, gs);
  const auto sz = static_cast<Index>(rec.support.size());
  atom.coeffs = Vector::Zero(sz);
  double jroot = std::pow(atom.cost, 1.0 / q.q);
  if (q.q == 1.0) {
    for (Index k = 0; k < sz; ++k)
      atom.coeffs[k] = (g[rec.support[static_cast<std::size_t>(k)]] >= 0.0
                            ? 1.0
                            : -1.0) /
                       atom.cost;
  } else {
    // w_i ∝ sign(g_i) |g_i|^(q-1), normalized so ||w||_p = 1, p = q/(q-1);
    // magnitudes are scaled by the max first to stay in range for large q.
    double mx = 0.0;
    for (Index i : rec.support) mx = std::max(mx, std::abs(g[i]));
    double norm_q = 0.0;
    for (Index i : rec.support)
      norm_q += std::pow(std::abs(g[i]) / mx, q.q);
    double denom = std::pow(norm_q, (q.q - 1.0) / q.q);  // = (||g|/mx||_q)^(q-1)
    for (Index k = 0; k < sz; ++k) {
      double gi = g[rec.support[static_cast<std::size_t>(k)]];
      double mag = std::pow(std::abs(gi) / mx, q.q - 1.0) / denom;
      atom.coeffs[k] = (gi >= 0.0 ? mag : -mag) / jroot;
    }
  }
  return atom;
}

struct AtomicModel {
  std::vector<SupportAtom> atoms;
  Vector weights;

  double rho() const { return weights.size() > 0 ? weights.sum() : 0.0; }
  Vector combine(Index n) const {
    Vector w = Vector::Zero(n);
    for (std::size_t k = 0; k < atoms.size(); ++k)
      w += weights[static_cast<Index>(k)] * atoms[k].dense(n);
    return w;
  }
};

namespace ssdetail {

inline Matrix as_matrix(const Vector& flat, Index rows, Index cols) {
  return Eigen::Map<const Matrix>(flat.data(), rows, cols);
}

inline Vector as_flat(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

}  // namespace ssdetail

/// Re-optimize atom weights: min_{sigma >= 0} loss(sum sigma_t a_t) +
/// lambda sum sigma_t, warm-started from the incoming weights. Weights below
/// 1e-12 are zeroed; the objective never increases.
inline Vector totally_corrective(const AtomicModel& model,
                                 const SmoothLoss& loss, double lambda,
                                 int max_iter = 200) {
  if (model.atoms.empty())
    throw ConfigError("totally_corrective: no atoms");
  const Index n = loss.rows() * loss.cols();
  const auto t = static_cast<Index>(model.atoms.size());
  Matrix basis(n, t);
  for (Index k = 0; k < t; ++k)
    basis.col(k) = model.atoms[static_cast<std::size_t>(k)].dense(n);

  auto f = [&](const Vector& sigma, Vector& grad) {
    Matrix w = ssdetail::as_matrix(Vector(basis * sigma), loss.rows(),
                                   loss.cols());
    Matrix g = loss.grad(w);
    grad = basis.transpose() * ssdetail::as_flat(g) +
           lambda * Vector::Ones(t);
    return loss.value(w) + lambda * sigma.sum();
  };
  MinimizeOptions mopts;
  mopts.max_iter = max_iter;
  mopts.lower_bounds = Vector::Zero(t);
  Vector sigma = minimize_smooth(f, model.weights, mopts);
  for (Index k = 0; k < t; ++k)
    if (sigma[k] < 1e-12) sigma[k] = 0.0;
  return sigma;
}

struct StructuredResult {
  AtomicModel model;
  Matrix w;
  double objective = 0.0;
  SolverTrace trace;
};

/// Totally corrective conditional gradient for subset-cost gauges: polar
/// atom, 2-D conic search over (scale of the old iterate, weight of the new
/// atom), then full weight re-optimization.
inline StructuredResult solve_structured_gcg(const SmoothLoss& loss,
                                             const GroupStructure& gs,
                                             double lambda,
                                             const QExponent& q,
                                             const SolverOptions& opts,
                                             double eps = 1e-3,
                                             const GroupPolarOptions& popts = {}) {
  if (lambda <= 0) throw ConfigError("solve_structured_gcg: lambda");
  const Index rows = loss.rows(), cols = loss.cols();
  const Index n = rows * cols;
  if (gs.n != n)
    throw ShapeMismatch("solve_structured_gcg: group structure size");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  };

  StructuredResult out;
  out.model.weights = Vector(0);
  Vector w = Vector::Zero(n);

  for (int t = 0; t < opts.max_iters; ++t) {
    Matrix wm = ssdetail::as_matrix(w, rows, cols);
    Vector grad = ssdetail::as_flat(loss.grad(wm));
    double rho = out.model.rho();
    double alpha = 1.0, beta = 0.0;
    double gap = std::numeric_limits<double>::quiet_NaN();

    if (grad.norm() > 0.0) {
      SupportAtom atom = polar_atom_PJ(Vector(-grad), gs, q, eps, popts);
      Vector a = atom.dense(n);
      double attained = -grad.dot(a);
      gap = attained <= lambda * (1.0 + 1e-12)
                ? w.dot(grad) + lambda * rho
                : std::numeric_limits<double>::infinity();

      // 2-D conic search over alpha (old iterate scale) and beta (new atom
      // weight), both nonnegative.
      auto f2 = [&](const Vector& ab, Vector& g2) {
        Matrix cand = ssdetail::as_matrix(Vector(ab[0] * w + ab[1] * a),
                                          rows, cols);
        Vector gc = ssdetail::as_flat(loss.grad(cand));
        g2.resize(2);
        g2[0] = gc.dot(w) + lambda * rho;
        g2[1] = gc.dot(a) + lambda;
        return loss.value(cand) + lambda * (ab[0] * rho + ab[1]);
      };
      MinimizeOptions mopts;
      mopts.max_iter = 60;
      mopts.lower_bounds = Vector::Zero(2);
      Vector ab0(2);
      ab0 << 1.0, 0.0;
      Vector ab = minimize_smooth(f2, ab0, mopts);
      alpha = ab[0];
      beta = ab[1];

      out.model.atoms.push_back(std::move(atom));
      Vector weights(out.model.atoms.size());
      weights.head(weights.size() - 1) = alpha * out.model.weights;
      weights[weights.size() - 1] = beta;
      out.model.weights = std::move(weights);
    }

    if (!out.model.atoms.empty()) {
      out.model.weights = totally_corrective(out.model, loss, lambda);
      // drop zero-weight atoms
      std::vector<SupportAtom> kept;
      std::vector<double> kept_w;
      for (std::size_t k = 0; k < out.model.atoms.size(); ++k)
        if (out.model.weights[static_cast<Index>(k)] > 0.0) {
          kept.push_back(std::move(out.model.atoms[k]));
          kept_w.push_back(out.model.weights[static_cast<Index>(k)]);
        }
      out.model.atoms = std::move(kept);
      out.model.weights = Vector::Zero(static_cast<Index>(kept_w.size()));
      for (std::size_t k = 0; k < kept_w.size(); ++k)
        out.model.weights[static_cast<Index>(k)] = kept_w[k];
    }

    w = out.model.combine(n);
    rho = out.model.rho();

    IterRecord rec;
    rec.t = t + 1;
    rec.time_s = elapsed();
    rec.objective =
        loss.value(ssdetail::as_matrix(w, rows, cols)) + lambda * rho;
    rec.rho = rho;
    rec.eta = alpha;
    rec.theta = beta;
    rec.atoms = static_cast<int>(out.model.atoms.size());
    if (std::isfinite(gap)) rec.gap = gap;
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

  out.w = ssdetail::as_matrix(w, rows, cols);
  out.objective = loss.value(out.w) + lambda * out.model.rho();
  return out;
}

/// Reconstruction loss for column/row selection: l(W) = 0.5 ||X - X W X||_F^2
/// over W of shape d x n for X of shape n x d.
class CurLoss final : public SmoothLoss {
 public:
  explicit CurLoss(Matrix x) : x_(std::move(x)) {}

  Index rows() const override { return x_.cols(); }
  Index cols() const override { return x_.rows(); }

  double value(const Matrix& w) const override {
    return 0.5 * (x_ - x_ * w * x_).squaredNorm();
  }
  Matrix grad(const Matrix& w) const override {
    return -x_.transpose() * (x_ - x_ * w * x_) * x_.transpose();
  }
  std::optional<double> lipschitz_hint() const override {
    double s = top_singular_estimate(x_, 1e-8, 2000).triple.sigma;
    return s * s * s * s;
  }

  const Matrix& x() const { return x_; }

 private:
  Matrix x_;
};

struct CurResult {
  Matrix w;  // d x n
  AtomicModel model;
  SolverTrace trace;
  std::vector<Index> selected_x_rows;  // active columns of W
  std::vector<Index> selected_x_cols;  // active rows of W
  Vector x_row_mass;                   // per X-row atom mass (length n)
  Vector x_col_mass;                   // per X-column atom mass (length d)
  double objective = 0.0;
};

/// Row/column selection via the subset-cost gauge on W: groups are the rows
/// and columns of W with unit costs (every entry belongs to exactly two
/// groups), q = 1.
inline CurResult solve_cur(const Matrix& x, double lambda,
                           const SolverOptions& opts, double eps = 1e-3,
                           const GroupPolarOptions& popts = {}) {
  if (!x.allFinite()) throw ConfigError("solve_cur: X must be finite");
  const Index n = x.rows(), d = x.cols();
  CurLoss loss(x);

  // W is d x n, flattened column-major: entry (i, j) -> i + j * d.
  std::vector<std::vector<Index>> groups;
  std::vector<double> costs;
  for (Index i = 0; i < d; ++i) {  // rows of W
    std::vector<Index> g;
    for (Index j = 0; j < n; ++j) g.push_back(i + j * d);
    groups.push_back(std::move(g));
    costs.push_back(1.0);
  }
  for (Index j = 0; j < n; ++j) {  // columns of W
    std::vector<Index> g;
    for (Index i = 0; i < d; ++i) g.push_back(i + j * d);
    groups.push_back(std::move(g));
    costs.push_back(1.0);
  }
  GroupStructure gs = GroupStructure::make(d * n, std::move(groups),
                                           std::move(costs));

  auto res = solve_structured_gcg(loss, gs, lambda, QExponent(1.0), opts, eps,
                                  popts);

  CurResult out;
  out.w = res.w;
  out.model = std::move(res.model);
  out.trace = std::move(res.trace);
  out.objective = res.objective;
  out.x_row_mass = Vector::Zero(n);
  out.x_col_mass = Vector::Zero(d);
  for (std::size_t k = 0; k < out.model.atoms.size(); ++k) {
    const auto& atom = out.model.atoms[k];
    double sigma = out.model.weights[static_cast<Index>(k)];
    for (std::size_t e = 0; e < atom.support.size(); ++e) {
      Index flat = atom.support[e];
      Index i = flat % d, j = flat / d;
      double mass = sigma * std::abs(atom.coeffs[static_cast<Index>(e)]);
      out.x_col_mass[i] += mass;  // W row i <-> X column i
      out.x_row_mass[j] += mass;  // W column j <-> X row j
    }
  }
  for (Index j = 0; j < n; ++j)
    if (out.x_row_mass[j] > 0.0) out.selected_x_rows.push_back(j);
  for (Index i = 0; i < d; ++i)
    if (out.x_col_mass[i] > 0.0) out.selected_x_cols.push_back(i);
  return out;
}

}  // namespace gcg
