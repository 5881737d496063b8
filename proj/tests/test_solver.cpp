#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gcg/baselines.hpp"
#include "gcg/losses.hpp"
#include "gcg/solver.hpp"

using namespace gcg;

namespace {

Matrix random_matrix(Index r, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = gauss(rng);
  return m;
}

// Fully observed squared loss 1/2 ||X - W||_F^2 as a test workhorse.
MaskedSquaredLoss full_quadratic(const Matrix& x) {
  MaskedObservations obs;
  obs.n = x.rows();
  obs.m = x.cols();
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) obs.train.push_back({i, j, x(i, j)});
  return MaskedSquaredLoss(obs);
}

// Gauge = entrywise l1 norm; atoms are signed coordinate matrices.
struct L1Oracle final : GaugeOracle {
  PolarResult polar_atom(const Matrix& g) const override {
    Index bi = 0, bj = 0;
    double best = -1.0;
    for (Index j = 0; j < g.cols(); ++j)
      for (Index i = 0; i < g.rows(); ++i)
        if (std::abs(g(i, j)) > best) {
          best = std::abs(g(i, j));
          bi = i;
          bj = j;
        }
    PolarResult r;
    r.atom = Matrix::Zero(g.rows(), g.cols());
    r.atom(bi, bj) = g(bi, bj) >= 0 ? 1.0 : -1.0;
    r.polar_value = best;
    return r;
  }
};

struct ThrowingOracle final : GaugeOracle {
  mutable int calls = 0;
  int fail_at;
  L1Oracle inner;
  explicit ThrowingOracle(int n) : fail_at(n) {}
  PolarResult polar_atom(const Matrix& g) const override {
    if (++calls > fail_at) throw OracleFailure("synthetic failure");
    return inner.polar_atom(g);
  }
};

}  // namespace

TEST_CASE("step_open_loop values") {
  CHECK(step_open_loop(0) == 1.0);
  CHECK(step_open_loop(2) == 0.5);
  CHECK(step_open_loop(98) == Catch::Approx(0.02));
}

TEST_CASE("step_adaptive values") {
  CHECK(step_adaptive(0.0, 1.0, 4.0) == 0.0);
  CHECK(step_adaptive(2.0, 1.0, 4.0) == Catch::Approx(0.5));
  CHECK(step_adaptive(10.0, 1.0, 1.0) == 1.0);
  CHECK(step_adaptive(1.0, 1.0, 0.0) == 1.0);
}

TEST_CASE("joint_eta_theta soft-threshold closed form") {
  Matrix c = random_matrix(4, 3, 1);
  auto loss = full_quadratic(c);
  Matrix w = Matrix::Zero(4, 3);
  Matrix a = c / c.norm();
  double lambda = 0.7;
  auto [eta, theta] = joint_eta_theta(loss, w, 0.0, a, lambda);
  CHECK(theta == Catch::Approx(c.norm() - lambda).margin(1e-7));
}

TEST_CASE("joint_eta_theta with dominating regularizer adds nothing") {
  Matrix c = 0.1 * random_matrix(3, 3, 2);
  auto loss = full_quadratic(c);
  Matrix a = c / c.norm();
  auto [eta, theta] = joint_eta_theta(loss, Matrix::Zero(3, 3), 0.0, a, 10.0);
  CHECK(theta == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("joint_eta_theta beats a grid search") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    Matrix c = random_matrix(3, 4, 10 + rep);
    auto loss = full_quadratic(c);
    Matrix w = 0.5 * random_matrix(3, 4, 20 + rep);
    Matrix a = random_matrix(3, 4, 30 + rep);
    a /= a.cwiseAbs().sum();  // l1-unit atom
    double rho = w.cwiseAbs().sum() + std::abs(gauss(rng));
    double lambda = 0.4;
    auto [eta, theta] = joint_eta_theta(loss, w, rho, a, lambda);
    auto phi = [&](double e, double th) {
      return loss.value(Matrix((1.0 - e) * w + th * a)) +
             lambda * ((1.0 - e) * rho + th);
    };
    double got = phi(eta, theta);
    double theta_max = 2.0 * (c.norm() + 1.0);
    for (int i = 0; i <= 50; ++i)
      for (int j = 0; j <= 50; ++j)
        CHECK(got <= phi(i / 50.0, theta_max * j / 50.0) + 1e-8);
  }
}

TEST_CASE("run_gcg solves the scalar soft-threshold problem") {
  Matrix c(1, 1);
  c << 2.0;
  auto loss = full_quadratic(c);
  L1Oracle oracle;
  SolverOptions opts;
  opts.max_iters = 50;
  opts.step_rule = StepRule::JointLineSearch;

  auto res = run_gcg(loss, oracle, HSpec::linear(1.0), opts);
  CHECK(res.w(0, 0) == Catch::Approx(1.0).margin(1e-6));
  CHECK(res.objective == Catch::Approx(1.5).margin(1e-6));

  auto res3 = run_gcg(loss, oracle, HSpec::linear(3.0), opts);
  CHECK(res3.w(0, 0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("duality gap for the scalar indicator instance") {
  Matrix c(1, 1);
  c << 0.0;  // loss = 1/2 w^2
  auto loss = full_quadratic(c);
  L1Oracle oracle;
  auto h = HSpec::indicator(1.0);

  Matrix w0 = Matrix::Zero(1, 1);
  CHECK(duality_gap(loss, w0, 0.0, h, oracle) == Catch::Approx(0.0).margin(1e-12));

  Matrix w1(1, 1);
  w1 << 1.0;
  CHECK(duality_gap(loss, w1, 1.0, h, oracle) == Catch::Approx(2.0));
}

TEST_CASE("duality gap upper-bounds the suboptimality") {
  Matrix c = random_matrix(5, 4, 4);
  auto loss = full_quadratic(c);
  L1Oracle oracle;
  double lambda = 0.5;
  auto h = HSpec::linear(lambda);

  ApgOptions aopts;
  aopts.max_iters = 3000;
  double f_star = run_apg_l1(loss, lambda, 1.0, aopts).objective;

  // Probe points in the dual-feasible region (gradient polar <= lambda):
  // w = c - clip(c, tau) has gradient -clip(c, tau) with max norm <= lambda.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.3, 1.0);
  int finite_probes = 0;
  for (int rep = 0; rep < 100; ++rep) {
    double tau = lambda * unif(rng);
    Matrix w = c - c.cwiseMax(-tau).cwiseMin(tau);
    double rho = w.cwiseAbs().sum();
    double gap = duality_gap(loss, w, rho, h, oracle);
    double f_w = loss.value(w) + lambda * rho;
    if (std::isfinite(gap)) {
      ++finite_probes;
      CHECK(gap >= -1e-10);
      CHECK(gap >= f_w - f_star - 1e-8);
    }
  }
  CHECK(finite_probes > 0);
}

TEST_CASE("run_gcg objective is monotone with joint line search") {
  Matrix c = random_matrix(6, 5, 6);
  auto loss = full_quadratic(c);
  L1Oracle oracle;
  SolverOptions opts;
  opts.max_iters = 60;
  opts.step_rule = StepRule::JointLineSearch;
  auto res = run_gcg(loss, oracle, HSpec::linear(0.3), opts);
  for (std::size_t i = 1; i < res.trace.size(); ++i)
    CHECK(res.trace[i].objective <= res.trace[i - 1].objective + 1e-10);
}

TEST_CASE("rho upper-bounds the gauge of the iterate") {
  Matrix c = random_matrix(6, 5, 7);
  auto loss = full_quadratic(c);
  L1Oracle oracle;
  for (auto rule :
       {StepRule::OpenLoop, StepRule::Adaptive, StepRule::JointLineSearch}) {
    SolverOptions opts;
    opts.max_iters = 40;
    opts.step_rule = rule;
    auto res = run_gcg(loss, oracle, HSpec::linear(0.3), opts, nullptr,
                       [](const Matrix& w) {
                         return std::optional<double>(w.cwiseAbs().sum());
                       });
    for (const auto& rec : res.trace) {
      REQUIRE(rec.test_metric.has_value());
      CHECK(rec.rho >= *rec.test_metric - 1e-8 * std::max(1.0, rec.rho));
    }
  }
}

TEST_CASE("an improve hook that would increase the objective is rejected") {
  Matrix c = random_matrix(4, 4, 8);
  auto loss = full_quadratic(c);
  L1Oracle oracle;
  SolverOptions opts;
  opts.max_iters = 30;
  opts.step_rule = StepRule::JointLineSearch;

  auto baseline = run_gcg(loss, oracle, HSpec::linear(0.4), opts);
  auto sabotaged = run_gcg(
      loss, oracle, HSpec::linear(0.4), opts,
      [&](const Matrix& w, double rho, int) {
        return std::optional<std::pair<Matrix, double>>(
            {Matrix(w.array() + 10.0), rho});
      });
  CHECK(sabotaged.objective == Catch::Approx(baseline.objective));
  CHECK((sabotaged.w - baseline.w).norm() == 0.0);
}

TEST_CASE("a valid improve hook is accepted and helps") {
  Matrix c = random_matrix(4, 4, 9);
  auto loss = full_quadratic(c);
  L1Oracle oracle;
  double lambda = 0.4;
  SolverOptions opts;
  opts.max_iters = 10;
  opts.step_rule = StepRule::OpenLoop;

  // Hook: exact prox step from the tentative point, rho updated to the
  // resulting l1 norm (the true gauge, so the bound stays valid).
  auto hook = [&](const Matrix& w, double rho,
                  int) -> std::optional<std::pair<Matrix, double>> {
    Matrix z = prox_l1(Matrix(w - loss.grad(w)), lambda);
    return std::make_pair(z, z.cwiseAbs().sum());
  };
  auto plain = run_gcg(loss, oracle, HSpec::linear(lambda), opts);
  auto helped = run_gcg(loss, oracle, HSpec::linear(lambda), opts, hook);
  CHECK(helped.objective <= plain.objective + 1e-12);
}

TEST_CASE("indicator variant converges to the l1-ball projection") {
  Matrix c = random_matrix(3, 3, 10);
  auto loss = full_quadratic(c);
  L1Oracle oracle;
  double zeta = 0.5 * c.cwiseAbs().sum();  // constraint active

  SolverOptions opts;
  opts.max_iters = 4000;
  opts.step_rule = StepRule::Adaptive;
  auto res = run_gcg(loss, oracle, HSpec::indicator(zeta), opts);

  // Reference: Euclidean projection of c onto the l1 ball of radius zeta.
  Vector flat = c.reshaped().cwiseAbs();
  Vector proj =
      project_weighted_simplex(flat, Vector::Ones(flat.size()), zeta);
  double f_ref = 0.5 * (flat - proj).squaredNorm();
  CHECK(res.objective <= f_ref + 2e-3 * std::max(1.0, f_ref));
  CHECK(res.w.cwiseAbs().sum() <= zeta + 1e-8);
}

TEST_CASE("oracle failures carry the last good iterate") {
  Matrix c = random_matrix(3, 3, 11);
  auto loss = full_quadratic(c);
  ThrowingOracle oracle(5);
  SolverOptions opts;
  opts.max_iters = 50;
  opts.step_rule = StepRule::JointLineSearch;
  try {
    run_gcg(loss, oracle, HSpec::linear(0.2), opts);
    FAIL("expected OracleFailedAt");
  } catch (const OracleFailedAt& e) {
    CHECK(e.last.trace.size() == 5);
    CHECK(e.last.w.allFinite());
    CHECK(std::isfinite(e.last.objective));
  }
}

TEST_CASE("relative objective change stopping rule fires") {
  Matrix c = random_matrix(4, 4, 12);
  auto loss = full_quadratic(c);
  L1Oracle oracle;
  SolverOptions opts;
  opts.max_iters = 100000;
  opts.step_rule = StepRule::JointLineSearch;
  opts.rel_obj_tol = 1e-9;
  auto res = run_gcg(loss, oracle, HSpec::linear(0.3), opts);
  CHECK(res.trace.size() < 100000);
}

TEST_CASE("prox_l1 examples and KKT check") {
  Matrix z(1, 1);
  z << 2.0;
  CHECK(prox_l1(z, 0.5)(0, 0) == Catch::Approx(1.5));
  z << -0.3;
  CHECK(prox_l1(z, 0.5)(0, 0) == 0.0);

  Matrix r = random_matrix(6, 1, 13);
  double tau = 0.4;
  Matrix p = prox_l1(r, tau);
  for (Index i = 0; i < 6; ++i) {
    // Per-coordinate candidates: z - tau, z + tau, 0.
    auto obj = [&](double w) {
      return 0.5 * (w - r(i, 0)) * (w - r(i, 0)) + tau * std::abs(w);
    };
    double best = std::min({obj(r(i, 0) - tau), obj(r(i, 0) + tau), obj(0.0)});
    CHECK(obj(p(i, 0)) == Catch::Approx(best).margin(1e-12));
  }
}

TEST_CASE("prox_l1 is nonexpansive") {
  for (int rep = 0; rep < 10; ++rep) {
    Matrix x = random_matrix(5, 3, 40 + rep);
    Matrix y = random_matrix(5, 3, 60 + rep);
    CHECK((prox_l1(x, 0.7) - prox_l1(y, 0.7)).norm() <=
          (x - y).norm() + 1e-10);
  }
}

TEST_CASE("prox_trace examples") {
  Matrix z = Matrix::Zero(2, 2);
  z(0, 0) = 3.0;
  z(1, 1) = 1.0;
  Matrix p = prox_trace(z, 1.0);
  CHECK(p(0, 0) == Catch::Approx(2.0).margin(1e-12));
  CHECK(p(1, 1) == Catch::Approx(0.0).margin(1e-12));

  Matrix r = random_matrix(5, 4, 14);
  CHECK((prox_trace(r, 0.0) - r).norm() < 1e-10);
}

TEST_CASE("prox_trace satisfies subgradient optimality") {
  Matrix z = random_matrix(10, 8, 15);
  double tau = 0.9;
  Matrix w = prox_trace(z, tau);
  // Optimality: z - w in tau * subdifferential of the trace norm at w.
  auto wsvd = svd_small(w);
  Matrix diff = z - w;
  // Spectral norm of the residual must be <= tau.
  CHECK(svd_small(diff).sigma[0] <= tau + 1e-8);
  // On the row/column space of w the residual equals tau * u v^T.
  Index rank = 0;
  while (rank < wsvd.sigma.size() && wsvd.sigma[rank] > 1e-10) ++rank;
  for (Index i = 0; i < rank; ++i) {
    double val = wsvd.u.col(i).dot(diff * wsvd.v.col(i));
    CHECK(val == Catch::Approx(tau).margin(1e-8));
  }
}

TEST_CASE("prox_trace is nonexpansive") {
  for (int rep = 0; rep < 10; ++rep) {
    Matrix x = random_matrix(6, 5, 80 + rep);
    Matrix y = random_matrix(6, 5, 90 + rep);
    CHECK((prox_trace(x, 0.6) - prox_trace(y, 0.6)).norm() <=
          (x - y).norm() + 1e-10);
  }
}

TEST_CASE("run_apg solves the scalar soft-threshold problem") {
  Matrix c(1, 1);
  c << 2.0;
  auto loss = full_quadratic(c);
  ApgOptions opts;
  opts.max_iters = 100;
  auto res = run_apg_l1(loss, 1.0, 1.0, opts);
  CHECK(res.w(0, 0) == Catch::Approx(1.0).margin(1e-10));

  auto res3 = run_apg_l1(loss, 3.0, 1.0, opts);
  CHECK(res3.w(0, 0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("run_apg objective is monotone") {
  Matrix c = random_matrix(8, 6, 16);
  auto loss = full_quadratic(c);
  ApgOptions opts;
  opts.max_iters = 200;
  auto res = run_apg_trace(loss, 0.5, 1.0, opts);
  for (std::size_t i = 1; i < res.trace.size(); ++i)
    CHECK(res.trace[i].objective <= res.trace[i - 1].objective + 1e-12);
}

TEST_CASE("gcg and apg agree on an l1-regularized quadratic") {
  Matrix c = random_matrix(6, 6, 17);
  auto loss = full_quadratic(c);
  double lambda = 0.35;

  L1Oracle oracle;
  SolverOptions gopts;
  gopts.max_iters = 2000;
  gopts.step_rule = StepRule::JointLineSearch;
  auto g = run_gcg(loss, oracle, HSpec::linear(lambda), gopts);

  ApgOptions aopts;
  aopts.max_iters = 3000;
  auto a = run_apg_l1(loss, lambda, 1.0, aopts);

  CHECK(std::abs(g.objective - a.objective) <=
        1e-3 * std::max(1.0, std::abs(a.objective)));
}
