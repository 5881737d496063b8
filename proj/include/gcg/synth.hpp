#pragma once

// Deterministic synthetic data generators for the experiment harness and
// tests: noisy low-rank matrices with a held-out split, and the two-view
// dictionary-learning instance with sparse gross corruption.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gcg/losses.hpp"
#include "gcg/types.hpp"

namespace gcg {

struct SynthLowrank {
  MaskedObservations obs;
  Matrix x_clean;
};

/// X = U0 V0 / sqrt(rank) with standard normal factors, a uniform mask of
/// round(obs_frac * n * m) entries, additive Gaussian noise on observed
/// values, and a 75/25 train/test split of the observed entries.
inline SynthLowrank synth_lowrank(Index n, Index m, Index rank,
                                  double obs_frac, double noise_sigma,
                                  std::uint64_t seed) {
  if (rank < 1 || rank > std::min(n, m))
    throw ConfigError("synth_lowrank: rank out of range");
  if (obs_frac <= 0.0 || obs_frac > 1.0)
    throw ConfigError("synth_lowrank: obs_frac out of range");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix u0(n, rank), v0(rank, m);
  for (Index j = 0; j < rank; ++j)
    for (Index i = 0; i < n; ++i) u0(i, j) = gauss(rng);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < rank; ++i) v0(i, j) = gauss(rng);

  SynthLowrank out;
  out.x_clean = u0 * v0 / std::sqrt(static_cast<double>(rank));

  std::vector<Index> cells(static_cast<std::size_t>(n * m));
  std::iota(cells.begin(), cells.end(), Index{0});
  std::shuffle(cells.begin(), cells.end(), rng);
  auto observed = static_cast<std::size_t>(
      std::llround(obs_frac * static_cast<double>(n * m)));
  observed = std::min(observed, cells.size());

  out.obs.n = n;
  out.obs.m = m;
  auto train_count = static_cast<std::size_t>(
      std::llround(0.75 * static_cast<double>(observed)));
  for (std::size_t k = 0; k < observed; ++k) {
    Index i = cells[k] / m;
    Index j = cells[k] % m;
    double val = out.x_clean(i, j) + noise_sigma * gauss(rng);
    if (k < train_count)
      out.obs.train.push_back({i, j, val});
    else
      out.obs.test.push_back({i, j, val});
  }
  return out;
}

struct SynthMultiview {
  Matrix x_clean;  // n1 x m
  Matrix y_clean;  // n2 x m
  Matrix x_noisy;
  Matrix y_noisy;
};

/// Planted two-view model: columns of A* uniform on the radius-beta sphere,
/// columns of B* on the radius-gamma sphere, H* standard normal; a fraction
/// of the stacked entries is replaced by Uniform[0, 10] corruption.
inline SynthMultiview synth_multiview(Index n1, Index n2, Index t_star,
                                      Index m, double corrupt_frac,
                                      std::uint64_t seed, double beta = 1.0,
                                      double gamma = 5.0) {
  if (t_star < 1) throw ConfigError("synth_multiview: t_star");
  if (corrupt_frac < 0.0 || corrupt_frac > 1.0)
    throw ConfigError("synth_multiview: corrupt_frac");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif10(0.0, 10.0);

  auto sphere_cols = [&](Index rows, Index cols, double radius) {
    Matrix a(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      Vector c(rows);
      do {
        for (Index i = 0; i < rows; ++i) c[i] = gauss(rng);
      } while (c.norm() == 0.0);
      a.col(j) = radius * c / c.norm();
    }
    return a;
  };

  Matrix a_star = sphere_cols(n1, t_star, beta);
  Matrix b_star = sphere_cols(n2, t_star, gamma);
  Matrix h_star(t_star, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < t_star; ++i) h_star(i, j) = gauss(rng);

  SynthMultiview out;
  out.x_clean = a_star * h_star;
  out.y_clean = b_star * h_star;
  out.x_noisy = out.x_clean;
  out.y_noisy = out.y_clean;

  const Index n = n1 + n2;
  std::vector<Index> cells(static_cast<std::size_t>(n * m));
  std::iota(cells.begin(), cells.end(), Index{0});
  std::shuffle(cells.begin(), cells.end(), rng);
  auto corrupted = static_cast<std::size_t>(
      std::llround(corrupt_frac * static_cast<double>(n * m)));
  for (std::size_t k = 0; k < corrupted; ++k) {
    Index i = cells[k] / m;
    Index j = cells[k] % m;
    double val = unif10(rng);
    if (i < n1)
      out.x_noisy(i, j) = val;
    else
      out.y_noisy(i - n1, j) = val;
  }
  return out;
}

struct SynthCur {
  Matrix x;  // n x d
  std::vector<Index> planted_rows;
  std::vector<Index> planted_cols;
};

/// Planted row/column-selection instance: X = L R is rank `rank`, with the
/// planted rows of L and the planted columns of R boosted so those rows and
/// columns of X carry the dominant energy; Gaussian noise added on top.
inline SynthCur synth_cur(Index n, Index d, Index rank, double boost,
                          double noise_sigma, std::uint64_t seed) {
  if (rank < 1 || rank > std::min(n, d))
    throw ConfigError("synth_cur: rank out of range");
  if (boost <= 0.0) throw ConfigError("synth_cur: boost must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix l(n, rank), r(rank, d);
  for (Index j = 0; j < rank; ++j)
    for (Index i = 0; i < n; ++i) l(i, j) = gauss(rng);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < rank; ++i) r(i, j) = gauss(rng);

  std::vector<Index> row_perm(static_cast<std::size_t>(n));
  std::iota(row_perm.begin(), row_perm.end(), Index{0});
  std::shuffle(row_perm.begin(), row_perm.end(), rng);
  std::vector<Index> col_perm(static_cast<std::size_t>(d));
  std::iota(col_perm.begin(), col_perm.end(), Index{0});
  std::shuffle(col_perm.begin(), col_perm.end(), rng);

  SynthCur out;
  for (Index k = 0; k < rank; ++k) {
    out.planted_rows.push_back(row_perm[static_cast<std::size_t>(k)]);
    out.planted_cols.push_back(col_perm[static_cast<std::size_t>(k)]);
    l.row(out.planted_rows.back()) *= boost;
    r.col(out.planted_cols.back()) *= boost;
  }
  std::sort(out.planted_rows.begin(), out.planted_rows.end());
  std::sort(out.planted_cols.begin(), out.planted_cols.end());

  out.x = l * r;
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < n; ++i) out.x(i, j) += noise_sigma * gauss(rng);
  return out;
}

}  // namespace gcg
