#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct NonConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OracleFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateNullspace : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RequiresExactFallback : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Triplet {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
};

/// Sparse matrix stored as explicit (row, col, value) triples.
/// Indices must be in range and (row, col) pairs unique.
struct TripletMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<Triplet> triples;

  TripletMatrix() = default;
  TripletMatrix(Index r, Index c) : rows(r), cols(c) {}

  void check() const {
    for (const auto& t : triples) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
        throw ShapeMismatch("TripletMatrix: index out of range");
      if (!std::isfinite(t.value))
        throw ShapeMismatch("TripletMatrix: non-finite value");
    }
  }

  Vector apply(const Vector& x) const {
    Vector y = Vector::Zero(rows);
    for (const auto& t : triples) y[t.row] += t.value * x[t.col];
    return y;
  }

  Vector apply_transpose(const Vector& x) const {
    Vector y = Vector::Zero(cols);
    for (const auto& t : triples) y[t.col] += t.value * x[t.row];
    return y;
  }

  Matrix dense() const {
    Matrix m = Matrix::Zero(rows, cols);
    for (const auto& t : triples) m(t.row, t.col) = t.value;
    return m;
  }
};

}  // namespace gcg
