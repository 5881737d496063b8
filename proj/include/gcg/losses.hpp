#pragma once

// Smooth losses behind one interface: masked squared error for matrix
// completion, multinomial logistic with an exact Hessian-vector product,
// and a Huber-smoothed entrywise l1.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "gcg/types.hpp"

namespace gcg {

/// Smooth function of a matrix variable. Implementations are immutable after
/// construction; value/grad may be called concurrently.
class SmoothLoss {
 public:
  virtual ~SmoothLoss() = default;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual double value(const Matrix& w) const = 0;
  virtual Matrix grad(const Matrix& w) const = 0;
  virtual std::optional<double> lipschitz_hint() const { return std::nullopt; }
};

struct MaskedObservations {
  Index n = 0;
  Index m = 0;
  std::vector<Triplet> train;
  std::vector<Triplet> test;

  void check() const {
    auto in_range = [&](const Triplet& t) {
      return t.row >= 0 && t.row < n && t.col >= 0 && t.col < m;
    };
    for (const auto& t : train)
      if (!in_range(t)) throw ShapeMismatch("MaskedObservations: train index");
    for (const auto& t : test)
      if (!in_range(t)) throw ShapeMismatch("MaskedObservations: test index");
  }
};

/// ½ sum over observed (i,j) of (X_ij - W_ij)^2. Gradient is supported on the
/// mask. The factored path evaluates (U V)_ij only at observed entries.
class MaskedSquaredLoss final : public SmoothLoss {
 public:
  explicit MaskedSquaredLoss(MaskedObservations obs) : obs_(std::move(obs)) {
    obs_.check();
  }

  Index rows() const override { return obs_.n; }
  Index cols() const override { return obs_.m; }

  double value(const Matrix& w) const override {
    check_shape(w);
    double s = 0.0;
    for (const auto& t : obs_.train) {
      double r = w(t.row, t.col) - t.value;
      s += r * r;
    }
    return 0.5 * s;
  }

  Matrix grad(const Matrix& w) const override {
    check_shape(w);
    Matrix g = Matrix::Zero(obs_.n, obs_.m);
    for (const auto& t : obs_.train)
      g(t.row, t.col) = w(t.row, t.col) - t.value;
    return g;
  }

  std::optional<double> lipschitz_hint() const override { return 1.0; }

  /// Residual on the mask for W = U V, without forming U V.
  TripletMatrix residual_factored(const Matrix& u, const Matrix& v) const {
    if (u.rows() != obs_.n || v.cols() != obs_.m || u.cols() != v.rows())
      throw ShapeMismatch("MaskedSquaredLoss: factored shapes");
    TripletMatrix r(obs_.n, obs_.m);
    r.triples.reserve(obs_.train.size());
    for (const auto& t : obs_.train) {
      double pred = u.row(t.row).dot(v.col(t.col));
      r.triples.push_back({t.row, t.col, pred - t.value});
    }
    return r;
  }

  /// Loss and gradients with respect to the factors of W = U V.
  double value_grad_factored(const Matrix& u, const Matrix& v, Matrix& gu,
                             Matrix& gv) const {
    TripletMatrix r = residual_factored(u, v);
    double s = 0.0;
    gu = Matrix::Zero(u.rows(), u.cols());
    gv = Matrix::Zero(v.rows(), v.cols());
    for (const auto& t : r.triples) {
      s += t.value * t.value;
      gu.row(t.row) += t.value * v.col(t.col).transpose();
      gv.col(t.col) += t.value * u.row(t.row).transpose();
    }
    return 0.5 * s;
  }

  /// Root mean squared error on the held-out triples; nullopt if none.
  std::optional<double> test_rmse(const Matrix& u, const Matrix& v) const {
    if (obs_.test.empty()) return std::nullopt;
    double s = 0.0;
    for (const auto& t : obs_.test) {
      double r = u.row(t.row).dot(v.col(t.col)) - t.value;
      s += r * r;
    }
    return std::sqrt(s / static_cast<double>(obs_.test.size()));
  }

  const MaskedObservations& observations() const { return obs_; }

 private:
  void check_shape(const Matrix& w) const {
    if (w.rows() != obs_.n || w.cols() != obs_.m)
      throw ShapeMismatch("MaskedSquaredLoss: point shape");
  }
  MaskedObservations obs_;
};

struct LabeledDesign {
  Matrix x;                 // n x m, columns are examples
  std::vector<int> labels;  // size m, values in [0, classes)
  int classes = 0;

  void check() const {
    if (x.cols() < 1) throw ShapeMismatch("LabeledDesign: no examples");
    if (static_cast<Index>(labels.size()) != x.cols())
      throw ShapeMismatch("LabeledDesign: label count");
    for (int c : labels)
      if (c < 0 || c >= classes) throw ShapeMismatch("LabeledDesign: label");
  }
};

/// Average multinomial negative log-likelihood over W (n x C). Probabilities
/// use a max-shifted log-sum-exp.
class MulticlassLogisticLoss final : public SmoothLoss {
 public:
  explicit MulticlassLogisticLoss(LabeledDesign data) : data_(std::move(data)) {
    data_.check();
  }

  Index rows() const override { return data_.x.rows(); }
  Index cols() const override { return data_.classes; }

  // Class scores for all examples: C x m.
  Matrix scores(const Matrix& w) const {
    check_shape(w);
    return w.transpose() * data_.x;
  }

  // Softmax over classes, one column per example: C x m.
  Matrix probabilities(const Matrix& w) const {
    Matrix z = scores(w);
    for (Index j = 0; j < z.cols(); ++j) {
      double mx = z.col(j).maxCoeff();
      z.col(j) = (z.col(j).array() - mx).exp();
      z.col(j) /= z.col(j).sum();
    }
    return z;
  }

  double value(const Matrix& w) const override {
    Matrix z = scores(w);
    const Index m = z.cols();
    double total = 0.0;
    for (Index j = 0; j < m; ++j) {
      double mx = z.col(j).maxCoeff();
      double lse = mx + std::log((z.col(j).array() - mx).exp().sum());
      total += lse - z(data_.labels[static_cast<std::size_t>(j)], j);
    }
    return total / static_cast<double>(m);
  }

  Matrix grad(const Matrix& w) const override {
    Matrix p = probabilities(w);
    for (Index j = 0; j < p.cols(); ++j)
      p(data_.labels[static_cast<std::size_t>(j)], j) -= 1.0;
    return data_.x * p.transpose() / static_cast<double>(p.cols());
  }

  /// Hessian-vector product at w applied to direction d (both n x C).
  Matrix hvp(const Matrix& w, const Matrix& d) const {
    check_shape(w);
    if (d.rows() != w.rows() || d.cols() != w.cols())
      throw ShapeMismatch("MulticlassLogisticLoss: hvp direction shape");
    Matrix p = probabilities(w);                      // C x m
    Matrix r = d.transpose() * data_.x;               // C x m
    Matrix s = p.cwiseProduct(r);                     // C x m
    Eigen::RowVectorXd col_sums = s.colwise().sum();  // 1 x m
    Matrix j = s - p.cwiseProduct(
                       Matrix(Vector::Ones(p.rows()) * col_sums));
    return data_.x * j.transpose() / static_cast<double>(p.cols());
  }

  /// Misclassification rate on (points, labels) packed in a LabeledDesign.
  double error_rate(const Matrix& w, const LabeledDesign& eval) const {
    Matrix z = w.transpose() * eval.x;
    Index wrong = 0;
    for (Index j = 0; j < z.cols(); ++j) {
      Index best;
      z.col(j).maxCoeff(&best);
      if (static_cast<int>(best) != eval.labels[static_cast<std::size_t>(j)])
        ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(z.cols());
  }

  const LabeledDesign& data() const { return data_; }

 private:
  void check_shape(const Matrix& w) const {
    if (w.rows() != data_.x.rows() || w.cols() != data_.classes)
      throw ShapeMismatch("MulticlassLogisticLoss: point shape");
  }
  LabeledDesign data_;
};

/// Entrywise Huber smoothing of ||W - target||_1 with parameter mu.
class SmoothedL1Loss final : public SmoothLoss {
 public:
  explicit SmoothedL1Loss(Matrix target, double mu = 1e-4)
      : target_(std::move(target)), mu_(mu) {
    if (mu_ <= 0) throw ConfigError("SmoothedL1Loss: mu must be positive");
  }

  Index rows() const override { return target_.rows(); }
  Index cols() const override { return target_.cols(); }

  double value(const Matrix& w) const override {
    check_shape(w);
    double s = 0.0;
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) {
        double z = std::abs(w(i, j) - target_(i, j));
        s += z <= mu_ ? z * z / (2.0 * mu_) : z - mu_ / 2.0;
      }
    return s;
  }

  Matrix grad(const Matrix& w) const override {
    check_shape(w);
    Matrix g = (w - target_) / mu_;
    return g.cwiseMax(-1.0).cwiseMin(1.0);
  }

  std::optional<double> lipschitz_hint() const override { return 1.0 / mu_; }

  double mu() const { return mu_; }
  const Matrix& target() const { return target_; }

 private:
  void check_shape(const Matrix& w) const {
    if (w.rows() != target_.rows() || w.cols() != target_.cols())
      throw ShapeMismatch("SmoothedL1Loss: point shape");
  }
  Matrix target_;
  double mu_;
};

inline MaskedSquaredLoss masked_squared(MaskedObservations obs) {
  return MaskedSquaredLoss(std::move(obs));
}
inline MulticlassLogisticLoss multiclass_logistic(LabeledDesign data) {
  return MulticlassLogisticLoss(std::move(data));
}
inline SmoothedL1Loss smoothed_l1(Matrix target, double mu = 1e-4) {
  return SmoothedL1Loss(std::move(target), mu);
}

}  // namespace gcg
