#pragma once

#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "airfl/data.hpp"
#include "airfl/rng.hpp"

namespace airfl::tasks {

using data::Dataset;

struct OptimumInfo {
  double f_star = 0.0;
  Eigen::VectorXd w_star;
  double smoothness = 0.0;  // exact L when known
};

// Pluggable learning task: loss and stochastic gradient over an index batch,
// plus classification accuracy. Implementations must be pure in (w, batch).
class LearningTask {
 public:
  virtual ~LearningTask() = default;
  virtual int dim() const = 0;
  virtual double loss(const Eigen::VectorXd& w, const Dataset& ds,
                      std::span<const int> batch) const = 0;
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& w, const Dataset& ds,
                                   std::span<const int> batch) const = 0;
  virtual double accuracy(const Eigen::VectorXd& w, const Dataset& ds) const = 0;
  virtual std::optional<OptimumInfo> optimum() const { return std::nullopt; }
};

inline std::vector<int> all_indices(const Dataset& ds) {
  std::vector<int> idx(ds.size());
  for (int i = 0; i < ds.size(); ++i) idx[i] = i;
  return idx;
}

namespace detail {

inline bool is_identity_batch(std::span<const int> batch, const Dataset& ds) {
  if (static_cast<int>(batch.size()) != ds.size()) return false;
  for (int i = 0; i < ds.size(); ++i)
    if (batch[i] != i) return false;
  return true;
}

// Batch-mean softmax cross entropy from precomputed logits (classes x B).
template <typename LabelAt>
inline double softmax_xent(const Eigen::MatrixXd& Z, LabelAt label_at) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < Z.cols(); ++i) {
    const auto col = Z.col(i);
    const double zmax = col.maxCoeff();
    const double lse = zmax + std::log((col.array() - zmax).exp().sum());
    total += lse - col[label_at(i)];
  }
  return total / static_cast<double>(Z.cols());
}

}  // namespace detail

// ---- quadratic: F(w) = 0.5 * ||w - w*||^2 ----------------------------------
//
// Data-free oracle task with F* = 0 and smoothness exactly 1; the gradient
// ignores the batch, so the mini-batch variance is exactly zero.
class QuadraticTask final : public LearningTask {
 public:
  explicit QuadraticTask(Eigen::VectorXd w_star) : w_star_(std::move(w_star)) {}

  int dim() const override { return static_cast<int>(w_star_.size()); }

  double loss(const Eigen::VectorXd& w, const Dataset&,
              std::span<const int>) const override {
    return 0.5 * (w - w_star_).squaredNorm();
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& w, const Dataset&,
                           std::span<const int>) const override {
    return w - w_star_;
  }

  double accuracy(const Eigen::VectorXd&, const Dataset&) const override {
    return 0.0;  // not a classifier
  }

  std::optional<OptimumInfo> optimum() const override {
    return OptimumInfo{0.0, w_star_, 1.0};
  }

 private:
  Eigen::VectorXd w_star_;
};

inline std::shared_ptr<LearningTask> quadratic_task(int d) {
  auto g = rng::substream(0xA1F1u, rng::Stream::model_init);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::VectorXd w_star(d);
  for (int i = 0; i < d; ++i) w_star[i] = n01(g);
  return std::make_shared<QuadraticTask>(std::move(w_star));
}

inline std::shared_ptr<LearningTask> quadratic_task(Eigen::VectorXd w_star) {
  return std::make_shared<QuadraticTask>(std::move(w_star));
}

// ---- multinomial logistic regression ---------------------------------------
//
// Parameter layout: row-major W (classes x features) followed by the bias
// vector (classes). Loss is the batch-mean cross entropy.
class LogisticTask final : public LearningTask {
 public:
  LogisticTask(int n_features, int n_classes)
      : n_(n_features), c_(n_classes) {}

  int dim() const override { return c_ * n_ + c_; }

  double loss(const Eigen::VectorXd& w, const Dataset& ds,
              std::span<const int> batch) const override {
    const auto [W, b] = unpack(w);
    if (detail::is_identity_batch(batch, ds)) {
      Eigen::MatrixXd Z = (W * ds.inputs).colwise() + b;
      return detail::softmax_xent(Z, [&](Eigen::Index i) { return ds.labels[i]; });
    }
    const int B = static_cast<int>(batch.size());
    Eigen::MatrixXd X(n_, B);
    for (int i = 0; i < B; ++i) X.col(i) = ds.inputs.col(batch[i]);
    Eigen::MatrixXd Z = (W * X).colwise() + b;
    return detail::softmax_xent(
        Z, [&](Eigen::Index i) { return ds.labels[batch[i]]; });
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& w, const Dataset& ds,
                           std::span<const int> batch) const override {
    const auto [W, b] = unpack(w);
    const int B = static_cast<int>(batch.size());
    Eigen::MatrixXd X(n_, B);
    for (int i = 0; i < B; ++i) X.col(i) = ds.inputs.col(batch[i]);

    Eigen::MatrixXd Z = (W * X).colwise() + b;  // c x B
    for (int i = 0; i < B; ++i) {
      Eigen::VectorXd col = Z.col(i);
      const double zmax = col.maxCoeff();
      Eigen::VectorXd p = (col.array() - zmax).exp();
      p /= p.sum();
      p[ds.labels[batch[i]]] -= 1.0;
      Z.col(i) = p;
    }
    Eigen::MatrixXd GW = Z * X.transpose() / B;  // c x n
    Eigen::VectorXd gb = Z.rowwise().mean();

    Eigen::VectorXd g(dim());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>(g.data(), c_, n_) = GW;
    g.tail(c_) = gb;
    return g;
  }

  double accuracy(const Eigen::VectorXd& w, const Dataset& ds) const override {
    const auto [W, b] = unpack(w);
    Eigen::MatrixXd Z = (W * ds.inputs).colwise() + b;
    long correct = 0;
    for (int i = 0; i < ds.size(); ++i) {
      Eigen::Index arg;
      Z.col(i).maxCoeff(&arg);
      if (static_cast<int>(arg) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / ds.size();
  }

 private:
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> unpack(
      const Eigen::VectorXd& w) const {
    Eigen::MatrixXd W =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>(w.data(), c_, n_);
    Eigen::VectorXd b = w.tail(c_);
    return {std::move(W), std::move(b)};
  }

  int n_, c_;
};

inline std::shared_ptr<LearningTask> logistic_task(int n_features,
                                                   int n_classes) {
  return std::make_shared<LogisticTask>(n_features, n_classes);
}

// ---- one-hidden-layer MLP (tanh / softmax) ---------------------------------
//
// Layout: row-major W1 (hidden x features), b1, row-major W2 (classes x
// hidden), b2. tanh keeps the loss smooth enough for finite-difference
// gradient checks.
class TinyMlpTask final : public LearningTask {
 public:
  TinyMlpTask(int n_features, int hidden, int n_classes)
      : n_(n_features), h_(hidden), c_(n_classes) {
    if (hidden < 1 || hidden > 64)
      throw std::invalid_argument("hidden size must lie in [1,64]");
  }

  int dim() const override { return h_ * n_ + h_ + c_ * h_ + c_; }

  double loss(const Eigen::VectorXd& w, const Dataset& ds,
              std::span<const int> batch) const override {
    const Params p = unpack(w);
    if (detail::is_identity_batch(batch, ds)) {
      Eigen::MatrixXd A = ((p.W1 * ds.inputs).colwise() + p.b1).array().tanh();
      Eigen::MatrixXd Z = (p.W2 * A).colwise() + p.b2;
      return detail::softmax_xent(Z, [&](Eigen::Index i) { return ds.labels[i]; });
    }
    const int B = static_cast<int>(batch.size());
    Eigen::MatrixXd X(n_, B);
    for (int i = 0; i < B; ++i) X.col(i) = ds.inputs.col(batch[i]);
    Eigen::MatrixXd A = ((p.W1 * X).colwise() + p.b1).array().tanh();
    Eigen::MatrixXd Z = (p.W2 * A).colwise() + p.b2;
    return detail::softmax_xent(
        Z, [&](Eigen::Index i) { return ds.labels[batch[i]]; });
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& w, const Dataset& ds,
                           std::span<const int> batch) const override {
    const Params p = unpack(w);
    const int B = static_cast<int>(batch.size());
    Eigen::MatrixXd X(n_, B);
    for (int i = 0; i < B; ++i) X.col(i) = ds.inputs.col(batch[i]);

    Eigen::MatrixXd A = ((p.W1 * X).colwise() + p.b1).array().tanh();  // h x B
    Eigen::MatrixXd Z = (p.W2 * A).colwise() + p.b2;                   // c x B
    for (int i = 0; i < B; ++i) {
      Eigen::VectorXd col = Z.col(i);
      const double zmax = col.maxCoeff();
      Eigen::VectorXd q = (col.array() - zmax).exp();
      q /= q.sum();
      q[ds.labels[batch[i]]] -= 1.0;
      Z.col(i) = q;  // dL/dz
    }
    Eigen::MatrixXd GW2 = Z * A.transpose() / B;
    Eigen::VectorXd gb2 = Z.rowwise().mean();
    Eigen::MatrixXd D = (p.W2.transpose() * Z).cwiseProduct(
        (1.0 - A.array().square()).matrix());  // h x B
    Eigen::MatrixXd GW1 = D * X.transpose() / B;
    Eigen::VectorXd gb1 = D.rowwise().mean();

    Eigen::VectorXd g(dim());
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>;
    Eigen::Map<RowMat>(g.data(), h_, n_) = GW1;
    g.segment(h_ * n_, h_) = gb1;
    Eigen::Map<RowMat>(g.data() + h_ * n_ + h_, c_, h_) = GW2;
    g.tail(c_) = gb2;
    return g;
  }

  double accuracy(const Eigen::VectorXd& w, const Dataset& ds) const override {
    const Params p = unpack(w);
    Eigen::MatrixXd A = ((p.W1 * ds.inputs).colwise() + p.b1).array().tanh();
    Eigen::MatrixXd Z = (p.W2 * A).colwise() + p.b2;
    long correct = 0;
    for (int i = 0; i < ds.size(); ++i) {
      Eigen::Index arg;
      Z.col(i).maxCoeff(&arg);
      if (static_cast<int>(arg) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / ds.size();
  }

 private:
  struct Params {
    Eigen::MatrixXd W1, W2;
    Eigen::VectorXd b1, b2;
  };

  Params unpack(const Eigen::VectorXd& w) const {
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>;
    Params p;
    p.W1 = Eigen::Map<const RowMat>(w.data(), h_, n_);
    p.b1 = w.segment(h_ * n_, h_);
    p.W2 = Eigen::Map<const RowMat>(w.data() + h_ * n_ + h_, c_, h_);
    p.b2 = w.tail(c_);
    return p;
  }

  int n_, h_, c_;
};

inline std::shared_ptr<LearningTask> tiny_mlp_task(int n_features, int hidden,
                                                   int n_classes) {
  return std::make_shared<TinyMlpTask>(n_features, hidden, n_classes);
}

}  // namespace airfl::tasks
