#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "commbot/linalg.hpp"
#include "commbot/types.hpp"

namespace commbot {

/// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// grads must not yet include the weight-decay term.
  void step(Vector& params, const Vector& grads);

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  Vector m_, v_;
  long t_ = 0;
};

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

/// Row-wise softmax of an n x 2 logit matrix.
Matrix softmax_rows(const Matrix& logits);

/// Affine map to two logits, optionally through one leaky-ReLU hidden layer.
class DenseHead {
 public:
  DenseHead() = default;
  DenseHead(Eigen::Index input_dim, Eigen::Index hidden_dim, std::uint64_t seed);

  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index hidden_dim() const { return hidden_dim_; }

  /// Inference-mode logits for every row of X (n x 2).
  Matrix logits(const RowMatrix& X) const;
  LogitPair predict(std::span<const double> x) const;

  /// Training forward/backward. `dropout` applies to the hidden layer only.
  /// Returns logits; `backward` consumes dL/dlogits and returns the flat gradient.
  struct Tape {
    Matrix hidden_pre;
    Matrix hidden_act;
    Matrix mask;
  };
  Matrix forward(const RowMatrix& X, double dropout, std::mt19937_64* rng, Tape& tape) const;
  Vector backward(const RowMatrix& X, const Tape& tape, const Matrix& dlogits) const;

  Vector parameters() const;
  void set_parameters(const Vector& flat);
  Eigen::Index parameter_count() const;

  // Parameters; when hidden_dim == 0, W1/b1 are empty and W2 is 2 x input_dim.
  Matrix W1;
  Vector b1;
  Matrix W2;
  Vector b2;

 private:
  Eigen::Index input_dim_ = 0;
  Eigen::Index hidden_dim_ = 0;
};

nlohmann::json to_json(const DenseHead& h);
DenseHead dense_head_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

/// Stacks rows (each of equal length) into a row-major matrix.
RowMatrix stack_rows(const std::vector<std::vector<double>>& rows);
RowMatrix gather_rows(const RowMatrix& X, std::span<const int> rows);

/// Central finite-difference gradient of f at x.
Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6);

}  // namespace commbot
