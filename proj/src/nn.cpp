#include "commbot/nn.hpp"

#include <cmath>

#include "commbot/error.hpp"

namespace commbot {

using nlohmann::json;

namespace {
constexpr double kHiddenSlope = 0.01;

void init_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
}
void init_uniform(Vector& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
}
}  // namespace

void Adam::step(Vector& params, const Vector& grads) {
  if (m_.size() != params.size()) {
    m_ = Vector::Zero(params.size());
    v_ = Vector::Zero(params.size());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grads[i] + wd_ * params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

Matrix softmax_rows(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const auto e = (z.row(i).array() - m).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

DenseHead::DenseHead(Eigen::Index input_dim, Eigen::Index hidden_dim, std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  if (input_dim < 1 || hidden_dim < 0) fail(ErrorKind::dimension, "invalid head dimensions");
  std::mt19937_64 rng(seed);
  const Eigen::Index out_in = hidden_dim > 0 ? hidden_dim : input_dim;
  if (hidden_dim > 0) {
    W1.resize(hidden_dim, input_dim);
    b1.resize(hidden_dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
    init_uniform(W1, bound, rng);
    init_uniform(b1, bound, rng);
  }
  W2.resize(2, out_in);
  b2.resize(2);
  const double bound = 1.0 / std::sqrt(static_cast<double>(out_in));
  init_uniform(W2, bound, rng);
  init_uniform(b2, bound, rng);
}

Matrix DenseHead::logits(const RowMatrix& X) const {
  if (X.cols() != input_dim_) fail(ErrorKind::dimension, "head input has wrong width");
  if (hidden_dim_ == 0) return (X * W2.transpose()).rowwise() + b2.transpose();
  Matrix h = (X * W1.transpose()).rowwise() + b1.transpose();
  h = h.unaryExpr([](double v) { return leaky_relu(v, kHiddenSlope); });
  return (h * W2.transpose()).rowwise() + b2.transpose();
}

LogitPair DenseHead::predict(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) != input_dim_) fail(ErrorKind::dimension, "head input has wrong length");
  const Eigen::Map<const RowMatrix> row(x.data(), 1, input_dim_);
  const Matrix z = logits(row);
  return {z(0, 0), z(0, 1)};
}

Matrix DenseHead::forward(const RowMatrix& X, double dropout, std::mt19937_64* rng, Tape& tape) const {
  if (X.cols() != input_dim_) fail(ErrorKind::dimension, "head input has wrong width");
  if (hidden_dim_ == 0) return (X * W2.transpose()).rowwise() + b2.transpose();
  tape.hidden_pre = (X * W1.transpose()).rowwise() + b1.transpose();
  tape.hidden_act = tape.hidden_pre.unaryExpr([](double v) { return leaky_relu(v, kHiddenSlope); });
  tape.mask.resize(0, 0);
  if (dropout > 0.0 && rng != nullptr) {
    std::bernoulli_distribution keep(1.0 - dropout);
    tape.mask.resize(tape.hidden_act.rows(), tape.hidden_act.cols());
    for (Eigen::Index i = 0; i < tape.mask.size(); ++i) tape.mask.data()[i] = keep(*rng) ? 1.0 / (1.0 - dropout) : 0.0;
    tape.hidden_act = tape.hidden_act.cwiseProduct(tape.mask);
  }
  return (tape.hidden_act * W2.transpose()).rowwise() + b2.transpose();
}

Vector DenseHead::backward(const RowMatrix& X, const Tape& tape, const Matrix& dlogits) const {
  Vector g(parameter_count());
  Eigen::Index off = 0;
  if (hidden_dim_ == 0) {
    const Matrix dW2 = dlogits.transpose() * X;
    g.segment(off, dW2.size()) = Eigen::Map<const Vector>(dW2.data(), dW2.size());
    off += dW2.size();
    g.segment(off, 2) = dlogits.colwise().sum().transpose();
    return g;
  }
  Matrix dh = dlogits * W2;
  if (tape.mask.size() > 0) dh = dh.cwiseProduct(tape.mask);
  const Matrix dpre = dh.cwiseProduct(tape.hidden_pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kHiddenSlope; }));
  const Matrix dW1 = dpre.transpose() * X;
  g.segment(off, dW1.size()) = Eigen::Map<const Vector>(dW1.data(), dW1.size());
  off += dW1.size();
  g.segment(off, hidden_dim_) = dpre.colwise().sum().transpose();
  off += hidden_dim_;
  const Matrix dW2 = dlogits.transpose() * tape.hidden_act;
  g.segment(off, dW2.size()) = Eigen::Map<const Vector>(dW2.data(), dW2.size());
  off += dW2.size();
  g.segment(off, 2) = dlogits.colwise().sum().transpose();
  return g;
}

Eigen::Index DenseHead::parameter_count() const { return W1.size() + b1.size() + W2.size() + b2.size(); }

Vector DenseHead::parameters() const {
  Vector p(parameter_count());
  Eigen::Index off = 0;
  p.segment(off, W1.size()) = Eigen::Map<const Vector>(W1.data(), W1.size());
  off += W1.size();
  p.segment(off, b1.size()) = b1;
  off += b1.size();
  p.segment(off, W2.size()) = Eigen::Map<const Vector>(W2.data(), W2.size());
  off += W2.size();
  p.segment(off, b2.size()) = b2;
  return p;
}

void DenseHead::set_parameters(const Vector& flat) {
  if (flat.size() != parameter_count()) fail(ErrorKind::dimension, "parameter vector has wrong length");
  Eigen::Index off = 0;
  W1 = Eigen::Map<const Matrix>(flat.data() + off, W1.rows(), W1.cols());
  off += W1.size();
  b1 = flat.segment(off, b1.size());
  off += b1.size();
  W2 = Eigen::Map<const Matrix>(flat.data() + off, W2.rows(), W2.cols());
  off += W2.size();
  b2 = flat.segment(off, b2.size());
}

json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    fail(ErrorKind::dimension, "matrix shape does not match its data");
  for (double v : data)
    if (!std::isfinite(v)) fail(ErrorKind::invariant_violation, "non-finite parameter");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  for (double v : data)
    if (!std::isfinite(v)) fail(ErrorKind::invariant_violation, "non-finite parameter");
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json to_json(const DenseHead& h) {
  return {{"input_dim", h.input_dim()}, {"hidden_dim", h.hidden_dim()}, {"W1", matrix_to_json(h.W1)},
          {"b1", vector_to_json(h.b1)}, {"W2", matrix_to_json(h.W2)},       {"b2", vector_to_json(h.b2)}};
}

DenseHead dense_head_from_json(const json& j) {
  DenseHead h(j.at("input_dim").get<Eigen::Index>(), j.at("hidden_dim").get<Eigen::Index>(), 0);
  const Matrix W1 = matrix_from_json(j.at("W1"));
  const Vector b1 = vector_from_json(j.at("b1"));
  const Matrix W2 = matrix_from_json(j.at("W2"));
  const Vector b2 = vector_from_json(j.at("b2"));
  if (W1.rows() != h.W1.rows() || W1.cols() != h.W1.cols() || b1.size() != h.b1.size() || W2.rows() != h.W2.rows() ||
      W2.cols() != h.W2.cols() || b2.size() != h.b2.size())
    fail(ErrorKind::dimension, "head parameter shapes are inconsistent");
  h.W1 = W1;
  h.b1 = b1;
  h.W2 = W2;
  h.b2 = b2;
  return h;
}

RowMatrix stack_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return RowMatrix(0, 0);
  RowMatrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) fail(ErrorKind::dimension, "ragged rows");
    X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const RowVector>(rows[i].data(), X.cols());
  }
  return X;
}

RowMatrix gather_rows(const RowMatrix& X, std::span<const int> rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return out;
}

Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace commbot
