#include <cmath>
#include <random>

#include "commbot/tabular.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace commbot;

namespace {

std::span<const double> row(const RowMatrix& X, Eigen::Index i) {
  return {X.row(i).data(), static_cast<std::size_t>(X.cols())};
}

template <class Model>
double train_accuracy(const Model& m, const RowMatrix& X, const std::vector<Label>& y) {
  int ok = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) ok += softmax(predict_tabular(m, row(X, i))).argmax() == y[static_cast<std::size_t>(i)];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

DecisionTree leaf_tree(double human, double bot) {
  DecisionTree t;
  TreeNode n;
  n.counts = {human, bot};
  t.nodes.push_back(n);
  return t;
}

// Jittered 2-D XOR: four clusters, label = bot when exactly one coordinate is positive.
void xor_data(RowMatrix& X, std::vector<Label>& y) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> jitter(0.0, 0.15);
  const int per = 10;
  X.resize(4 * per, 2);
  y.clear();
  int r = 0;
  for (int cx : {-1, 1})
    for (int cy : {-1, 1})
      for (int k = 0; k < per; ++k, ++r) {
        X(r, 0) = cx + jitter(rng);
        X(r, 1) = cy + jitter(rng);
        y.push_back(cx * cy < 0 ? Label::bot : Label::human);
      }
}

}  // namespace

TEST_CASE("forest fits separable points") {
  RowMatrix X(4, 2);
  X << 0, 0, 1, 0, 2, 1, 3, 1;
  const std::vector<Label> y{Label::human, Label::human, Label::bot, Label::bot};
  ForestConfig c;
  c.n_trees = 10;
  c.max_depth = 2;
  const auto m = train_forest(X, y, c);
  CHECK(m.trees.size() == 10);
  CHECK(train_accuracy(m, X, y) == 1.0);
}

TEST_CASE("depth 0 predicts the class prior") {
  RowMatrix X(5, 1);
  X << 1, 2, 3, 4, 5;
  const std::vector<Label> y{Label::bot, Label::human, Label::human, Label::bot, Label::bot};
  ForestConfig c;
  c.max_depth = 0;
  c.bootstrap = false;
  c.n_trees = 3;
  const auto m = train_forest(X, y, c);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const auto p = forest_frequencies(m, row(X, i));
    CHECK(p.bot == doctest::Approx(0.6));
    CHECK(p.human == doctest::Approx(0.4));
  }
  for (const auto& t : m.trees) CHECK(t.nodes.size() == 1);
}

TEST_CASE("conflicting duplicates give leaf label frequency") {
  RowMatrix X = RowMatrix::Constant(4, 3, 1.5);
  const std::vector<Label> y{Label::bot, Label::bot, Label::bot, Label::human};
  ForestConfig c;
  c.bootstrap = false;
  const auto m = train_forest(X, y, c);
  const auto p = forest_frequencies(m, row(X, 0));
  CHECK(p.bot == 0.75);
  CHECK(p.human == 0.25);
  for (const auto& t : m.trees)
    for (const auto& n : t.nodes)
      if (n.feature < 0) CHECK(n.counts[0] + n.counts[1] > 0.0);
}

TEST_CASE("forest logits are smoothed leaf frequencies") {
  ForestModel m;
  m.n_features = 1;
  m.trees = {leaf_tree(0, 5), leaf_tree(0, 2)};
  const std::vector<double> x{0.0};
  const auto p = softmax(predict_tabular(m, x));
  CHECK(p.bot > 0.999);
  CHECK(p.human >= m.config.epsilon / (1 + 2 * m.config.epsilon) - 1e-18);

  m.trees = {leaf_tree(3, 0), leaf_tree(0, 4)};
  const auto q = softmax(predict_tabular(m, x));
  CHECK(q.human == doctest::Approx(0.5));
  CHECK(q.bot == doctest::Approx(0.5));

  CHECK_ERROR_KIND(predict_tabular(m, std::vector<double>{1.0, 2.0}), ErrorKind::dimension);
}

TEST_CASE("forest training is seeded, bounded and rejects one class") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  RowMatrix X(60, 5);
  std::vector<Label> y;
  for (Eigen::Index i = 0; i < 60; ++i) {
    for (Eigen::Index f = 0; f < 5; ++f) X(i, f) = g(rng);
    y.push_back(X(i, 0) + 0.5 * X(i, 1) > 0 ? Label::bot : Label::human);
  }
  ForestConfig c;
  c.n_trees = 20;
  const auto a = train_forest(X, y, c), b = train_forest(X, y, c);
  CHECK(to_json(a) == to_json(b));
  for (Eigen::Index i = 0; i < 60; ++i) {
    const auto p = softmax(predict_tabular(a, row(X, i)));
    CHECK(p.human + p.bot == doctest::Approx(1.0));
    CHECK(p.bot >= c.epsilon / (1 + 2 * c.epsilon) * 0.999);
    CHECK(p.bot <= 1.0 - c.epsilon / (1 + 2 * c.epsilon) * 0.999);
  }
  CHECK_ERROR_KIND(train_forest(X, std::vector<Label>(60, Label::bot), c), ErrorKind::single_class);
  CHECK_ERROR_KIND(train_adaboost(X, std::vector<Label>(60, Label::human), {}), ErrorKind::single_class);
}

TEST_CASE("uniform duplication leaves forest splits unchanged") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  RowMatrix X(30, 4);
  std::vector<Label> y;
  for (Eigen::Index i = 0; i < 30; ++i) {
    for (Eigen::Index f = 0; f < 4; ++f) X(i, f) = u(rng);
    y.push_back(X(i, 2) * X(i, 3) > 0 ? Label::bot : Label::human);
  }
  RowMatrix X2(60, 4);
  X2 << X, X;
  std::vector<Label> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());

  ForestConfig c;
  c.bootstrap = false;
  c.max_features = 4;
  c.n_trees = 3;
  const auto a = train_forest(X, y, c), b = train_forest(X2, y2, c);
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
    for (std::size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
      CHECK(a.trees[t].nodes[k].feature == b.trees[t].nodes[k].feature);
      CHECK(a.trees[t].nodes[k].threshold == b.trees[t].nodes[k].threshold);
      CHECK(2 * a.trees[t].nodes[k].counts[0] == b.trees[t].nodes[k].counts[0]);
    }
  }
}

TEST_CASE("adaboost: threshold data needs one round") {
  RowMatrix X(6, 1);
  X << 0.1, 0.4, 0.2, 0.9, 0.7, 0.8;
  const std::vector<Label> y{Label::human, Label::human, Label::human, Label::bot, Label::bot, Label::bot};
  const auto m = train_adaboost(X, y, {});
  CHECK(m.stumps.size() == 1);
  CHECK(m.stage_errors[0] == 0.0);
  CHECK(train_accuracy(m, X, y) == 1.0);
}

TEST_CASE("adaboost: a useless first stump stops training with one round") {
  RowMatrix X = RowMatrix::Zero(4, 2);
  const std::vector<Label> y{Label::human, Label::bot, Label::human, Label::bot};
  const auto m = train_adaboost(X, y, {});
  REQUIRE(m.stumps.size() == 1);
  CHECK(m.stage_errors[0] == doctest::Approx(0.5));
  CHECK(m.stumps[0].stage_weight == 0.0);
}

TEST_CASE("adaboost on jittered XOR") {
  RowMatrix X;
  std::vector<Label> y;
  xor_data(X, y);
  BoostConfig c;
  c.rounds = 20;
  const auto m = train_adaboost(X, y, c);
  CHECK(m.stumps.size() >= 1);
  CHECK(m.stumps.size() <= 20);
  const double acc = train_accuracy(m, X, y);
  MESSAGE("XOR training accuracy after ", m.stumps.size(), " stumps: ", acc);
  CHECK(acc > 0.9);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double f = boost_score(m, row(X, i));
    const auto z = predict_tabular(m, row(X, i));
    CHECK(z.bot == f);
    CHECK(z.human == -f);
  }
  for (const auto& s : m.stumps) CHECK(std::isfinite(s.stage_weight));

  // First rounds from an independent exhaustive-search boosting run on the same
  // points (ties broken by feature, then threshold, then polarity).
  REQUIRE(m.stumps.size() >= 3);
  CHECK(m.stumps[0].feature == 1);
  CHECK(m.stumps[0].threshold == doctest::Approx(1.031254).epsilon(1e-6));
  CHECK(m.stumps[0].polarity == 1);
  CHECK(m.stumps[1].threshold == doctest::Approx(1.260352).epsilon(1e-6));
  CHECK(m.stumps[1].polarity == -1);
  CHECK(m.stumps[2].feature == 0);
  CHECK(m.stumps[2].threshold == doctest::Approx(0.945492).epsilon(1e-6));
  CHECK(m.stumps[2].stage_weight == doctest::Approx(0.219377).epsilon(1e-5));
  CHECK(acc == doctest::Approx(0.925));
}

TEST_CASE("tabular models round-trip through JSON") {
  RowMatrix X;
  std::vector<Label> y;
  xor_data(X, y);
  ForestConfig fc;
  fc.n_trees = 5;
  const auto f = train_forest(X, y, fc);
  const auto f2 = forest_from_json(nlohmann::json::parse(to_json(f).dump()));
  const auto b = train_adaboost(X, y, {});
  const auto b2 = boost_from_json(nlohmann::json::parse(to_json(b).dump()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    CHECK(predict_tabular(f, row(X, i)).bot == predict_tabular(f2, row(X, i)).bot);
    CHECK(predict_tabular(b, row(X, i)).bot == predict_tabular(b2, row(X, i)).bot);
  }
  auto bad = to_json(f);
  bad["version"] = 99;
  CHECK_ERROR_KIND(forest_from_json(bad), ErrorKind::version);
}
