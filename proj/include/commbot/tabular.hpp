#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "commbot/linalg.hpp"
#include "commbot/types.hpp"

namespace commbot {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  /// Features tried per split; 0 means ceil(sqrt(n_features)).
  int max_features = 0;
  bool bootstrap = true;
  std::uint64_t seed = 1;
  /// Added to leaf frequencies before taking logs.
  double epsilon = 1e-6;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::array<double, 2> counts{};  // (human, bot) training weight reaching this node
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(std::span<const double> x) const;
  int depth() const;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  ForestConfig config;
  int n_features = 0;
};

struct BoostConfig {
  int rounds = 50;
  std::uint64_t seed = 1;
};

struct Stump {
  int feature = 0;
  double threshold = 0.0;
  /// +1: predict bot when x[feature] > threshold; -1: the reverse.
  int polarity = 1;
  double stage_weight = 0.0;

  int vote(std::span<const double> x) const { return (x[static_cast<std::size_t>(feature)] > threshold ? 1 : -1) * polarity; }
};

struct BoostModel {
  std::vector<Stump> stumps;
  BoostConfig config;
  int n_features = 0;
  /// Weighted training error of each fitted stump, in order.
  std::vector<double> stage_errors;
};

ForestModel train_forest(const RowMatrix& X, std::span<const Label> y, const ForestConfig& config);

/// Builds one tree on weighted rows. Exposed for testing split selection.
DecisionTree grow_tree(const RowMatrix& X, std::span<const Label> y, std::span<const double> weights,
                       int max_depth, int max_features, std::uint64_t seed);

BoostModel train_adaboost(const RowMatrix& X, std::span<const Label> y, const BoostConfig& config);

/// Averaged leaf frequencies, epsilon-smoothed, as log-probabilities.
LogitPair predict_tabular(const ForestModel& m, std::span<const double> x);
/// Stage-weighted vote F mapped to logits (-F, F).
LogitPair predict_tabular(const BoostModel& m, std::span<const double> x);

/// Averaged (unsmoothed) leaf frequencies.
ProbPair forest_frequencies(const ForestModel& m, std::span<const double> x);
double boost_score(const BoostModel& m, std::span<const double> x);

nlohmann::json to_json(const ForestModel& m);
ForestModel forest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BoostModel& m);
BoostModel boost_from_json(const nlohmann::json& j);

}  // namespace commbot
