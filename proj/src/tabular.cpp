#include "commbot/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "commbot/error.hpp"

namespace commbot {

using nlohmann::json;

namespace {

constexpr int kModelVersion = 1;

void check_training_input(const RowMatrix& X, std::span<const Label> y) {
  if (static_cast<std::size_t>(X.rows()) != y.size())
    fail(ErrorKind::dimension, "feature rows and labels differ in length");
  if (y.size() < 2) fail(ErrorKind::insufficient_data, "need at least two training rows");
  if (!has_both_classes(y)) fail(ErrorKind::single_class, "training labels contain a single class");
}

double gini(double c0, double c1) {
  const double n = c0 + c1;
  if (n <= 0.0) return 0.0;
  const double p0 = c0 / n, p1 = c1 / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

struct TreeBuilder {
  const RowMatrix& X;
  std::span<const Label> y;
  std::span<const double> w;
  int max_depth;
  int max_features;
  std::mt19937_64 rng;
  DecisionTree tree;

  struct Best {
    int feature = -1;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
  };

  void scan_feature(std::vector<int>& idx, int f, const std::array<double, 2>& total, double parent, Best& best) const {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return X(a, f) < X(b, f); });
    const double W = total[0] + total[1];
    std::array<double, 2> left{};
    for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
      left[static_cast<std::size_t>(class_index(y[static_cast<std::size_t>(idx[k])]))] += w[static_cast<std::size_t>(idx[k])];
      const double a = X(idx[k], f), b = X(idx[k + 1], f);
      if (!(a < b)) continue;
      const double wl = left[0] + left[1];
      const double wr = W - wl;
      const double gain =
          parent - (wl / W) * gini(left[0], left[1]) - (wr / W) * gini(total[0] - left[0], total[1] - left[1]);
      if (gain > best.gain) {
        double thr = a + (b - a) / 2.0;
        if (!(thr < b)) thr = a;
        best = {f, thr, gain};
      }
    }
  }

  int build(std::vector<int> idx, int depth) {
    std::array<double, 2> counts{};
    for (int i : idx) counts[static_cast<std::size_t>(class_index(y[static_cast<std::size_t>(i)]))] += w[static_cast<std::size_t>(i)];
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, counts});
    if (depth >= max_depth || counts[0] == 0.0 || counts[1] == 0.0 || idx.size() < 2) return id;

    const int d = static_cast<int>(X.cols());
    std::vector<int> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    const int m = std::min(max_features, d);
    for (int k = 0; k < m; ++k) {
      std::uniform_int_distribution<int> pick(k, d - 1);
      std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> sampled(order.begin(), order.begin() + m);
    std::vector<int> rest(order.begin() + m, order.end());
    std::sort(sampled.begin(), sampled.end());
    std::sort(rest.begin(), rest.end());

    const double parent = gini(counts[0], counts[1]);
    Best best;
    for (int f : sampled) scan_feature(idx, f, counts, parent, best);
    // None of the sampled features separates anything: keep looking.
    if (best.feature < 0)
      for (int f : rest) scan_feature(idx, f, counts, parent, best);
    if (best.feature < 0) return id;

    std::vector<int> li, ri;
    for (int i : idx) (X(i, best.feature) <= best.threshold ? li : ri).push_back(i);
    std::sort(li.begin(), li.end());
    std::sort(ri.begin(), ri.end());
    tree.nodes[static_cast<std::size_t>(id)].feature = best.feature;
    tree.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = build(std::move(li), depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    const int r = build(std::move(ri), depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }
};

std::span<const double> row_span(const RowMatrix& X, Eigen::Index i) {
  return {X.data() + i * X.cols(), static_cast<std::size_t>(X.cols())};
}

json node_to_json(const TreeNode& n) {
  return json::array({n.feature, n.threshold, n.left, n.right, n.counts[0], n.counts[1]});
}

TreeNode node_from_json(const json& j) {
  return TreeNode{j.at(0).get<int>(), j.at(1).get<double>(), j.at(2).get<int>(), j.at(3).get<int>(),
                  {j.at(4).get<double>(), j.at(5).get<double>()}};
}

void check_version(const json& j, const char* kind) {
  if (j.at("kind").get<std::string>() != kind) fail(ErrorKind::version, std::string("expected a ") + kind + " model");
  if (j.at("version").get<int>() != kModelVersion)
    fail(ErrorKind::version, std::string(kind) + " model version " + std::to_string(j.at("version").get<int>()));
}

}  // namespace

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
  const TreeNode* n = &nodes.front();
  while (n->feature >= 0) n = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right)];
  return *n;
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

DecisionTree grow_tree(const RowMatrix& X, std::span<const Label> y, std::span<const double> weights, int max_depth,
                       int max_features, std::uint64_t seed) {
  TreeBuilder b{X, y, weights, max_depth, max_features, std::mt19937_64(seed), {}};
  std::vector<int> idx;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] > 0.0) idx.push_back(static_cast<int>(i));
  b.build(std::move(idx), 0);
  return std::move(b.tree);
}

ForestModel train_forest(const RowMatrix& X, std::span<const Label> y, const ForestConfig& config) {
  check_training_input(X, y);
  if (config.n_trees < 1) fail(ErrorKind::config, "forest needs at least one tree");
  if (config.max_depth < 0) fail(ErrorKind::config, "max_depth must be >= 0");
  ForestModel m;
  m.config = config;
  m.n_features = static_cast<int>(X.cols());
  const int max_features = config.max_features > 0
                               ? config.max_features
                               : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(X.cols()))));
  const std::size_t n = y.size();
  for (int t = 0; t < config.n_trees; ++t) {
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(t)));
    std::vector<double> weights(n, 1.0);
    if (config.bootstrap) {
      std::fill(weights.begin(), weights.end(), 0.0);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t k = 0; k < n; ++k) weights[pick(rng)] += 1.0;
    }
    m.trees.push_back(grow_tree(X, y, weights, config.max_depth, max_features, rng()));
  }
  return m;
}

BoostModel train_adaboost(const RowMatrix& X, std::span<const Label> y, const BoostConfig& config) {
  check_training_input(X, y);
  if (config.rounds < 1) fail(ErrorKind::config, "boosting needs at least one round");
  const std::size_t n = y.size();
  const int d = static_cast<int>(X.cols());
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<int> sign(n);
  for (std::size_t i = 0; i < n; ++i) sign[i] = y[i] == Label::bot ? 1 : -1;

  // Pre-sorted orders per feature.
  std::vector<std::vector<int>> orders(static_cast<std::size_t>(d));
  for (int f = 0; f < d; ++f) {
    auto& o = orders[static_cast<std::size_t>(f)];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return X(a, f) < X(b, f); });
  }

  BoostModel m;
  m.config = config;
  m.n_features = d;
  for (int round = 0; round < config.rounds; ++round) {
    // Weighted error of "bot when x > thr" equals the weight of bots at or below
    // thr plus humans above it; the opposite polarity has error 1 - that.
    Stump best;
    double best_err = std::numeric_limits<double>::infinity();
    double total_bot = 0.0, total_human = 0.0;
    for (std::size_t i = 0; i < n; ++i) (sign[i] > 0 ? total_bot : total_human) += w[i];
    // Errors within rounding noise count as ties, and the first candidate in
    // (feature, threshold, polarity) order keeps the slot.
    const double tie = 1e-12 * (total_bot + total_human);
    auto consider = [&](int f, double thr, double err_pos) {
      const double err_neg = (total_bot + total_human) - err_pos;
      if (err_pos < best_err - tie) {
        best_err = err_pos;
        best = {f, thr, 1, 0.0};
      }
      if (err_neg < best_err - tie) {
        best_err = err_neg;
        best = {f, thr, -1, 0.0};
      }
    };
    for (int f = 0; f < d; ++f) {
      const auto& o = orders[static_cast<std::size_t>(f)];
      // Threshold below every value: everything predicted bot.
      consider(f, X(o.front(), f) - 1.0, total_human);
      double bot_below = 0.0, human_below = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(o[k]);
        (sign[i] > 0 ? bot_below : human_below) += w[i];
        if (k + 1 < n && !(X(o[k], f) < X(o[k + 1], f))) continue;
        double thr = k + 1 < n ? X(o[k], f) + (X(o[k + 1], f) - X(o[k], f)) / 2.0 : X(o[k], f);
        if (k + 1 < n && !(thr < X(o[k + 1], f))) thr = X(o[k], f);
        consider(f, thr, bot_below + (total_human - human_below));
      }
    }

    const double err = std::clamp(best_err, 1e-10, 1.0);
    if (err >= 0.5) {
      if (m.stumps.empty()) {
        best.stage_weight = 0.0;
        m.stumps.push_back(best);
        m.stage_errors.push_back(best_err);
      }
      break;
    }
    best.stage_weight = 0.5 * std::log((1.0 - err) / err);
    m.stumps.push_back(best);
    m.stage_errors.push_back(best_err);
    if (best_err <= 0.0) break;

    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] *= std::exp(-best.stage_weight * sign[i] * best.vote(row_span(X, static_cast<Eigen::Index>(i))));
      z += w[i];
    }
    for (double& wi : w) wi /= z;
  }
  return m;
}

ProbPair forest_frequencies(const ForestModel& m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.n_features) fail(ErrorKind::dimension, "forest input has wrong length");
  double human = 0.0, bot = 0.0;
  for (const auto& t : m.trees) {
    const auto& leaf = t.leaf_for(x);
    const double n = leaf.counts[0] + leaf.counts[1];
    human += leaf.counts[0] / n;
    bot += leaf.counts[1] / n;
  }
  const double k = static_cast<double>(m.trees.size());
  return {human / k, bot / k};
}

LogitPair predict_tabular(const ForestModel& m, std::span<const double> x) {
  const ProbPair p = forest_frequencies(m, x);
  const double eps = m.config.epsilon;
  const double z = 1.0 + 2.0 * eps;
  return {std::log((p.human + eps) / z), std::log((p.bot + eps) / z)};
}

double boost_score(const BoostModel& m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.n_features) fail(ErrorKind::dimension, "boost input has wrong length");
  double f = 0.0;
  for (const auto& s : m.stumps) f += s.stage_weight * s.vote(x);
  return f;
}

LogitPair predict_tabular(const BoostModel& m, std::span<const double> x) {
  const double f = boost_score(m, x);
  return {-f, f};
}

json to_json(const ForestModel& m) {
  json trees = json::array();
  for (const auto& t : m.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) nodes.push_back(node_to_json(n));
    trees.push_back(std::move(nodes));
  }
  return {{"kind", "random_forest"},
          {"version", kModelVersion},
          {"n_features", m.n_features},
          {"config",
           {{"n_trees", m.config.n_trees},
            {"max_depth", m.config.max_depth},
            {"max_features", m.config.max_features},
            {"bootstrap", m.config.bootstrap},
            {"seed", m.config.seed},
            {"epsilon", m.config.epsilon}}},
          {"trees", std::move(trees)}};
}

ForestModel forest_from_json(const json& j) {
  check_version(j, "random_forest");
  ForestModel m;
  m.n_features = j.at("n_features").get<int>();
  const auto& c = j.at("config");
  m.config = {c.at("n_trees").get<int>(),        c.at("max_depth").get<int>(),
              c.at("max_features").get<int>(),   c.at("bootstrap").get<bool>(),
              c.at("seed").get<std::uint64_t>(), c.at("epsilon").get<double>()};
  for (const auto& tj : j.at("trees")) {
    DecisionTree t;
    for (const auto& nj : tj) t.nodes.push_back(node_from_json(nj));
    for (const auto& n : t.nodes) {
      const auto sz = static_cast<int>(t.nodes.size());
      if (n.feature >= m.n_features || (n.feature >= 0 && (n.left < 0 || n.left >= sz || n.right < 0 || n.right >= sz)))
        fail(ErrorKind::invariant_violation, "corrupt forest node");
    }
    if (t.nodes.empty()) fail(ErrorKind::invariant_violation, "empty tree");
    m.trees.push_back(std::move(t));
  }
  if (m.trees.empty()) fail(ErrorKind::invariant_violation, "forest without trees");
  return m;
}

json to_json(const BoostModel& m) {
  json stumps = json::array();
  for (const auto& s : m.stumps) stumps.push_back(json::array({s.feature, s.threshold, s.polarity, s.stage_weight}));
  return {{"kind", "adaboost"},
          {"version", kModelVersion},
          {"n_features", m.n_features},
          {"config", {{"rounds", m.config.rounds}, {"seed", m.config.seed}}},
          {"stage_errors", m.stage_errors},
          {"stumps", std::move(stumps)}};
}

BoostModel boost_from_json(const json& j) {
  check_version(j, "adaboost");
  BoostModel m;
  m.n_features = j.at("n_features").get<int>();
  m.config = {j.at("config").at("rounds").get<int>(), j.at("config").at("seed").get<std::uint64_t>()};
  m.stage_errors = j.at("stage_errors").get<std::vector<double>>();
  for (const auto& s : j.at("stumps")) {
    Stump st{s.at(0).get<int>(), s.at(1).get<double>(), s.at(2).get<int>(), s.at(3).get<double>()};
    if (st.feature < 0 || st.feature >= m.n_features || !std::isfinite(st.stage_weight))
      fail(ErrorKind::invariant_violation, "corrupt stump");
    m.stumps.push_back(st);
  }
  if (m.stumps.empty()) fail(ErrorKind::invariant_violation, "boost model without stumps");
  return m;
}

}  // namespace commbot
