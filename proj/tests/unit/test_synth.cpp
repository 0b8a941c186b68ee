#include <cmath>
#include <set>

#include "commbot/features.hpp"
#include "commbot/synth.hpp"
#include "commbot/tabular.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace commbot;

namespace {

std::size_t bot_count(const UserStore& s) {
  std::size_t n = 0;
  for (const auto& [_, u] : s) n += u.label == Label::bot;
  return n;
}

RowMatrix feature_matrix(const UserStore& s, std::vector<Label>& y) {
  RowMatrix X(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(kFeatureCount));
  y.clear();
  Eigen::Index i = 0;
  for (const auto& [_, u] : s) {
    const auto f = compute_features(u);
    for (std::size_t k = 0; k < kFeatureCount; ++k) X(i, static_cast<Eigen::Index>(k)) = f[k];
    y.push_back(*u.label);
    ++i;
  }
  return X;
}

}  // namespace

TEST_CASE("exact bot counts") {
  for (double f : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
    SynthConfig c;
    c.n_users = 301;
    c.bot_fraction = f;
    const auto s = generate_community(c);
    CHECK(s.users.size() == 301);
    CHECK(bot_count(s.users) == static_cast<std::size_t>(std::llround(301 * f)));
    CHECK(s.users.labeled_count() == 301);
  }
}

TEST_CASE("generator settings are validated") {
  SynthConfig c;
  c.bot_fraction = 1.2;
  CHECK_ERROR_KIND(validate(c), ErrorKind::config);
  c = {};
  c.homophily = -0.1;
  CHECK_ERROR_KIND(generate_community(c), ErrorKind::config);
  c = {};
  c.n_users = 1;
  CHECK_ERROR_KIND(validate(c), ErrorKind::config);
  c = {};
  c.separation = -1;
  CHECK_ERROR_KIND(validate(c), ErrorKind::config);
}

TEST_CASE("generation is reproducible per seed") {
  SynthConfig c;
  c.n_users = 200;
  const auto a = generate_community(c), b = generate_community(c);
  CHECK(a.users.ids() == b.users.ids());
  for (const auto& [id, u] : a.users) CHECK(b.users.at(id) == u);
  CHECK(a.edges.edges() == b.edges.edges());
  c.seed = 2;
  c.id_prefix = "s1_";
  const auto d = generate_community(c);
  bool differs = false;
  for (const auto& [id, u] : a.users) differs = differs || !(d.users.at(id) == u);
  CHECK(differs);
}

TEST_CASE("full homophily keeps edges within a class") {
  SynthConfig c;
  c.n_users = 400;
  c.homophily = 1.0;
  const auto s = generate_community(c);
  CHECK(s.edges.size() > 0);
  for (const auto& e : s.edges.edges()) CHECK(s.users.at(e.source_id).label == s.users.at(e.target_id).label);

  c.homophily = 0.8;
  const auto t = generate_community(c);
  std::size_t same = 0;
  for (const auto& e : t.edges.edges()) same += t.users.at(e.source_id).label == t.users.at(e.target_id).label;
  const double share = static_cast<double>(same) / static_cast<double>(t.edges.size());
  CHECK(share == doctest::Approx(0.8).epsilon(0.06));
  const double mean_degree = 2.0 * static_cast<double>(t.edges.size()) / 400.0;
  MESSAGE("mean total degree ", mean_degree);
  CHECK(mean_degree > 4.0);
}

TEST_CASE("zero separation leaves a forest at chance") {
  SynthConfig c;
  c.n_users = 2000;
  c.separation = 0.0;
  c.homophily = 0.5;
  const auto train = generate_community(c);
  c.seed = 2;
  const auto test = generate_community(c);
  std::vector<Label> ytr, yte;
  const RowMatrix Xtr = feature_matrix(train.users, ytr), Xte = feature_matrix(test.users, yte);
  ForestConfig fc;
  fc.n_trees = 50;
  const auto m = train_forest(Xtr, ytr, fc);
  int ok = 0;
  for (Eigen::Index i = 0; i < Xte.rows(); ++i)
    ok += softmax(predict_tabular(m, std::span<const double>(Xte.row(i).data(), kFeatureCount))).argmax() ==
          yte[static_cast<std::size_t>(i)];
  const double acc = ok / 2000.0;
  MESSAGE("held-out accuracy at zero separation: ", acc);
  CHECK(acc >= 0.45);
  CHECK(acc <= 0.55);
}

TEST_CASE("proximity resampling hits the target exactly") {
  SynthConfig c;
  c.n_users = 1500;
  const auto pool = generate_community(c);
  for (double target : {0.1, 0.25, 0.5, 0.9}) {
    const auto r = resample_by_proximity(pool.users, pool.edges, target, 400, 3);
    CHECK(r.community.size() == 400);
    CHECK(bot_count(r.community) == static_cast<std::size_t>(std::llround(400 * target)));
    CHECK(r.trace.size() == 400);
    for (const auto& [id, u] : r.community) CHECK(pool.users.at(id) == u);
  }
}

TEST_CASE("resampling trace follows edges") {
  SynthConfig c;
  c.n_users = 800;
  const auto pool = generate_community(c);
  std::set<std::pair<std::string, std::string>> adj;
  for (const auto& e : pool.edges.edges()) {
    adj.emplace(e.source_id, e.target_id);
    adj.emplace(e.target_id, e.source_id);
  }
  const auto r = resample_by_proximity(pool.users, pool.edges, 0.3, 200, 8);
  std::size_t starts = 0;
  std::set<std::string> seen;
  for (const auto& step : r.trace) {
    CHECK(seen.insert(step.id).second);
    CHECK(r.community.contains(step.id));
    if (step.via.empty()) {
      ++starts;
    } else {
      CHECK(adj.count({step.via, step.id}) == 1);
    }
  }
  CHECK(starts >= 1);
  CHECK(starts < 20);  // the follow graph is well connected

  const auto again = resample_by_proximity(pool.users, pool.edges, 0.3, 200, 8);
  CHECK(again.community.ids() == r.community.ids());
}

TEST_CASE("infeasible targets are reported") {
  SynthConfig c;
  c.n_users = 100;
  c.bot_fraction = 0.2;
  const auto pool = generate_community(c);
  CHECK_ERROR_KIND(resample_by_proximity(pool.users, pool.edges, 0.5, 80, 1), ErrorKind::infeasible_target);
  CHECK_ERROR_KIND(resample_by_proximity(pool.users, pool.edges, 0.5, 101, 1), ErrorKind::infeasible_target);
  CHECK_NOTHROW(resample_by_proximity(pool.users, pool.edges, 0.25, 80, 1));
  CHECK_ERROR_KIND(resample_by_proximity(pool.users, pool.edges, 1.5, 10, 1), ErrorKind::config);
}
