// End-to-end acceptance run on synthetic ground truth. Prints one PASS/FAIL
// line per criterion and exits non-zero if any criterion fails.

#include <chrono>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <type_traits>

#include <CLI11.hpp>
#include <json.hpp>

#include "commbot/eval.hpp"
#include "commbot/pipeline.hpp"

using namespace commbot;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Outcome> outcomes;

void record(int id, bool pass, std::string detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  outcomes.push_back({id, pass, std::move(detail)});
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

SynthCommunity community(std::size_t n, double fraction, std::uint64_t seed) {
  SynthConfig c;
  c.n_users = n;
  c.bot_fraction = fraction;
  c.seed = seed;
  return generate_community(c);
}

double true_fraction(const UserStore& s) {
  std::size_t bots = 0;
  for (const auto& [_, u] : s) bots += u.label == Label::bot;
  return static_cast<double>(bots) / static_cast<double>(s.size());
}

// ---- oracles shared with criterion 7 ----

std::size_t edit_distance_oracle(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (a[i - 1] != b[j - 1]), d[i - 1][j] + 1, d[i][j - 1] + 1});
  return d[a.size()][b.size()];
}

double entropy_oracle(const std::u32string& s) {
  std::map<char32_t, double> c;
  for (char32_t ch : s) c[ch] += 1.0;
  double h = 0.0;
  for (const auto& [_, k] : c) {
    const double p = k / static_cast<double>(s.size());
    h -= p * std::log2(p);
  }
  return h;
}

double ece_oracle(const std::vector<ProbPair>& p, const std::vector<Label>& y) {
  double total = 0.0;
  for (int b = 0; b < 10; ++b) {
    double n = 0, acc = 0, conf = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double c = std::max(p[i].human, p[i].bot);
      if (!(c >= b / 10.0 && (c < (b + 1) / 10.0 || (b == 9 && c <= 1.0)))) continue;
      ++n;
      conf += c;
      acc += (p[i].bot > p[i].human ? Label::bot : Label::human) == y[i];
    }
    if (n > 0) total += n / static_cast<double>(p.size()) * std::abs(acc / n - conf / n);
  }
  return total;
}

bool grad_close(const Vector& a, const Vector& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > 1e-4 * std::max(std::abs(a[i]), std::abs(b[i])) + 1e-7) return false;
  return true;
}

HeteroGraph random_graph(int n, Eigen::Index d, int n_edges, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> node(0, n - 1);
  HeteroGraph h;
  for (int i = 0; i < n; ++i) h.node_ids.push_back("n" + std::to_string(10 + i));
  h.features.resize(n, d);
  for (Eigen::Index k = 0; k < h.features.size(); ++k) h.features.data()[k] = g(rng);
  std::set<std::pair<int, int>> es;
  while (static_cast<int>(es.size()) < n_edges) {
    const int s = node(rng), t = node(rng);
    if (s != t) es.emplace(s, t);
  }
  for (const auto& [s, t] : es) {
    h.edges[0].emplace_back(s, t);
    h.edges[1].emplace_back(t, s);
  }
  h.reindex();
  return h;
}

// ---- criteria ----

void criterion1(const EnsembleBundle& b, double train_seconds, std::size_t n) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t correct = 0, total = 0, tp = 0, fp = 0, fn = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto c = community(n, 0.5, 1000 + s);
    const auto est = b.estimate(c.users);
    worst = std::max(worst, std::abs(est.p_hat - true_fraction(c.users)));
    if (s == 0) {
      for (const auto& [_, u] : c.users) {
        const Label p = b.classify(u);
        correct += p == *u.label;
        tp += p == Label::bot && u.label == Label::bot;
        fp += p == Label::bot && u.label == Label::human;
        fn += p == Label::human && u.label == Label::bot;
        ++total;
      }
    }
  }
  const double secs = train_seconds + seconds_since(t0);
  const double acc = static_cast<double>(correct) / static_cast<double>(total);
  const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  record(1, worst <= 0.05,
         fmt("10 communities x %zu users at 50%%: worst |p_hat - 0.5| = %.4f (limit 0.05); train+estimate %.0f s; "
             "individual accuracy %.3f, F1 %.3f on the first community",
             n, worst, secs, acc, f1));
}

EvalReport criterion2(const EnsembleBundle& b, const SynthCommunity& pool, const std::filesystem::path& dir) {
  const auto report = run_sweep(b, pool.users, pool.edges, SweepConfig{});
  write_report_csv(report, dir / "sweep.csv");
  write_report_svg(report, dir / "sweep.svg");
  record(2, report.infeasible.empty() && report.rows.size() == 27 && report.mae <= 0.05 && report.max_error <= 0.10,
         fmt("%zu rows, %zu infeasible; MAE %.4f (limit 0.05), max error %.4f (limit 0.10)", report.rows.size(),
             report.infeasible.size(), report.mae, report.max_error));
  return report;
}

void criterion3(const EnsembleBundle& b, const SynthCommunity& pool, const EvalReport& calibrated,
                const std::filesystem::path& dir) {
  const auto raw = run_sweep(b.with_unit_temperatures(), pool.users, pool.edges, SweepConfig{});
  write_report_csv(raw, dir / "sweep_uncalibrated.csv");
  double signed_err = 0.0;
  for (const auto& r : raw.rows) signed_err += r.estimated_fraction - r.true_fraction;
  record(3, raw.rows.size() == calibrated.rows.size() && raw.mae > calibrated.mae,
         fmt("MAE with unit temperatures %.4f vs calibrated %.4f; mean signed error uncalibrated %+.4f", raw.mae,
             calibrated.mae, signed_err / static_cast<double>(std::max<std::size_t>(raw.rows.size(), 1))));
}

void criterion4(const EnsembleBundle& b) {
  const auto held = community(3000, 0.5, 4000);
  std::vector<Label> y;
  const auto cols = validation_logits(b, held.users, y);
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < b.size(); ++k) {
    std::vector<ProbPair> pre, post;
    for (const auto& z : cols[k]) {
      pre.push_back(softmax(z));
      post.push_back(apply_temperature(z, b.sub_models[k].temperature));
    }
    const double e0 = expected_calibration_error(pre, y), e1 = expected_calibration_error(post, y);
    const bool good = e1 <= e0 && (e0 <= 0.02 || e1 < e0);
    ok = ok && good;
    detail += fmt("%s%s %.4f->%.4f (T=%.3f)", k ? "; " : "", b.sub_models[k].name.c_str(), e0, e1,
                  b.sub_models[k].temperature.value());
  }
  record(4, ok, "held-out ECE pre->post: " + detail);
}

void criterion5(const TrainingReport& report) {
  static_assert(std::is_same_v<decltype(&predict_student), LogitPair (*)(const LinearStudent&, std::span<const double>)>,
                "student inference must take node features only");
  double worst = 1.0;
  for (const auto& [_, a] : report.teacher_student_agreement) worst = std::min(worst, a);

  std::mt19937_64 rng(55);
  std::normal_distribution<double> g(0.0, 3.0);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  double max_gap = 0.0;
  for (int f = 0; f < 50; ++f) {
    const int n = 1 + f % 17;
    Matrix z(n, 2), t(n, 2);
    std::vector<Label> y;
    double ce = 0.0;
    for (int i = 0; i < n; ++i) {
      z(i, 0) = g(rng);
      z(i, 1) = g(rng);
      t(i, 0) = u(rng);
      t(i, 1) = 1.0 - t(i, 0);
      y.push_back(u(rng) < 0.5 ? Label::bot : Label::human);
      ce += cross_entropy({z(i, 0), z(i, 1)}, y.back());
    }
    max_gap = std::max(max_gap, std::abs(distillation_loss(z, t, y, 1.0) - ce));
  }
  record(5, worst >= 0.9 && report.teacher_student_agreement.size() == 4 && max_gap <= 1e-9,
         fmt("min held-out teacher/student agreement %.4f over %zu students (limit 0.90); student signature takes "
             "features only; max |L(lambda=1) - CE| = %.2e on 50 fixtures",
             worst, report.teacher_student_agreement.size(), max_gap));
}

void criterion6(const EnsembleBundle& b, const SynthCommunity& train) {
  // Baseline: one stump on the verified flag alone.
  const auto vi = static_cast<Eigen::Index>(feature_index("verified"));
  std::vector<Label> y;
  RowMatrix X(static_cast<Eigen::Index>(train.users.size()), 1);
  Eigen::Index r = 0;
  for (const auto& [_, u] : train.users) {
    X(r++, 0) = compute_features(u)[static_cast<std::size_t>(vi)];
    y.push_back(*u.label);
  }
  BoostConfig bc;
  bc.rounds = 1;
  const BoostModel stump = train_adaboost(X, y, bc);

  const auto c = community(5000, 0.5, 6000);
  const double truth = true_fraction(c.users);
  int baseline_worse = 0;
  bool within = true;
  std::string detail;
  for (auto mode : {VerifiedMode::all_true, VerifiedMode::all_false, VerifiedMode::random}) {
    const UserStore p = apply_verified_perturbation(c.users, mode, 7);
    const double ens = std::abs(b.estimate(p).p_hat - truth);
    std::size_t bots = 0;
    for (const auto& [_, u] : p) {
      const double x = compute_features(u)[static_cast<std::size_t>(vi)];
      bots += softmax(predict_tabular(stump, std::span<const double>(&x, 1))).argmax() == Label::bot;
    }
    const double base = std::abs(static_cast<double>(bots) / static_cast<double>(p.size()) - truth);
    within = within && ens <= 0.10;
    baseline_worse += base > ens;
    detail += fmt("%s%s: ensemble dev %.4f, stump dev %.4f", detail.empty() ? "" : "; ",
                  mode == VerifiedMode::all_true ? "all_true" : mode == VerifiedMode::all_false ? "all_false" : "random",
                  ens, base);
  }
  record(6, within && baseline_worse >= 2, detail + fmt("; stump worse in %d of 3 modes", baseline_worse));
}

void criterion7() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  int text_ok = 0, gnn_ok = 0;
  const int instances = 24;
  for (int inst = 0; inst < instances; ++inst) {
    const Eigen::Index d = 3 + inst % 5;
    RowMatrix X(6, d);
    for (Eigen::Index k = 0; k < X.size(); ++k) X.data()[k] = g(rng);
    std::vector<Label> y;
    for (int i = 0; i < 6; ++i) y.push_back(i % 2 ? Label::bot : Label::human);
    const DenseHead head(d, inst % 2 ? 4 : 0, static_cast<std::uint64_t>(inst));
    Vector an;
    head_cross_entropy(head, X, y, 1e-3, &an);
    const Vector nu = numeric_gradient(
        [&](const Vector& th) {
          DenseHead h2 = head;
          h2.set_parameters(th);
          return head_cross_entropy(h2, X, y, 1e-3, nullptr);
        },
        head.parameters());
    text_ok += grad_close(an, nu);

    const GnnVariant v = std::array{GnnVariant::mean_relational, GnnVariant::attn_edge_type,
                                    GnnVariant::attn_relation}[static_cast<std::size_t>(inst % 3)];
    const auto graph = random_graph(6, 3, 10, rng);
    const std::vector<int> nodes{0, 1, 3, 4};
    const std::vector<Label> yn{Label::bot, Label::human, Label::human, Label::bot};
    const GnnModel m = make_gnn(v, 3, 3, 1 + inst % 2, static_cast<std::uint64_t>(100 + inst));
    Vector ag;
    gnn_cross_entropy(m, graph, nodes, yn, 1e-3, &ag);
    const Vector ng = numeric_gradient(
        [&](const Vector& th) {
          GnnModel m2 = m;
          m2.set_parameters(th);
          return gnn_cross_entropy(m2, graph, nodes, yn, 1e-3, nullptr);
        },
        m.parameters());
    gnn_ok += grad_close(ag, ng);
  }

  const std::vector<std::string> pieces{"a", "b", "Z", "1", "é", "ж", "中", "😀", " "};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::uniform_int_distribution<int> len(0, 12);
  auto rand_str = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s += pieces[pick(rng)];
    return s;
  };
  int lev_bad = 0, ent_bad = 0;
  for (int t = 0; t < 500; ++t) {
    const std::string a = rand_str(), b = rand_str();
    lev_bad += levenshtein(a, b) != edit_distance_oracle(decode_utf8(a), decode_utf8(b));
    ent_bad += std::abs(string_entropy(a) - entropy_oracle(decode_utf8(a))) > 1e-9;
  }
  int ece_bad = 0;
  std::uniform_real_distribution<double> u;
  for (int t = 0; t < 100; ++t) {
    std::vector<ProbPair> p;
    std::vector<Label> y;
    for (int i = 0; i < 50; ++i) {
      const double b = u(rng);
      p.push_back({1.0 - b, b});
      y.push_back(u(rng) < 0.5 ? Label::bot : Label::human);
    }
    ece_bad += std::abs(expected_calibration_error(p, y) - ece_oracle(p, y)) > 1e-9;
  }
  record(7, text_ok == instances && gnn_ok == instances && lev_bad == 0 && ent_bad == 0 && ece_bad == 0,
         fmt("gradient checks text %d/%d, GNN %d/%d; oracle mismatches levenshtein %d/500, entropy %d/500, ECE %d/100",
             text_ok, instances, gnn_ok, instances, lev_bad, ent_bad, ece_bad));
}

void criterion8(const TrainingReport& report) {
  bool monotone = !report.weight_nll.empty();
  for (std::size_t s = 1; s < report.weight_nll.size(); ++s) monotone = monotone && report.weight_nll[s] <= report.weight_nll[s - 1];
  double best = 0.0;
  for (const auto& m : report.models) best = std::max(best, m.val_accuracy);

  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> u;
  std::lognormal_distribution<double> scale(0.0, 3.0);
  int flips = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<ProbPair> p;
    std::vector<double> a, ac;
    const double c = scale(rng);
    for (int k = 0; k < 8; ++k) {
      const double b = u(rng);
      p.push_back({1.0 - b, b});
      a.push_back(u(rng));
      ac.push_back(a.back() * c);
    }
    flips += classify(p, a) != classify(p, ac);
  }
  record(8, monotone && report.ensemble_val_accuracy >= best - 0.01 && flips == 0,
         fmt("weight-fit NLL %.4f -> %.4f over %zu steps, non-increasing: %s; ensemble val accuracy %.4f vs best "
             "sub-model %.4f; decision flips under rescaling %d/1000",
             report.weight_nll.front(), report.weight_nll.back(), report.weight_nll.size() - 1, monotone ? "yes" : "no",
             report.ensemble_val_accuracy, best, flips));
}

void criterion9(const EnsembleBundle& trained, const std::filesystem::path& dir) {
  const std::vector<double> fixture{0.544, 0.583, 0.404, 0.411, 0.247, 0.205, 0.192, 0.208};
  EnsembleBundle b = trained;
  b.weights.set_alphas(fixture);
  b.save(dir / "fixture_bundle");
  const auto back = EnsembleBundle::load(dir / "fixture_bundle");
  const auto got = back.weights.alphas();
  bool exact = got.size() == fixture.size();
  for (std::size_t k = 0; exact && k < got.size(); ++k)
    exact = std::memcmp(&got[k], &fixture[k], sizeof(double)) == 0;
  std::string names;
  for (const auto& n : back.names()) names += (names.empty() ? "" : ", ") + n;
  record(9, exact, "alpha fixture bit-exact after save/load in order: " + names);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"commbot acceptance run"};
  std::filesystem::path workdir = "acceptance_work";
  std::size_t train_users = 2000, community_users = 10000, pool_users = 12000;
  app.add_option("--workdir", workdir, "Directory for reports and the trained bundle");
  app.add_option("--train-users", train_users, "Size of the labeled training community");
  app.add_option("--community-users", community_users, "Users per balanced community");
  app.add_option("--pool-users", pool_users, "Pool size for the imbalanced sweep");
  CLI11_PARSE(app, argc, argv);
  std::filesystem::create_directories(workdir);

  try {
    const auto t0 = Clock::now();
    const auto train = community(train_users, 0.5, 7);
    PipelineConfig cfg;
    cfg.embedding_dim = 64;
    cfg.distill.epochs = 1000;
    const auto result = train_pipeline(train.users, train.edges, cfg);
    const double train_seconds = seconds_since(t0);
    result.bundle.save(workdir / "bundle");
    std::printf("trained %zu sub-models on %zu users in %.0f s (ensemble val accuracy %.4f)\n", result.bundle.size(),
                train.users.size(), train_seconds, result.report.ensemble_val_accuracy);

    criterion1(result.bundle, train_seconds, community_users);
    const auto pool = community(pool_users, 0.5, 3000);
    const auto calibrated = criterion2(result.bundle, pool, workdir);
    criterion3(result.bundle, pool, calibrated, workdir);
    criterion4(result.bundle);
    criterion5(result.report);
    criterion6(result.bundle, train);
    criterion7();
    criterion8(result.report);
    criterion9(result.bundle, workdir);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance run aborted: %s\n", e.what());
    return 1;
  }

  nlohmann::json summary = nlohmann::json::array();
  for (const auto& o : outcomes) summary.push_back({{"criterion", o.id}, {"pass", o.pass}, {"detail", o.detail}});
  std::ofstream(workdir / "acceptance.json") << summary.dump(2) << '\n';
  const auto failed = std::count_if(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return !o.pass; });
  std::printf("%zu/%zu criteria passed\n", outcomes.size() - static_cast<std::size_t>(failed), outcomes.size());
  return failed == 0 ? 0 : 1;
}
