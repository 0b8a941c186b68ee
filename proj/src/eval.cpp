#include "commbot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "commbot/error.hpp"

namespace commbot {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

double true_fraction(const UserStore& community) {
  std::size_t bots = 0, labeled = 0;
  for (const auto& [_, u] : community) {
    if (!u.label) continue;
    ++labeled;
    bots += *u.label == Label::bot;
  }
  if (labeled != community.size()) fail(ErrorKind::missing_field, "every community member needs a label");
  return static_cast<double>(bots) / static_cast<double>(labeled);
}

}  // namespace

IndividualMetrics individual_metrics(std::span<const Label> pred, std::span<const Label> y) {
  if (pred.size() != y.size()) fail(ErrorKind::dimension, "predictions and labels differ in length");
  if (y.empty()) fail(ErrorKind::empty_input, "no predictions to score");
  std::size_t tp = 0, fp = 0, fn = 0, ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ok += pred[i] == y[i];
    tp += pred[i] == Label::bot && y[i] == Label::bot;
    fp += pred[i] == Label::bot && y[i] == Label::human;
    fn += pred[i] == Label::human && y[i] == Label::bot;
  }
  IndividualMetrics m;
  m.accuracy = static_cast<double>(ok) / static_cast<double>(y.size());
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

void EvalReport::summarize() {
  mae = 0.0;
  max_error = 0.0;
  for (const auto& r : rows) {
    mae += r.abs_error;
    max_error = std::max(max_error, r.abs_error);
  }
  if (!rows.empty()) mae /= static_cast<double>(rows.size());
}

EvalRow evaluate_community(const std::string& community_id, const UserStore& community, const CommunityEstimator& est) {
  EvalRow row;
  row.community_id = community_id;
  row.true_fraction = true_fraction(community);
  const CommunityEstimate e = est(community);
  row.estimated_fraction = e.p_hat;
  row.abs_error = std::abs(row.true_fraction - row.estimated_fraction);
  row.n_users = e.n_users;
  row.diagnostics = e.mean_bot_probability;
  return row;
}

EvalReport run_sweep(const UserStore& pool, const EdgeList& edges, const SweepConfig& config,
                     const CommunityEstimator& estimator) {
  std::vector<double> fractions = config.fractions;
  std::sort(fractions.begin(), fractions.end());
  std::vector<std::uint64_t> seeds = config.seeds;
  std::sort(seeds.begin(), seeds.end());

  EvalReport report;
  for (double f : fractions) {
    for (std::uint64_t seed : seeds) {
      char id[64];
      std::snprintf(id, sizeof id, "f%.3f_s%llu", f, static_cast<unsigned long long>(seed));
      try {
        const Resample r = resample_by_proximity(pool, edges, f, config.size, seed);
        EvalRow row = evaluate_community(id, r.community, estimator);
        row.target_fraction = f;
        row.seed = seed;
        report.rows.push_back(std::move(row));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::infeasible_target) throw;
        report.infeasible.push_back({f, seed, e.what()});
      }
    }
  }
  report.summarize();
  return report;
}

std::map<std::string, std::vector<ProbPair>, std::less<>> score_users(const EnsembleBundle& bundle, const UserStore& store) {
  std::map<std::string, std::vector<ProbPair>, std::less<>> out;
  for (const auto& [id, u] : store) out.emplace(id, bundle.probabilities(u));
  return out;
}

EvalReport run_sweep(const EnsembleBundle& bundle, const UserStore& pool, const EdgeList& edges,
                     const SweepConfig& config) {
  const auto scores = score_users(bundle, pool);
  return run_sweep(pool, edges, config, [&](const UserStore& community) {
    std::vector<std::vector<ProbPair>> users;
    users.reserve(community.size());
    for (const auto& [id, _] : community) users.push_back(scores.find(id)->second);
    return estimate_community(users, bundle.weights);
  });
}

std::string report_csv(const EvalReport& report) {
  std::set<std::string> diag;
  for (const auto& r : report.rows)
    for (const auto& [k, _] : r.diagnostics) diag.insert(k);
  std::ostringstream out;
  out << "community_id,target_fraction,seed,true_fraction,estimated_fraction,abs_error,n_users";
  for (const auto& k : diag) out << ",mean_bot_prob:" << k;
  out << '\n';
  for (const auto& r : report.rows) {
    out << r.community_id << ',' << num(r.target_fraction) << ',' << r.seed << ',' << num(r.true_fraction) << ','
        << num(r.estimated_fraction) << ',' << num(r.abs_error) << ',' << r.n_users;
    for (const auto& k : diag) {
      auto it = r.diagnostics.find(k);
      out << ',' << (it == r.diagnostics.end() ? std::string() : num(it->second));
    }
    out << '\n';
  }
  return out.str();
}

std::string report_svg(const EvalReport& report) {
  constexpr double size = 400.0, margin = 40.0, span = size - 2 * margin;
  auto px = [&](double v) { return num(margin + v * span); };
  auto py = [&](double v) { return num(size - margin - v * span); };
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" viewBox=\"0 0 400 400\">\n"
      << "<rect x=\"" << px(0) << "\" y=\"" << py(1) << "\" width=\"" << num(span) << "\" height=\"" << num(span)
      << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<line class=\"reference\" x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  for (int t = 0; t <= 10; ++t) {
    const double v = t / 10.0;
    out << "<text x=\"" << px(v) << "\" y=\"" << num(size - margin + 16) << "\" font-size=\"10\" text-anchor=\"middle\">"
        << num(v) << "</text>\n"
        << "<text x=\"" << num(margin - 6) << "\" y=\"" << py(v) << "\" font-size=\"10\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  out << "<text x=\"200\" y=\"392\" font-size=\"12\" text-anchor=\"middle\">true bot fraction</text>\n"
      << "<text x=\"12\" y=\"200\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 200)\">"
         "estimated bot fraction</text>\n";
  for (const auto& r : report.rows)
    out << "<circle cx=\"" << px(r.true_fraction) << "\" cy=\"" << py(r.estimated_fraction)
        << "\" r=\"3\" fill=\"steelblue\"/>\n";
  out << "</svg>\n";
  return out.str();
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) { write_text(path, report_csv(report)); }

void write_report_svg(const EvalReport& report, const std::filesystem::path& path) { write_text(path, report_svg(report)); }

}  // namespace commbot
