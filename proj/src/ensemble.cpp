#include "commbot/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "commbot/error.hpp"

namespace commbot {

std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::feature: return "feature";
    case Channel::text: return "text";
    case Channel::graph: return "graph";
  }
  return "?";
}

Channel parse_channel(std::string_view s) {
  if (s == "feature") return Channel::feature;
  if (s == "text") return Channel::text;
  if (s == "graph") return Channel::graph;
  fail(ErrorKind::config, "unknown channel '" + std::string(s) + "'");
}

EnsembleWeights::EnsembleWeights(std::vector<WeightEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string, std::less<>> names;
  for (const auto& e : entries_) {
    if (!std::isfinite(e.alpha)) fail(ErrorKind::invariant_violation, "non-finite weight for " + e.name);
    if (!names.insert(e.name).second) fail(ErrorKind::invariant_violation, "duplicate sub-model " + e.name);
  }
}

double EnsembleWeights::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.alpha;
  fail(ErrorKind::key_mismatch, "no weight for sub-model " + std::string(name));
}

std::vector<double> EnsembleWeights::alphas() const {
  std::vector<double> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.alpha);
  return out;
}

void EnsembleWeights::set_alphas(std::span<const double> alphas) {
  if (alphas.size() != entries_.size()) fail(ErrorKind::dimension, "alpha count differs from sub-model count");
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    if (!std::isfinite(alphas[k])) fail(ErrorKind::invariant_violation, "non-finite weight");
    entries_[k].alpha = alphas[k];
  }
}

EnsembleWeights EnsembleWeights::scaled(double factor) const {
  EnsembleWeights out = *this;
  for (auto& e : out.entries_) e.alpha *= factor;
  return out;
}

double ensemble_nll(std::span<const std::vector<ProbPair>> probs, std::span<const Label> y, std::span<const double> alpha) {
  if (probs.size() != alpha.size()) fail(ErrorKind::dimension, "one weight per sub-model is required");
  const double s = [&] {
    double t = 0.0;
    for (double a : alpha) t += a;
    return t;
  }();
  if (!(s > 0.0)) return std::numeric_limits<double>::infinity();
  double nll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double a = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) a += alpha[k] * probs[k][i][class_index(y[i])];
    if (!(a > 0.0)) return std::numeric_limits<double>::infinity();
    nll -= std::log(a / s);
  }
  return nll / static_cast<double>(y.size());
}

EnsembleWeights fit_weights(const std::vector<WeightEntry>& models, std::span<const std::vector<ProbPair>> probs,
                            std::span<const Label> y, const WeightFitConfig& config, WeightFitTrace* trace) {
  if (models.empty()) fail(ErrorKind::empty_input, "no sub-models to weight");
  if (probs.size() != models.size()) fail(ErrorKind::dimension, "one probability column per sub-model is required");
  for (const auto& col : probs)
    if (col.size() != y.size()) fail(ErrorKind::dimension, "probabilities and labels differ in length");
  if (!has_both_classes(y)) fail(ErrorKind::single_class, "weight fitting needs both classes");

  const std::size_t K = models.size();
  std::vector<double> alpha(K, 1.0 / static_cast<double>(K));
  double nll = ensemble_nll(probs, y, alpha);
  if (trace) trace->nll.push_back(nll);
  std::vector<double> grad(K), cand(K);
  const double n = static_cast<double>(y.size());

  for (int step = 0; step < config.steps; ++step) {
    double s = 0.0;
    for (double a : alpha) s += a;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const int c = class_index(y[i]);
      double a = 0.0;
      for (std::size_t k = 0; k < K; ++k) a += alpha[k] * probs[k][i][c];
      for (std::size_t k = 0; k < K; ++k) grad[k] -= (probs[k][i][c] / a - 1.0 / s) / n;
    }
    double lr = config.learning_rate;
    bool accepted = false;
    for (int bt = 0; bt <= config.max_backtracks; ++bt, lr *= 0.5) {
      for (std::size_t k = 0; k < K; ++k) cand[k] = alpha[k] - lr * grad[k];
      const double cn = ensemble_nll(probs, y, cand);
      if (std::isfinite(cn) && cn <= nll) {
        accepted = cn < nll;
        alpha = cand;
        nll = cn;
        break;
      }
    }
    if (!accepted) break;
    if (trace) trace->nll.push_back(nll);
  }

  std::vector<WeightEntry> out = models;
  for (std::size_t k = 0; k < K; ++k) out[k].alpha = alpha[k];
  return EnsembleWeights(std::move(out));
}

Label classify(std::span<const ProbPair> probs, std::span<const double> alpha) {
  if (probs.size() != alpha.size()) fail(ErrorKind::key_mismatch, "probabilities and weights disagree");
  double h = 0.0, b = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    h += alpha[k] * probs[k].human;
    b += alpha[k] * probs[k].bot;
  }
  return b > h ? Label::bot : Label::human;
}

Label classify_user(const std::map<std::string, ProbPair>& probs, const EnsembleWeights& weights) {
  if (probs.size() != weights.size()) fail(ErrorKind::key_mismatch, "sub-model sets differ");
  std::vector<ProbPair> ordered;
  ordered.reserve(weights.size());
  for (const auto& e : weights.entries()) {
    auto it = probs.find(e.name);
    if (it == probs.end()) fail(ErrorKind::key_mismatch, "no prediction for sub-model " + e.name);
    ordered.push_back(it->second);
  }
  const auto alpha = weights.alphas();
  return classify(ordered, alpha);
}

CommunityEstimate estimate_community(std::span<const std::vector<ProbPair>> users, const EnsembleWeights& weights) {
  if (users.empty()) fail(ErrorKind::empty_community, "community has no users");
  const auto alpha = weights.alphas();
  CommunityEstimate est;
  est.n_users = users.size();
  std::vector<double> bot_sum(weights.size(), 0.0);
  for (const auto& u : users) {
    if (u.size() != alpha.size()) fail(ErrorKind::key_mismatch, "user prediction count differs from sub-model count");
    if (classify(u, alpha) == Label::bot) ++est.n_bots_predicted;
    for (std::size_t k = 0; k < u.size(); ++k) bot_sum[k] += u[k].bot;
  }
  est.p_hat = static_cast<double>(est.n_bots_predicted) / static_cast<double>(est.n_users);
  for (std::size_t k = 0; k < weights.size(); ++k)
    est.mean_bot_probability[weights.entries()[k].name] = bot_sum[k] / static_cast<double>(est.n_users);
  return est;
}

}  // namespace commbot
