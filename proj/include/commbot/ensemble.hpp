#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "commbot/types.hpp"

namespace commbot {

enum class Channel { feature, text, graph };
std::string_view to_string(Channel c);
Channel parse_channel(std::string_view s);

struct WeightEntry {
  std::string name;
  Channel channel = Channel::feature;
  double alpha = 0.0;
};

/// Combination weight per sub-model, in sub-model order.
class EnsembleWeights {
 public:
  EnsembleWeights() = default;
  explicit EnsembleWeights(std::vector<WeightEntry> entries);

  const std::vector<WeightEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  double at(std::string_view name) const;
  std::vector<double> alphas() const;
  void set_alphas(std::span<const double> alphas);
  EnsembleWeights scaled(double factor) const;

 private:
  std::vector<WeightEntry> entries_;
};

struct WeightFitConfig {
  int steps = 200;
  double learning_rate = 1.0;
  /// Step halvings allowed before a step is abandoned.
  int max_backtracks = 30;
};

struct WeightFitTrace {
  /// Validation NLL before the first step and after every accepted step.
  std::vector<double> nll;
};

/// Mean NLL of the renormalised weighted sum of per-model probabilities.
/// probs[k][i] is sub-model k's output for sample i.
double ensemble_nll(std::span<const std::vector<ProbPair>> probs, std::span<const Label> y, std::span<const double> alpha);

/// Gradient descent with backtracking from uniform weights; sub-model outputs are read only.
EnsembleWeights fit_weights(const std::vector<WeightEntry>& models, std::span<const std::vector<ProbPair>> probs,
                            std::span<const Label> y, const WeightFitConfig& config = {}, WeightFitTrace* trace = nullptr);

/// Argmax of the alpha-weighted probability sum; exact ties go to human.
Label classify(std::span<const ProbPair> probs, std::span<const double> alpha);
Label classify_user(const std::map<std::string, ProbPair>& probs, const EnsembleWeights& weights);

struct CommunityEstimate {
  double p_hat = 0.0;
  std::size_t n_users = 0;
  std::size_t n_bots_predicted = 0;
  std::map<std::string, double> mean_bot_probability;
};

/// users[i][k] is sub-model k's output for user i (k in weight order).
CommunityEstimate estimate_community(std::span<const std::vector<ProbPair>> users, const EnsembleWeights& weights);

}  // namespace commbot
