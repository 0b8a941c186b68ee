#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "commbot/bundle.hpp"
#include "commbot/synth.hpp"

namespace commbot {

struct IndividualMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  /// Bot-class F1; 0 when precision + recall is 0.
  double f1 = 0.0;
};

IndividualMetrics individual_metrics(std::span<const Label> pred, std::span<const Label> y);

struct EvalRow {
  std::string community_id;
  double target_fraction = 0.0;
  std::uint64_t seed = 0;
  double true_fraction = 0.0;
  double estimated_fraction = 0.0;
  double abs_error = 0.0;
  std::size_t n_users = 0;
  /// Mean bot probability per sub-model.
  std::map<std::string, double> diagnostics;
};

struct InfeasibleRow {
  double target_fraction = 0.0;
  std::uint64_t seed = 0;
  std::string reason;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // sorted by target fraction, then seed
  std::vector<InfeasibleRow> infeasible;
  double mae = 0.0;
  double max_error = 0.0;
  std::optional<IndividualMetrics> individual;

  /// Recomputes mae and max_error from the rows.
  void summarize();
};

/// Predicted bot fraction plus optional per-model diagnostics for one community.
using CommunityEstimator = std::function<CommunityEstimate(const UserStore&)>;

EvalRow evaluate_community(const std::string& community_id, const UserStore& community, const CommunityEstimator& est);

struct SweepConfig {
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t size = 5000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

/// Resample + estimate for every fraction x seed. Infeasible rows are recorded, not fatal.
EvalReport run_sweep(const UserStore& pool, const EdgeList& edges, const SweepConfig& config,
                     const CommunityEstimator& estimator);

/// Scores every pool user once and reuses the outputs across rows.
EvalReport run_sweep(const EnsembleBundle& bundle, const UserStore& pool, const EdgeList& edges,
                     const SweepConfig& config);

/// Per-user calibrated sub-model outputs for a whole store, keyed by id.
std::map<std::string, std::vector<ProbPair>, std::less<>> score_users(const EnsembleBundle& bundle, const UserStore& store);

/// CSV with a fixed column order; per-model diagnostics follow in name order.
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
/// Estimated-vs-true scatter over [0,1]^2 with the y = x reference line.
void write_report_svg(const EvalReport& report, const std::filesystem::path& path);
std::string report_csv(const EvalReport& report);
std::string report_svg(const EvalReport& report);

}  // namespace commbot
