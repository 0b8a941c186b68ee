#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "commbot/calibration.hpp"
#include "commbot/ensemble.hpp"
#include "commbot/features.hpp"
#include "commbot/graph.hpp"
#include "commbot/tabular.hpp"
#include "commbot/text.hpp"

namespace commbot {

inline constexpr int kBundleVersion = 1;

struct TextSubModel {
  std::string provider;
  DenseHead head;
};

struct StudentSubModel {
  GnnVariant teacher_variant = GnnVariant::mean_relational;
  LinearStudent student;
};

using SubModelParams = std::variant<ForestModel, BoostModel, TextSubModel, StudentSubModel>;

struct SubModel {
  std::string name;
  Channel channel = Channel::feature;
  SubModelParams params;
  Temperature temperature;
};

/// Everything a sub-model needs to score one user, computed once.
struct UserInputs {
  FeatureVector raw;
  /// normalize(log_compress(raw)) || node-provider text encoding.
  std::vector<double> node_features;
  /// One encoding per provider, in provider order.
  std::vector<std::vector<double>> encodings;
};

class EnsembleBundle {
 public:
  std::vector<SubModel> sub_models;
  EnsembleWeights weights;
  FeatureStats normalizer;
  std::vector<std::shared_ptr<const EmbeddingProvider>> providers;
  /// Provider whose encoding is appended to node features.
  std::string node_provider;
  /// Graph teachers kept for reference; never used for scoring.
  std::vector<std::pair<std::string, GnnModel>> archived_teachers;

  std::size_t size() const { return sub_models.size(); }
  std::vector<std::string> names() const;
  const EmbeddingProvider& provider(std::string_view name) const;

  UserInputs prepare(const UserRecord& u) const;
  std::vector<double> node_features(const FeatureVector& raw, std::span<const double> node_encoding) const;

  /// Raw logits of every sub-model, in sub-model order.
  std::vector<LogitPair> logits(const UserInputs& in) const;
  std::vector<LogitPair> logits(const UserRecord& u) const { return logits(prepare(u)); }
  /// Temperature-scaled probabilities, in sub-model order.
  std::vector<ProbPair> calibrate(std::span<const LogitPair> z) const;
  std::vector<ProbPair> probabilities(const UserRecord& u) const { return calibrate(logits(u)); }

  Label classify(const UserRecord& u) const;
  CommunityEstimate estimate(const UserStore& community) const;

  /// Copy with every temperature reset to 1.
  EnsembleBundle with_unit_temperatures() const;

  /// Checks dimensions and weight coverage; throws on the first problem.
  void validate() const;

  void save(const std::filesystem::path& dir) const;
  static EnsembleBundle load(const std::filesystem::path& dir);
};

}  // namespace commbot
