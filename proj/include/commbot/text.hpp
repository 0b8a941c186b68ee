#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "commbot/ingest.hpp"
#include "commbot/linalg.hpp"
#include "commbot/nn.hpp"

namespace commbot {

inline constexpr std::size_t kMaxTweetsEncoded = 20;
inline constexpr std::size_t kMaxTweetChars = 512;

/// Deterministic text -> vector map standing in for a sentence encoder.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual const std::string& name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Vector embed(std::string_view text) const = 0;
  /// Enough to rebuild the provider through the registry.
  virtual nlohmann::json manifest() const = 0;
};

/// Signed feature hashing of lower-cased word tokens (and optionally adjacent
/// word pairs), L2-normalised.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  HashingEmbedder(std::string name, std::size_t dim, int max_ngram, std::uint64_t salt);

  const std::string& name() const override { return name_; }
  std::size_t dim() const override { return dim_; }
  Vector embed(std::string_view text) const override;
  nlohmann::json manifest() const override;

 private:
  std::string name_;
  std::size_t dim_;
  int max_ngram_;
  std::uint64_t salt_;
};

std::vector<std::string> tokenize(std::string_view text);

using ProviderFactory = std::function<std::shared_ptr<const EmbeddingProvider>(const nlohmann::json& manifest)>;

/// Registers a factory under a provider kind. Built-in kind: "hashing".
void register_provider_kind(const std::string& kind, ProviderFactory factory);
/// Rebuilds a provider from its manifest; unknown kinds raise Error(config).
std::shared_ptr<const EmbeddingProvider> make_provider(const nlohmann::json& manifest);

/// The two default providers (unigram and unigram+bigram hashing, 256 dims each).
std::vector<std::shared_ptr<const EmbeddingProvider>> default_providers(std::size_t dim = 256);

/// Truncates to at most `max_chars` Unicode scalar values.
std::string truncate_utf8(std::string_view s, std::size_t max_chars);

/// [mean embedding of up to 20 most recent tweets || description embedding].
Vector encode_user(const EmbeddingProvider& provider, const UserRecord& u);

struct TextTrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int epochs = 50;
  double l2 = 1e-5;
  /// 0 selects the plain linear head.
  int hidden_dim = 0;
  double dropout = 0.5;
  std::uint64_t seed = 1;
};

struct TrainTrace {
  /// Mean training loss (data term plus L2) after each epoch, in inference mode.
  std::vector<double> epoch_loss;
};

/// Mean softmax cross-entropy plus 0.5 * l2 * ||theta||^2; fills `grad` when non-null.
double head_cross_entropy(const DenseHead& head, const RowMatrix& X, std::span<const Label> y, double l2,
                          Vector* grad);

DenseHead train_text_head(const RowMatrix& encoded, std::span<const Label> y, const TextTrainConfig& config,
                          TrainTrace* trace = nullptr);

LogitPair predict_text(const DenseHead& head, std::span<const double> encoded);

}  // namespace commbot
