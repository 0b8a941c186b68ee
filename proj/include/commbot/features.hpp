#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "commbot/ingest.hpp"

namespace commbot {

inline constexpr std::size_t kDirectFeatureCount = 12;
inline constexpr std::size_t kDerivedFeatureCount = 14;
inline constexpr std::size_t kFeatureCount = kDirectFeatureCount + kDerivedFeatureCount;
inline constexpr int kUnicodeGroupCount = 105;

/// Registry order: 12 metadata features, then 14 derived features.
const std::array<std::string_view, kFeatureCount>& feature_names();
std::size_t feature_index(std::string_view name);

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool operator==(const FeatureVector&) const = default;
};

/// Scalar sentiment score for a description. The default provider returns 0 (neutral).
using SentimentProvider = std::function<double(std::string_view)>;
double neutral_sentiment(std::string_view);

/// Account age in days, floored at 1e-3.
double user_age_days(const UserRecord& u);

FeatureVector compute_features(const UserRecord& u, const SentimentProvider& sentiment = neutral_sentiment);

// String helpers. All of them operate on Unicode scalar values decoded from UTF-8;
// invalid bytes decode to U+FFFD.
std::u32string decode_utf8(std::string_view s);

/// Shannon entropy in bits of the character distribution of `s`.
double string_entropy(std::string_view s);

/// Unit-cost edit distance.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// Bucket in [0, 104]. 0 for the empty string and for characters outside the
/// block list; otherwise the majority block, ties to the lower bucket.
int unicode_group(std::string_view s);
int unicode_bucket_of(char32_t cp);
std::string_view unicode_bucket_name(int bucket);

struct FeatureStats {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> stddev{};
};

/// Per-coordinate mean and population standard deviation. Needs >= 2 vectors.
FeatureStats fit_normalizer(std::span<const FeatureVector> xs);

/// z-score; coordinates with zero spread are only centred.
FeatureVector normalize(const FeatureVector& x, const FeatureStats& stats);

/// sign(x) * log1p(|x|) per coordinate; tames heavy-tailed counts before z-scoring.
FeatureVector log_compress(const FeatureVector& x);

}  // namespace commbot
