#include "commbot/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "commbot/error.hpp"

namespace commbot {

namespace {

struct UnicodeBlock {
  char32_t first;
  char32_t last;
  const char* name;
};

constexpr UnicodeBlock kBlocks[] = {
#include "unicode_blocks.inc"
};
static_assert(std::size(kBlocks) + 1 == kUnicodeGroupCount);

constexpr std::array<std::string_view, kFeatureCount> kNames = {
    // metadata
    "status_count",
    "follower_count",
    "friend_count",
    "favorite_count",
    "listed_count",
    "default_profile",
    "profile_use_background_image",
    "verified",
    "user_id",
    "protected",
    "has_location",
    "user_age",
    // derived
    "screen_name_username_digits",
    "tweet_frequency",
    "url_count",
    "bot_word_count",
    "username_entropy",
    "name_description_length",
    "followers_growth_rate",
    "friends_growth_rate",
    "hashtag_count",
    "follower_friend_ratio",
    "username_capital_letter_count",
    "screen_name_username_unicode_group",
    "description_sentiment_score",
    "username_screen_name_distance",
};

std::size_t count_substr(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::size_t count_digits(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }));
}

std::size_t count_hashtags(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i)
    if (s[i] == '#' && s[i + 1] != ' ' && s[i + 1] != '\t' && s[i + 1] != '\n' && s[i + 1] != '\r') ++n;
  return n;
}

double numeric_id(std::string_view id) {
  if (id.empty() || id.size() > 19) return 0.0;
  double v = 0.0;
  for (char c : id) {
    if (c < '0' || c > '9') return 0.0;
    v = v * 10.0 + (c - '0');
  }
  return v;
}

double b2d(bool b) { return b ? 1.0 : 0.0; }

}  // namespace

const std::array<std::string_view, kFeatureCount>& feature_names() { return kNames; }

std::size_t feature_index(std::string_view name) {
  auto it = std::find(kNames.begin(), kNames.end(), name);
  if (it == kNames.end()) fail(ErrorKind::config, "unknown feature '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - kNames.begin());
}

double neutral_sentiment(std::string_view) { return 0.0; }

double user_age_days(const UserRecord& u) {
  const double secs = static_cast<double>((u.snapshot_at - u.created_at).count());
  return std::max(secs / 86400.0, 1e-3);
}

FeatureVector compute_features(const UserRecord& u, const SentimentProvider& sentiment) {
  const double age = user_age_days(u);
  const double followers = static_cast<double>(u.follower_count);
  const double friends = static_cast<double>(u.friend_count);
  const std::string lower_all = ascii_lower(u.description) + ' ' + ascii_lower(u.screen_name) + ' ' + ascii_lower(u.username);
  const std::u32string username = decode_utf8(u.username);

  FeatureVector f;
  std::size_t i = 0;
  f[i++] = static_cast<double>(u.status_count);
  f[i++] = followers;
  f[i++] = friends;
  f[i++] = static_cast<double>(u.favorite_count);
  f[i++] = static_cast<double>(u.listed_count);
  f[i++] = b2d(u.default_profile);
  f[i++] = b2d(u.profile_use_background_image);
  f[i++] = b2d(u.verified);
  f[i++] = numeric_id(u.id);
  f[i++] = b2d(u.is_protected);
  f[i++] = b2d(u.has_location);
  f[i++] = age;

  f[i++] = static_cast<double>(count_digits(u.screen_name) + count_digits(u.username));
  f[i++] = static_cast<double>(u.status_count) / age;
  f[i++] = static_cast<double>(count_substr(u.description, "http://") + count_substr(u.description, "https://"));
  f[i++] = static_cast<double>(count_substr(lower_all, "bot"));
  f[i++] = string_entropy(u.username);
  f[i++] = static_cast<double>(decode_utf8(u.screen_name).size() + username.size() + decode_utf8(u.description).size());
  f[i++] = followers / age;
  f[i++] = friends / age;
  f[i++] = static_cast<double>(count_hashtags(u.screen_name) + count_hashtags(u.description));
  f[i++] = followers / std::max(friends, 1.0);
  f[i++] = static_cast<double>(std::count_if(username.begin(), username.end(), [](char32_t c) { return c >= U'A' && c <= U'Z'; }));
  f[i++] = static_cast<double>(unicode_group(u.screen_name + u.username));
  const double s = sentiment ? sentiment(u.description) : 0.0;
  f[i++] = std::isfinite(s) ? s : 0.0;
  f[i++] = static_cast<double>(levenshtein(u.username, u.screen_name));
  return f;
}

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len > 0 && i + static_cast<std::size_t>(len) <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((cc & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (ok && (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (!ok) {
      out.push_back(U'�');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

double string_entropy(std::string_view s) {
  const std::u32string cps = decode_utf8(s);
  if (cps.empty()) return 0.0;
  std::map<char32_t, std::size_t> counts;
  for (char32_t c : cps) ++counts[c];
  const double n = static_cast<double>(cps.size());
  double h = 0.0;
  for (const auto& [_, k] : counts) {
    const double p = static_cast<double>(k) / n;
    h -= p * std::log2(p);
  }
  return h == 0.0 ? 0.0 : h;  // avoid -0.0
}

std::size_t levenshtein(std::string_view a_utf8, std::string_view b_utf8) {
  const std::u32string a = decode_utf8(a_utf8);
  const std::u32string b = decode_utf8(b_utf8);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

int unicode_bucket_of(char32_t cp) {
  auto it = std::upper_bound(std::begin(kBlocks), std::end(kBlocks), cp,
                             [](char32_t v, const UnicodeBlock& b) { return v < b.first; });
  if (it == std::begin(kBlocks)) return 0;
  --it;
  if (cp > it->last) return 0;
  return static_cast<int>(it - std::begin(kBlocks)) + 1;
}

std::string_view unicode_bucket_name(int bucket) {
  if (bucket <= 0 || bucket >= kUnicodeGroupCount) return "Other";
  return kBlocks[bucket - 1].name;
}

int unicode_group(std::string_view s) {
  std::array<std::size_t, kUnicodeGroupCount> counts{};
  for (char32_t c : decode_utf8(s)) ++counts[static_cast<std::size_t>(unicode_bucket_of(c))];
  // max_element returns the first maximum, i.e. ties go to the lower bucket.
  const auto best = std::max_element(counts.begin(), counts.end());
  return *best == 0 ? 0 : static_cast<int>(best - counts.begin());
}

FeatureStats fit_normalizer(std::span<const FeatureVector> xs) {
  if (xs.size() < 2) fail(ErrorKind::insufficient_data, "normalizer needs at least two vectors");
  FeatureStats st;
  const double n = static_cast<double>(xs.size());
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    double m = 0.0;
    for (const auto& x : xs) m += x[k];
    m /= n;
    double v = 0.0;
    for (const auto& x : xs) v += (x[k] - m) * (x[k] - m);
    st.mean[k] = m;
    st.stddev[k] = std::sqrt(v / n);
  }
  return st;
}

FeatureVector normalize(const FeatureVector& x, const FeatureStats& stats) {
  FeatureVector out;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    const double c = x[k] - stats.mean[k];
    out[k] = stats.stddev[k] > 0.0 ? c / stats.stddev[k] : c;
  }
  return out;
}

FeatureVector log_compress(const FeatureVector& x) {
  FeatureVector out;
  for (std::size_t k = 0; k < kFeatureCount; ++k) out[k] = std::copysign(std::log1p(std::abs(x[k])), x[k]);
  return out;
}

}  // namespace commbot
