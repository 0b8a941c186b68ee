#include "commbot/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>

#include "commbot/error.hpp"

namespace commbot {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t salt) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ salt;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // Final avalanche so that nearby salts give unrelated buckets.
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

bool is_token_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0 || c == '_'; }

struct Registry {
  std::mutex mu;
  std::map<std::string, ProviderFactory> kinds;
};

Registry& registry() {
  static Registry r;
  static std::once_flag once;
  std::call_once(once, [] {
    r.kinds["hashing"] = [](const json& m) -> std::shared_ptr<const EmbeddingProvider> {
      return std::make_shared<HashingEmbedder>(m.at("name").get<std::string>(), m.at("dim").get<std::size_t>(),
                                               m.at("max_ngram").get<int>(), m.at("salt").get<std::uint64_t>());
    };
  });
  return r;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

HashingEmbedder::HashingEmbedder(std::string name, std::size_t dim, int max_ngram, std::uint64_t salt)
    : name_(std::move(name)), dim_(dim), max_ngram_(max_ngram), salt_(salt) {
  if (dim_ == 0) fail(ErrorKind::config, "embedding dim must be positive");
  if (max_ngram_ < 1 || max_ngram_ > 2) fail(ErrorKind::config, "hashing embedder supports 1- or 2-grams");
}

Vector HashingEmbedder::embed(std::string_view text) const {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(dim_));
  const auto tokens = tokenize(text);
  auto add = [&](std::string_view tok) {
    const std::uint64_t h = fnv1a(tok, salt_);
    const auto bucket = static_cast<Eigen::Index>(h % dim_);
    v[bucket] += (h >> 63) != 0 ? -1.0 : 1.0;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (max_ngram_ >= 2 && i + 1 < tokens.size()) add(tokens[i] + ' ' + tokens[i + 1]);
  }
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

json HashingEmbedder::manifest() const {
  return {{"kind", "hashing"}, {"name", name_}, {"dim", dim_}, {"max_ngram", max_ngram_}, {"salt", salt_}};
}

void register_provider_kind(const std::string& kind, ProviderFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.kinds[kind] = std::move(factory);
}

std::shared_ptr<const EmbeddingProvider> make_provider(const json& manifest) {
  const auto kind = manifest.at("kind").get<std::string>();
  ProviderFactory factory;
  {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    auto it = r.kinds.find(kind);
    if (it == r.kinds.end()) fail(ErrorKind::config, "embedding provider kind '" + kind + "' is not registered");
    factory = it->second;
  }
  auto p = factory(manifest);
  if (p->dim() != manifest.at("dim").get<std::size_t>())
    fail(ErrorKind::dimension, "provider '" + p->name() + "' dim differs from its manifest");
  return p;
}

std::vector<std::shared_ptr<const EmbeddingProvider>> default_providers(std::size_t dim) {
  return {std::make_shared<HashingEmbedder>("hash-unigram", dim, 1, 0x5eed0001ULL),
          std::make_shared<HashingEmbedder>("hash-bigram", dim, 2, 0x5eed0002ULL)};
}

std::string truncate_utf8(std::string_view s, std::size_t max_chars) {
  std::size_t chars = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if ((c & 0xC0) != 0x80) {
      if (chars == max_chars) return std::string(s.substr(0, i));
      ++chars;
    }
  }
  return std::string(s);
}

Vector encode_user(const EmbeddingProvider& provider, const UserRecord& u) {
  const auto dim = static_cast<Eigen::Index>(provider.dim());
  Vector out = Vector::Zero(2 * dim);
  const std::size_t n = std::min(u.tweets.size(), kMaxTweetsEncoded);
  auto checked = [&](Vector e) {
    if (e.size() != dim) fail(ErrorKind::dimension, "provider '" + provider.name() + "' returned a wrong-sized vector");
    return e;
  };
  for (std::size_t i = 0; i < n; ++i) out.head(dim) += checked(provider.embed(truncate_utf8(u.tweets[i], kMaxTweetChars)));
  if (n > 0) out.head(dim) /= static_cast<double>(n);
  if (!u.description.empty()) out.tail(dim) = checked(provider.embed(u.description));
  return out;
}

double head_cross_entropy(const DenseHead& head, const RowMatrix& X, std::span<const Label> y, double l2,
                          Vector* grad) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) fail(ErrorKind::dimension, "rows and labels differ");
  DenseHead::Tape tape;
  const Matrix z = head.forward(X, 0.0, nullptr, tape);
  const Matrix p = softmax_rows(z);
  const double n = static_cast<double>(y.size());
  double loss = 0.0;
  Matrix dz = p;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    loss += cross_entropy({z(r, 0), z(r, 1)}, y[i]);
    dz(r, class_index(y[i])) -= 1.0;
  }
  const Vector theta = head.parameters();
  loss = loss / n + 0.5 * l2 * theta.squaredNorm();
  if (grad) *grad = head.backward(X, tape, dz / n) + l2 * theta;
  return loss;
}

DenseHead train_text_head(const RowMatrix& encoded, std::span<const Label> y, const TextTrainConfig& config,
                          TrainTrace* trace) {
  if (static_cast<std::size_t>(encoded.rows()) != y.size()) fail(ErrorKind::dimension, "rows and labels differ");
  if (!has_both_classes(y)) fail(ErrorKind::single_class, "text head needs both classes");
  if (config.batch_size < 1 || config.epochs < 0) fail(ErrorKind::config, "invalid text training schedule");

  std::mt19937_64 rng(config.seed);
  DenseHead head(encoded.cols(), config.hidden_dim, rng());
  Adam opt(config.learning_rate, config.l2);
  std::vector<int> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  Vector theta = head.parameters();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const int> batch(order.data() + start, end - start);
      const RowMatrix Xb = gather_rows(encoded, batch);
      DenseHead::Tape tape;
      const Matrix z = head.forward(Xb, config.dropout, &rng, tape);
      Matrix dz = softmax_rows(z);
      for (std::size_t i = 0; i < batch.size(); ++i)
        dz(static_cast<Eigen::Index>(i), class_index(y[static_cast<std::size_t>(batch[i])])) -= 1.0;
      dz /= static_cast<double>(batch.size());
      opt.step(theta, head.backward(Xb, tape, dz));
      head.set_parameters(theta);
    }
    if (trace) trace->epoch_loss.push_back(head_cross_entropy(head, encoded, y, config.l2, nullptr));
  }
  return head;
}

LogitPair predict_text(const DenseHead& head, std::span<const double> encoded) { return head.predict(encoded); }

}  // namespace commbot
