#include "commbot/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <random>
#include <unordered_map>

#include "commbot/error.hpp"

namespace commbot {

namespace {

using Rng = std::mt19937_64;

constexpr std::array kFirstNames = {"Maria", "James", "Aisha", "Lukas", "Priya", "Chen",  "Sofia", "Mateo",
                                    "Emma",  "Omar",  "Hana",  "Tom",   "Ines",  "Kofi",  "Yuki",  "Lena"};
constexpr std::array kLastNames = {"Lopez", "Smith",  "Khan",   "Becker", "Patel", "Wang",   "Rossi",  "Silva",
                                   "Brown", "Haddad", "Sato",   "Evans",  "Costa", "Mensah", "Tanaka", "Novak"};
constexpr std::array kBotStems = {"crypto", "news", "deals", "alert", "promo", "signal", "trend", "feed"};

constexpr std::array kHumanBios = {
    "coffee lover, amateur runner and proud parent",
    "teacher. opinions are my own",
    "photographer chasing light in small towns",
    "PhD student working on soil ecology",
    "nurse, gardener, terrible cook",
    "music, football and long walks",
    "writing about cities and the people in them",
    "",
};
constexpr std::array kBotBios = {
    "automated bot posting the latest crypto signals 24/7",
    "follow back guaranteed! daily giveaways and promo codes",
    "news bot: breaking headlines every 5 minutes",
    "best deals online, click the link for discounts",
    "auto-updating feed of trending hashtags",
    "bot account. retweets everything about #NFT",
};

constexpr std::array kHumanTweets = {
    "had a great time at the park with the kids today",
    "does anyone know a good place to fix a bike around here?",
    "finally finished that book, the ending surprised me",
    "rainy sunday, perfect for soup and a movie",
    "congrats to my sister on her new job, so proud",
    "my cat knocked over the plant again, send help",
    "trying a new recipe tonight, wish me luck",
    "the match last night was unbelievable",
    "thanks everyone for the birthday wishes yesterday",
    "long day at work but the sunset made up for it",
};
constexpr std::array kBotTweets = {
    "BREAKING: top 10 coins to buy now #crypto #bitcoin https://t.co/x1",
    "FLASH SALE 70% OFF today only click here https://t.co/d3 #deals",
    "follow back guaranteed retweet to win #giveaway #promo",
    "new signal alert buy now before it moons #crypto https://t.co/s9",
    "trending now #news #viral #breaking https://t.co/n4",
    "limited offer free shipping worldwide #shop https://t.co/p7",
    "auto post 4821 market update #stocks #trading",
    "click the link in bio for exclusive deals #ad #promo",
};

template <class Pool>
const char* pick(const Pool& pool, Rng& rng) {
  return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
}

bool coin(Rng& rng, double p) { return std::bernoulli_distribution(std::clamp(p, 0.01, 0.99))(rng); }

std::int64_t lognormal_count(Rng& rng, double mu, double sigma) {
  return static_cast<std::int64_t>(std::floor(std::exp(std::normal_distribution<double>(mu, sigma)(rng))));
}

std::string digits(Rng& rng, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s.push_back(static_cast<char>('0' + std::uniform_int_distribution<int>(0, 9)(rng)));
  return s;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

UserRecord make_user(std::string id, bool bot, double d, Rng& rng) {
  // Class-conditional offsets scale with d; at d = 0 both classes share one distribution.
  const double s = bot ? d : 0.0;
  UserRecord u;
  u.id = std::move(id);
  u.snapshot_at = parse_rfc3339("2022-03-01T00:00:00Z");
  const double age_days = std::exp(std::normal_distribution<double>(7.0 - 0.6 * s, 0.8)(rng));
  u.created_at = u.snapshot_at - std::chrono::seconds(static_cast<std::int64_t>(age_days * 86400.0) + 60);
  u.status_count = lognormal_count(rng, 7.0 + 1.0 * s, 1.5);
  u.follower_count = lognormal_count(rng, 5.0 - 1.0 * s, 1.8);
  u.friend_count = lognormal_count(rng, 5.5 + 0.6 * s, 1.2);
  u.favorite_count = lognormal_count(rng, 6.0 - 1.0 * s, 2.0);
  u.listed_count = lognormal_count(rng, 1.5 - 0.6 * s, 1.2);
  u.default_profile = coin(rng, 0.3 + 0.2 * s);
  u.profile_use_background_image = coin(rng, 0.6 - 0.15 * s);
  u.verified = coin(rng, bot ? 0.15 - 0.12 * d : 0.15 + 0.15 * d);
  u.is_protected = coin(rng, 0.08 - 0.05 * s);
  u.has_location = coin(rng, 0.7 - 0.3 * s);

  const double style = bot ? 0.5 + 0.35 * d : 0.5 - 0.35 * d;
  if (coin(rng, style)) {
    const std::string stem = pick(kBotStems, rng);
    const std::string tag = digits(rng, 4);
    u.username = stem + "Bot " + tag;
    u.screen_name = stem + "_" + tag + digits(rng, 2);
    u.description = pick(kBotBios, rng);
  } else {
    const std::string first = pick(kFirstNames, rng), last = pick(kLastNames, rng);
    u.username = first + " " + last;
    u.screen_name = coin(rng, 0.5) ? lower(first + last) : lower(first) + "_" + lower(last.substr(0, 1));
    u.description = pick(kHumanBios, rng);
  }

  const double bot_share = bot ? 0.5 + 0.2 * d : 0.5 - 0.2 * d;
  const int n_tweets = std::uniform_int_distribution<int>(5, 20)(rng);
  for (int t = 0; t < n_tweets; ++t) u.tweets.emplace_back(coin(rng, bot_share) ? pick(kBotTweets, rng) : pick(kHumanTweets, rng));
  u.label = bot ? Label::bot : Label::human;
  return u;
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.n_users < 2) fail(ErrorKind::config, "n_users must be >= 2");
  if (!(cfg.bot_fraction >= 0.0 && cfg.bot_fraction <= 1.0)) fail(ErrorKind::config, "bot_fraction must be in [0, 1]");
  if (!(cfg.homophily >= 0.0 && cfg.homophily <= 1.0)) fail(ErrorKind::config, "homophily must be in [0, 1]");
  if (!(cfg.separation >= 0.0) || !std::isfinite(cfg.separation)) fail(ErrorKind::config, "separation must be >= 0");
  if (!(cfg.mean_degree >= 0.0) || !std::isfinite(cfg.mean_degree) ||
      cfg.mean_degree > static_cast<double>(cfg.n_users - 1))
    fail(ErrorKind::config, "mean_degree must be in [0, n_users - 1]");
}

SynthCommunity generate_community(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const std::size_t n = cfg.n_users;
  const auto n_bots = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.bot_fraction));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_bot(n, false);
  for (std::size_t i = 0; i < n_bots; ++i) is_bot[order[i]] = true;

  const std::string prefix = cfg.id_prefix.empty() ? "s" + std::to_string(cfg.seed) + "_" : cfg.id_prefix;
  const std::size_t width = std::to_string(n - 1).size();
  std::vector<std::string> ids(n);
  SynthCommunity out;
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < n; ++i) {
    std::string num = std::to_string(i);
    ids[i] = prefix + "u" + std::string(width - num.size(), '0') + num;
    out.users.insert(make_user(ids[i], is_bot[i], cfg.separation, rng), "synthetic");
    by_class[is_bot[i] ? 1 : 0].push_back(i);
  }

  const auto target_edges = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.mean_degree / 2.0));
  std::uniform_int_distribution<std::size_t> any(0, n - 1);
  std::size_t attempts = 0;
  while (out.edges.size() < target_edges && attempts < 50 * target_edges + 100) {
    ++attempts;
    const std::size_t src = any(rng);
    const int c = is_bot[src] ? 1 : 0;
    const int dst_class = std::bernoulli_distribution(cfg.homophily)(rng) ? c : 1 - c;
    const auto& pool = by_class[static_cast<std::size_t>(dst_class)];
    if (pool.empty()) continue;
    const std::size_t dst = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    if (dst == src) continue;
    out.edges.add_unique(ids[src], ids[dst]);
  }
  return out;
}

Resample resample_by_proximity(const UserStore& pool, const EdgeList& edges, double target_fraction, std::size_t size,
                               std::uint64_t seed) {
  if (!(target_fraction >= 0.0 && target_fraction <= 1.0)) fail(ErrorKind::config, "target fraction must be in [0, 1]");
  if (size == 0) fail(ErrorKind::config, "community size must be >= 1");
  const auto need_bot = static_cast<std::size_t>(std::llround(static_cast<double>(size) * target_fraction));
  std::array<std::size_t, 2> quota{size - need_bot, need_bot};

  const auto ids = pool.ids();
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  std::array<std::size_t, 2> available{0, 0};
  std::vector<int> cls(ids.size(), -1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& l = pool.at(ids[i]).label;
    if (!l) continue;
    cls[i] = class_index(*l);
    ++available[static_cast<std::size_t>(cls[i])];
  }
  if (available[0] < quota[0] || available[1] < quota[1])
    fail(ErrorKind::infeasible_target, "pool has " + std::to_string(available[1]) + " bots and " +
                                           std::to_string(available[0]) + " humans; need " + std::to_string(quota[1]) +
                                           " and " + std::to_string(quota[0]));

  std::vector<std::vector<std::size_t>> adj(ids.size());
  for (const auto& e : edges.edges()) {
    auto a = index.find(e.source_id), b = index.find(e.target_id);
    if (a == index.end() || b == index.end()) continue;
    adj[a->second].push_back(b->second);
    adj[b->second].push_back(a->second);
  }
  for (auto& nb : adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }

  Rng rng(seed);
  std::vector<bool> visited(ids.size(), false);
  std::deque<std::pair<std::size_t, std::size_t>> queue;  // (node, reached-from or npos)
  constexpr auto npos = static_cast<std::size_t>(-1);
  Resample out;
  std::size_t remaining = quota[0] + quota[1];

  auto restart = [&] {
    // Unvisited users whose class still has room; the start is drawn uniformly from them.
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (!visited[i] && cls[i] >= 0 && quota[static_cast<std::size_t>(cls[i])] > 0) open.push_back(i);
    const std::size_t s = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
    visited[s] = true;
    queue.emplace_back(s, npos);
  };

  while (remaining > 0) {
    if (queue.empty()) restart();
    const auto [v, from] = queue.front();
    queue.pop_front();
    if (cls[v] >= 0 && quota[static_cast<std::size_t>(cls[v])] > 0) {
      --quota[static_cast<std::size_t>(cls[v])];
      --remaining;
      out.community.insert(pool.at(ids[v]), pool.source_of(ids[v]));
      out.trace.push_back({ids[v], from == npos ? std::string() : ids[from]});
    }
    for (std::size_t w : adj[v]) {
      if (visited[w]) continue;
      visited[w] = true;
      queue.emplace_back(w, v);
    }
  }
  return out;
}

}  // namespace commbot
