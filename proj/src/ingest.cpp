#include "commbot/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "commbot/error.hpp"

namespace commbot {

using nlohmann::json;
using namespace std::chrono;

namespace {

int digits(std::string_view s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) fail(ErrorKind::parse, "truncated timestamp '" + std::string(s) + "'");
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') fail(ErrorKind::parse, "bad timestamp '" + std::string(s) + "'");
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

void expect(std::string_view s, std::size_t pos, std::string_view chars) {
  if (pos >= s.size() || chars.find(s[pos]) == std::string_view::npos)
    fail(ErrorKind::parse, "bad timestamp '" + std::string(s) + "'");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  return out;
}

std::int64_t get_count(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return 0;
  if (!it->is_number_integer())
    fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": '" + key + "' must be an integer");
  return it->get<std::int64_t>();
}

bool get_bool(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return false;
  if (!it->is_boolean())
    fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": '" + key + "' must be a boolean");
  return it->get<bool>();
}

std::string get_string(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string())
    fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": '" + key + "' must be a string");
  return it->get<std::string>();
}

Timestamp get_time(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null())
    fail(ErrorKind::missing_field, "line " + std::to_string(line_no) + ": missing '" + key + "'");
  if (!it->is_string())
    fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": '" + key + "' must be a string");
  try {
    return parse_rfc3339(it->get<std::string>());
  } catch (const Error& e) {
    fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + e.what());
  }
}

}  // namespace

Timestamp parse_rfc3339(std::string_view s) {
  const int y = digits(s, 0, 4);
  expect(s, 4, "-");
  const int mo = digits(s, 5, 2);
  expect(s, 7, "-");
  const int d = digits(s, 8, 2);
  expect(s, 10, "Tt ");
  const int hh = digits(s, 11, 2);
  expect(s, 13, ":");
  const int mm = digits(s, 14, 2);
  expect(s, 16, ":");
  const int ss = digits(s, 17, 2);
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
  }
  int offset_minutes = 0;
  expect(s, pos, "Zz+-");
  if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '-' ? -1 : 1;
    const int oh = digits(s, pos + 1, 2);
    expect(s, pos + 3, ":");
    const int om = digits(s, pos + 4, 2);
    offset_minutes = sign * (oh * 60 + om);
    pos += 6;
  } else {
    pos += 1;
  }
  if (pos != s.size()) fail(ErrorKind::parse, "trailing characters in timestamp '" + std::string(s) + "'");

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60)
    fail(ErrorKind::parse, "invalid date in '" + std::string(s) + "'");
  return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss} - minutes{offset_minutes};
}

std::string format_rfc3339(Timestamp t) {
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss tod{t - day_point};
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(tod.hours().count()), static_cast<long long>(tod.minutes().count()),
                static_cast<long long>(tod.seconds().count()));
  return buf;
}

void validate(const UserRecord& u) {
  if (u.id.empty()) fail(ErrorKind::invariant_violation, "empty user id");
  const std::pair<const char*, std::int64_t> counts[] = {
      {"status_count", u.status_count},     {"follower_count", u.follower_count},
      {"friend_count", u.friend_count},     {"favorite_count", u.favorite_count},
      {"listed_count", u.listed_count},
  };
  for (const auto& [name, v] : counts)
    if (v < 0) fail(ErrorKind::invariant_violation, "user " + u.id + ": negative " + name);
  if (u.snapshot_at < u.created_at)
    fail(ErrorKind::invariant_violation, "user " + u.id + ": snapshot_at precedes created_at");
}

UserRecord parse_user_record(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": record is not an object");

  UserRecord u;
  auto id = j.find("id");
  if (id == j.end() || id->is_null()) fail(ErrorKind::missing_field, "line " + std::to_string(line_no) + ": missing 'id'");
  if (id->is_string())
    u.id = id->get<std::string>();
  else if (id->is_number_integer())
    u.id = std::to_string(id->get<std::int64_t>());
  else
    fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": 'id' must be a string");

  u.created_at = get_time(j, "created_at", line_no);
  u.snapshot_at = get_time(j, "snapshot_at", line_no);
  u.status_count = get_count(j, "status_count", line_no);
  u.follower_count = get_count(j, "follower_count", line_no);
  u.friend_count = get_count(j, "friend_count", line_no);
  u.favorite_count = get_count(j, "favorite_count", line_no);
  u.listed_count = get_count(j, "listed_count", line_no);
  u.default_profile = get_bool(j, "default_profile", line_no);
  u.profile_use_background_image = get_bool(j, "profile_use_background_image", line_no);
  u.verified = get_bool(j, "verified", line_no);
  u.is_protected = get_bool(j, "protected", line_no);
  u.has_location = get_bool(j, "has_location", line_no);
  u.screen_name = get_string(j, "screen_name", line_no);
  u.username = get_string(j, "username", line_no);
  u.description = get_string(j, "description", line_no);

  if (auto t = j.find("tweets"); t != j.end() && !t->is_null()) {
    if (!t->is_array()) fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": 'tweets' must be an array");
    for (const auto& tw : *t) {
      if (!tw.is_string()) fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": tweet must be a string");
      u.tweets.push_back(tw.get<std::string>());
    }
  }
  if (auto l = j.find("label"); l != j.end() && !l->is_null()) {
    auto parsed = l->is_string() ? parse_label(l->get<std::string>()) : std::nullopt;
    if (!parsed) fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": label must be \"human\" or \"bot\"");
    u.label = parsed;
  }
  validate(u);
  return u;
}

std::string serialize_user_record(const UserRecord& u) {
  json j = {
      {"id", u.id},
      {"created_at", format_rfc3339(u.created_at)},
      {"snapshot_at", format_rfc3339(u.snapshot_at)},
      {"status_count", u.status_count},
      {"follower_count", u.follower_count},
      {"friend_count", u.friend_count},
      {"favorite_count", u.favorite_count},
      {"listed_count", u.listed_count},
      {"default_profile", u.default_profile},
      {"profile_use_background_image", u.profile_use_background_image},
      {"verified", u.verified},
      {"protected", u.is_protected},
      {"has_location", u.has_location},
      {"screen_name", u.screen_name},
      {"username", u.username},
      {"description", u.description},
      {"tweets", u.tweets},
  };
  if (u.label) j["label"] = std::string(to_string(*u.label));
  return j.dump();
}

// ---------------------------------------------------------------- UserStore

void UserStore::put(UserRecord u, std::string source) {
  validate(u);
  std::string id = u.id;
  provenance_.insert_or_assign(id, std::move(source));
  users_.insert_or_assign(std::move(id), std::move(u));
}

void UserStore::insert(UserRecord u, std::string source) {
  if (contains(u.id)) fail(ErrorKind::invariant_violation, "duplicate user id " + u.id);
  put(std::move(u), std::move(source));
}

bool UserStore::contains(std::string_view id) const { return users_.find(id) != users_.end(); }

const UserRecord& UserStore::at(std::string_view id) const {
  auto it = users_.find(id);
  if (it == users_.end()) fail(ErrorKind::unknown_user, std::string(id));
  return it->second;
}

UserRecord& UserStore::at(std::string_view id) {
  auto it = users_.find(id);
  if (it == users_.end()) fail(ErrorKind::unknown_user, std::string(id));
  return it->second;
}

const std::string& UserStore::source_of(std::string_view id) const {
  auto it = provenance_.find(id);
  if (it == provenance_.end()) fail(ErrorKind::unknown_user, std::string(id));
  return it->second;
}

std::vector<std::string> UserStore::ids() const {
  std::vector<std::string> out;
  out.reserve(users_.size());
  for (const auto& [id, _] : users_) out.push_back(id);
  return out;
}

std::vector<const UserRecord*> UserStore::records() const {
  std::vector<const UserRecord*> out;
  out.reserve(users_.size());
  for (const auto& [_, u] : users_) out.push_back(&u);
  return out;
}

std::size_t UserStore::labeled_count() const {
  return static_cast<std::size_t>(
      std::count_if(users_.begin(), users_.end(), [](const auto& kv) { return kv.second.label.has_value(); }));
}

// ---------------------------------------------------------------- EdgeList

void EdgeList::add(std::string source, std::string target, Relation r) {
  if (!add_unique(source, target, r))
    fail(ErrorKind::invariant_violation, "duplicate edge " + source + " -> " + target);
}

bool EdgeList::add_unique(std::string source, std::string target, Relation r) {
  if (source == target) fail(ErrorKind::invariant_violation, "self-loop on " + source);
  auto [_, inserted] = seen_.emplace(std::make_pair(source, target), true);
  if (!inserted) return false;
  edges_.push_back({std::move(source), std::move(target), r});
  return true;
}

// ---------------------------------------------------------------- files

UserStore load_users(const std::filesystem::path& path, const std::string& source) {
  auto in = open_in(path);
  UserStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto u = parse_user_record(line, line_no);
    if (store.contains(u.id))
      fail(ErrorKind::invariant_violation, "line " + std::to_string(line_no) + ": duplicate id " + u.id);
    store.insert(std::move(u), source);
  }
  return store;
}

void save_users(const UserStore& store, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& [_, u] : store) out << serialize_user_record(u) << '\n';
  if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

EdgeList load_edges(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::parse, path.string() + ": missing header");
  const auto header = split_csv_line(line);
  auto col = [&](std::string_view name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::parse, path.string() + ": missing column " + std::string(name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cs = col("source_id"), ct = col("target_id"), cr = col("relation");
  EdgeList edges;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = split_csv_line(line);
    if (f.size() != header.size()) fail(ErrorKind::parse, "edges line " + std::to_string(line_no) + ": wrong field count");
    if (f[cr] != "follows") fail(ErrorKind::parse, "edges line " + std::to_string(line_no) + ": unknown relation " + f[cr]);
    try {
      edges.add(f[cs], f[ct]);
    } catch (const Error& e) {
      fail(e.kind(), "edges line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return edges;
}

void save_edges(const EdgeList& edges, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "source_id,target_id,relation\n";
  for (const auto& e : edges.edges()) out << e.source_id << ',' << e.target_id << ",follows\n";
  if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

std::map<std::string, Label> load_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::parse, path.string() + ": missing header");
  std::map<std::string, Label> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = split_csv_line(line);
    auto l = f.size() == 2 ? parse_label(f[1]) : std::nullopt;
    if (!l) fail(ErrorKind::parse, "labels line " + std::to_string(line_no) + ": expected id,label");
    out[f[0]] = *l;
  }
  return out;
}

void save_labels(const UserStore& store, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "id,label\n";
  for (const auto& [id, u] : store)
    if (u.label) out << id << ',' << to_string(*u.label) << '\n';
  if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

void apply_labels(UserStore& store, const std::map<std::string, Label>& labels) {
  for (const auto& [id, l] : labels) store.at(id).label = l;
}

// ---------------------------------------------------------------- merge/split/perturb

UserStore merge_datasets(const std::vector<UserStore>& stores) {
  if (stores.empty()) fail(ErrorKind::empty_input, "merge_datasets needs at least one store");
  UserStore out;
  for (const auto& s : stores)
    for (const auto& [id, u] : s) out.put(u, s.source_of(id));
  return out;
}

Split split_train_val(const UserStore& store, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    fail(ErrorKind::bad_fraction, "val_fraction must lie in (0,1)");
  std::vector<std::string> by_class[2];
  for (const auto& [id, u] : store)
    if (u.label) by_class[class_index(*u.label)].push_back(id);
  if (by_class[0].size() + by_class[1].size() < 2)
    fail(ErrorKind::insufficient_data, "split needs at least two labeled users");

  std::mt19937_64 rng(seed);
  Split out;
  for (auto& ids : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(ids.size()) * val_fraction));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto& dst = i < n_val ? out.val : out.train;
      dst.put(store.at(ids[i]), store.source_of(ids[i]));
    }
  }
  return out;
}

std::string_view to_string(VerifiedMode m) {
  switch (m) {
    case VerifiedMode::all_true: return "all_true";
    case VerifiedMode::all_false: return "all_false";
    case VerifiedMode::random: return "random";
  }
  return "?";
}

VerifiedMode parse_verified_mode(std::string_view s) {
  if (s == "all_true") return VerifiedMode::all_true;
  if (s == "all_false") return VerifiedMode::all_false;
  if (s == "random") return VerifiedMode::random;
  fail(ErrorKind::config, "unknown verified mode '" + std::string(s) + "'");
}

UserStore apply_verified_perturbation(const UserStore& store, VerifiedMode mode, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  UserStore out;
  for (const auto& [id, u] : store) {
    UserRecord v = u;
    switch (mode) {
      case VerifiedMode::all_true: v.verified = true; break;
      case VerifiedMode::all_false: v.verified = false; break;
      case VerifiedMode::random: v.verified = coin(rng); break;
    }
    out.put(std::move(v), store.source_of(id));
  }
  return out;
}

}  // namespace commbot
