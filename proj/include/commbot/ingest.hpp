#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "commbot/types.hpp"

namespace commbot {

using Timestamp = std::chrono::sys_seconds;

/// Parses an RFC 3339 timestamp ("2020-01-01T00:00:00Z", fractional seconds and
/// numeric offsets accepted). Throws Error(parse) on malformed input.
Timestamp parse_rfc3339(std::string_view text);
std::string format_rfc3339(Timestamp t);

struct UserRecord {
  std::string id;
  Timestamp created_at{};
  Timestamp snapshot_at{};
  std::int64_t status_count = 0;
  std::int64_t follower_count = 0;
  std::int64_t friend_count = 0;
  std::int64_t favorite_count = 0;
  std::int64_t listed_count = 0;
  bool default_profile = false;
  bool profile_use_background_image = false;
  bool verified = false;
  bool is_protected = false;
  bool has_location = false;
  std::string screen_name;
  std::string username;
  std::string description;
  std::vector<std::string> tweets;  // most recent first
  std::optional<Label> label;

  bool operator==(const UserRecord&) const = default;
};

/// Throws Error(invariant_violation) when counts are negative, the id is empty,
/// or the snapshot precedes account creation.
void validate(const UserRecord& u);

/// One JSONL line -> record. `line_no` is only used for error messages.
UserRecord parse_user_record(std::string_view line, std::size_t line_no = 1);
std::string serialize_user_record(const UserRecord& u);

/// Id-keyed user collection. Iteration order is sorted by id.
class UserStore {
 public:
  /// Inserts or overwrites; provenance follows the winning record.
  void put(UserRecord u, std::string source);
  /// Inserts, rejecting an id that is already present.
  void insert(UserRecord u, std::string source);

  bool contains(std::string_view id) const;
  const UserRecord& at(std::string_view id) const;
  UserRecord& at(std::string_view id);
  const std::string& source_of(std::string_view id) const;

  std::size_t size() const { return users_.size(); }
  bool empty() const { return users_.empty(); }

  auto begin() const { return users_.begin(); }
  auto end() const { return users_.end(); }

  std::vector<std::string> ids() const;
  std::vector<const UserRecord*> records() const;
  std::size_t labeled_count() const;

 private:
  std::map<std::string, UserRecord, std::less<>> users_;
  std::map<std::string, std::string, std::less<>> provenance_;
};

enum class Relation : std::uint8_t { follows = 0 };

struct Edge {
  std::string source_id;
  std::string target_id;
  Relation relation = Relation::follows;

  auto operator<=>(const Edge&) const = default;
};

class EdgeList {
 public:
  /// Rejects self-loops and duplicate triples with Error(invariant_violation).
  void add(std::string source, std::string target, Relation r = Relation::follows);
  /// Like add, but silently skips duplicates. Returns whether the edge was new.
  bool add_unique(std::string source, std::string target, Relation r = Relation::follows);

  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return edges_.size(); }

 private:
  std::vector<Edge> edges_;
  std::map<std::pair<std::string, std::string>, bool> seen_;
};

// File formats.
UserStore load_users(const std::filesystem::path& path, const std::string& source);
void save_users(const UserStore& store, const std::filesystem::path& path);
EdgeList load_edges(const std::filesystem::path& path);
void save_edges(const EdgeList& edges, const std::filesystem::path& path);
/// id,label CSV.
std::map<std::string, Label> load_labels(const std::filesystem::path& path);
void save_labels(const UserStore& store, const std::filesystem::path& path);
/// Overwrites record labels; unknown ids raise Error(unknown_user).
void apply_labels(UserStore& store, const std::map<std::string, Label>& labels);

/// Id-keyed union; on collision the later store wins.
UserStore merge_datasets(const std::vector<UserStore>& stores);

struct Split {
  UserStore train;
  UserStore val;
};

/// Stratified, seeded partition of the labeled users.
Split split_train_val(const UserStore& store, double val_fraction, std::uint64_t seed);

enum class VerifiedMode { all_true, all_false, random };

std::string_view to_string(VerifiedMode m);
VerifiedMode parse_verified_mode(std::string_view s);

UserStore apply_verified_perturbation(const UserStore& store, VerifiedMode mode, std::uint64_t seed);

}  // namespace commbot
