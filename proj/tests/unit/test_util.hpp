#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "commbot/error.hpp"
#include "commbot/ingest.hpp"

namespace testutil {

// Runs f and reports the kind of the commbot::Error it throws, if any.
template <class F>
std::optional<commbot::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const commbot::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

#define CHECK_ERROR_KIND(expr, k) CHECK(::testutil::error_kind([&] { (void)(expr); }) == (k))

inline commbot::UserRecord user(std::string id, std::optional<commbot::Label> label = std::nullopt) {
  commbot::UserRecord u;
  u.id = std::move(id);
  u.created_at = commbot::parse_rfc3339("2020-01-01T00:00:00Z");
  u.snapshot_at = commbot::parse_rfc3339("2020-01-11T00:00:00Z");
  u.label = label;
  return u;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("commbot_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
