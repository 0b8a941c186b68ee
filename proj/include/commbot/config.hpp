#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "commbot/eval.hpp"
#include "commbot/pipeline.hpp"
#include "commbot/synth.hpp"

namespace commbot {

/// Flat dotted-key settings ("graph.lr", "synth.n_users", ...). Starts from the
/// built-in defaults; later apply_* calls override earlier ones, so callers
/// apply environment, then config file, then command-line assignments.
class Settings {
 public:
  Settings();

  /// Every known key with its default value.
  static const nlohmann::json& defaults();
  /// COMMBOT_ + upper-cased key with '.' replaced by '_'.
  static std::string env_name(std::string_view key);

  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
  void apply_env(const EnvLookup& lookup);
  /// Nested or dotted JSON object; unknown keys raise Error(config).
  void apply_file(const nlohmann::json& doc);
  /// "key=value"; the value is read as JSON when it parses, else as a string.
  void apply_assignment(std::string_view assignment);
  void set(const std::string& key, const nlohmann::json& value);

  const nlohmann::json& at(const std::string& key) const;
  double number(const std::string& key) const { return at(key).get<double>(); }
  long long integer(const std::string& key) const { return at(key).get<long long>(); }
  bool flag(const std::string& key) const { return at(key).get<bool>(); }
  const nlohmann::json& flat() const { return values_; }

 private:
  nlohmann::json values_;
};

PipelineConfig to_pipeline_config(const Settings& s);
SynthConfig to_synth_config(const Settings& s);
SweepConfig to_sweep_config(const Settings& s);

}  // namespace commbot
