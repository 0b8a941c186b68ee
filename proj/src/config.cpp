#include "commbot/config.hpp"

#include <cctype>
#include <cmath>

#include "commbot/error.hpp"

namespace commbot {

using nlohmann::json;

namespace {

void flatten(const json& doc, const std::string& prefix, json& out) {
  for (const auto& [k, v] : doc.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object())
      flatten(v, key, out);
    else
      out[key] = v;
  }
}

// Coerces `v` to the type of the default, or throws Error(config).
json coerce(const std::string& key, const json& dflt, const json& v) {
  auto bad = [&] { fail(ErrorKind::config, "setting '" + key + "' expects a value like " + dflt.dump() + ", got " + v.dump()); };
  if (dflt.is_boolean()) {
    if (!v.is_boolean()) bad();
    return v;
  }
  if (dflt.is_number_integer()) {
    if (dflt.is_number_unsigned() && v.is_number() && v.get<double>() < 0.0) bad();
    if (v.is_number_integer()) return v;
    if (v.is_number_float() && std::isfinite(v.get<double>()) && std::floor(v.get<double>()) == v.get<double>())
      return static_cast<long long>(v.get<double>());
    bad();
  }
  if (dflt.is_number()) {
    if (!v.is_number() || !std::isfinite(v.get<double>())) bad();
    return v.get<double>();
  }
  if (dflt.is_array()) {
    if (!v.is_array() || v.empty()) bad();
    json out = json::array();
    for (const auto& e : v) out.push_back(coerce(key, dflt.front(), e));
    return out;
  }
  if (!v.is_string()) bad();
  return v;
}

json parse_loose(std::string_view text) {
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) return std::string(text);
  return v;
}

}  // namespace

const json& Settings::defaults() {
  static const json d = [] {
    const PipelineConfig p;
    const SynthConfig sy;
    const SweepConfig sw;
    json j;
    j["seed"] = p.seed;
    j["val_fraction"] = p.val_fraction;
    j["embedding_dim"] = p.embedding_dim;
    j["calibrate"] = p.calibrate;
    j["archive_teachers"] = p.archive_teachers;
    j["forest.n_trees"] = p.forest.n_trees;
    j["forest.max_depth"] = p.forest.max_depth;
    j["forest.max_features"] = p.forest.max_features;
    j["forest.bootstrap"] = p.forest.bootstrap;
    j["boost.rounds"] = p.boost.rounds;
    j["text.lr"] = p.text.learning_rate;
    j["text.batch_size"] = p.text.batch_size;
    j["text.epochs"] = p.text.epochs;
    j["text.l2"] = p.text.l2;
    j["text.hidden_dim"] = p.text.hidden_dim;
    j["text.dropout"] = p.text.dropout;
    j["graph.lr"] = p.graph.learning_rate;
    j["graph.batch_size"] = p.graph.batch_size;
    j["graph.epochs"] = p.graph.epochs;
    j["graph.l2"] = p.graph.l2;
    j["graph.hidden_dim"] = p.graph.hidden_dim;
    j["graph.dropout"] = p.graph.dropout;
    j["graph.layers"] = p.graph.layers;
    j["distill.lr"] = p.distill.learning_rate;
    j["distill.batch_size"] = p.distill.batch_size;
    j["distill.epochs"] = p.distill.epochs;
    j["distill.l2"] = p.distill.l2;
    j["distill.hidden_dim"] = p.distill.hidden_dim;
    j["distill.dropout"] = p.distill.dropout;
    j["distill.lambda"] = p.distill.lambda;
    j["weights.steps"] = p.weights.steps;
    j["weights.lr"] = p.weights.learning_rate;
    j["weights.max_backtracks"] = p.weights.max_backtracks;
    j["synth.n_users"] = sy.n_users;
    j["synth.bot_fraction"] = sy.bot_fraction;
    j["synth.separation"] = sy.separation;
    j["synth.homophily"] = sy.homophily;
    j["synth.mean_degree"] = sy.mean_degree;
    j["sweep.fractions"] = sw.fractions;
    j["sweep.size"] = sw.size;
    j["sweep.seeds"] = sw.seeds;
    return j;
  }();
  return d;
}

Settings::Settings() : values_(defaults()) {}

std::string Settings::env_name(std::string_view key) {
  std::string out = "COMMBOT_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void Settings::set(const std::string& key, const json& value) {
  const auto& d = defaults();
  if (!d.contains(key)) fail(ErrorKind::config, "unknown setting '" + key + "'");
  values_[key] = coerce(key, d.at(key), value);
}

void Settings::apply_env(const EnvLookup& lookup) {
  for (const auto& [key, _] : defaults().items())
    if (auto v = lookup(env_name(key))) set(key, parse_loose(*v));
}

void Settings::apply_file(const json& doc) {
  if (!doc.is_object()) fail(ErrorKind::config, "config document must be a JSON object");
  json flat = json::object();
  flatten(doc, "", flat);
  for (const auto& [key, v] : flat.items()) set(key, v);
}

void Settings::apply_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) fail(ErrorKind::config, "expected key=value, got '" + std::string(assignment) + "'");
  set(std::string(assignment.substr(0, eq)), parse_loose(assignment.substr(eq + 1)));
}

const json& Settings::at(const std::string& key) const {
  if (!values_.contains(key)) fail(ErrorKind::config, "unknown setting '" + key + "'");
  return values_.at(key);
}

PipelineConfig to_pipeline_config(const Settings& s) {
  PipelineConfig p;
  p.seed = static_cast<std::uint64_t>(s.integer("seed"));
  p.val_fraction = s.number("val_fraction");
  p.embedding_dim = static_cast<std::size_t>(s.integer("embedding_dim"));
  p.calibrate = s.flag("calibrate");
  p.archive_teachers = s.flag("archive_teachers");
  p.forest.n_trees = static_cast<int>(s.integer("forest.n_trees"));
  p.forest.max_depth = static_cast<int>(s.integer("forest.max_depth"));
  p.forest.max_features = static_cast<int>(s.integer("forest.max_features"));
  p.forest.bootstrap = s.flag("forest.bootstrap");
  p.boost.rounds = static_cast<int>(s.integer("boost.rounds"));
  p.text.learning_rate = s.number("text.lr");
  p.text.batch_size = static_cast<int>(s.integer("text.batch_size"));
  p.text.epochs = static_cast<int>(s.integer("text.epochs"));
  p.text.l2 = s.number("text.l2");
  p.text.hidden_dim = static_cast<int>(s.integer("text.hidden_dim"));
  p.text.dropout = s.number("text.dropout");
  p.graph.learning_rate = s.number("graph.lr");
  p.graph.batch_size = static_cast<int>(s.integer("graph.batch_size"));
  p.graph.epochs = static_cast<int>(s.integer("graph.epochs"));
  p.graph.l2 = s.number("graph.l2");
  p.graph.hidden_dim = static_cast<int>(s.integer("graph.hidden_dim"));
  p.graph.dropout = s.number("graph.dropout");
  p.graph.layers = static_cast<int>(s.integer("graph.layers"));
  p.distill.learning_rate = s.number("distill.lr");
  p.distill.batch_size = static_cast<int>(s.integer("distill.batch_size"));
  p.distill.epochs = static_cast<int>(s.integer("distill.epochs"));
  p.distill.l2 = s.number("distill.l2");
  p.distill.hidden_dim = static_cast<int>(s.integer("distill.hidden_dim"));
  p.distill.dropout = s.number("distill.dropout");
  p.distill.lambda = s.number("distill.lambda");
  p.weights.steps = static_cast<int>(s.integer("weights.steps"));
  p.weights.learning_rate = s.number("weights.lr");
  p.weights.max_backtracks = static_cast<int>(s.integer("weights.max_backtracks"));
  if (p.embedding_dim < 1 || p.forest.n_trees < 1 || p.boost.rounds < 1 || p.graph.layers < 1 || p.graph.hidden_dim < 1)
    fail(ErrorKind::config, "sizes and counts must be positive");
  if (!(p.distill.lambda >= 0.0 && p.distill.lambda <= 1.0)) fail(ErrorKind::bad_lambda, "distill.lambda must lie in [0,1]");
  return p;
}

SynthConfig to_synth_config(const Settings& s) {
  SynthConfig c;
  c.seed = static_cast<std::uint64_t>(s.integer("seed"));
  c.n_users = static_cast<std::size_t>(s.integer("synth.n_users"));
  c.bot_fraction = s.number("synth.bot_fraction");
  c.separation = s.number("synth.separation");
  c.homophily = s.number("synth.homophily");
  c.mean_degree = s.number("synth.mean_degree");
  validate(c);
  return c;
}

SweepConfig to_sweep_config(const Settings& s) {
  SweepConfig c;
  c.fractions = s.at("sweep.fractions").get<std::vector<double>>();
  c.size = static_cast<std::size_t>(s.integer("sweep.size"));
  c.seeds = s.at("sweep.seeds").get<std::vector<std::uint64_t>>();
  for (double f : c.fractions)
    if (!(f >= 0.0 && f <= 1.0)) fail(ErrorKind::config, "sweep fractions must lie in [0,1]");
  if (c.size < 1) fail(ErrorKind::config, "sweep.size must be positive");
  return c;
}

}  // namespace commbot
