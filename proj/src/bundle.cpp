#include "commbot/bundle.hpp"

#include <fstream>
#include <set>

#include "commbot/error.hpp"

namespace commbot {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "commbot-bundle";

std::string file_name_for(const std::string& name) {
  std::string out;
  for (char c : name) out.push_back((std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_');
  return out + ".json";
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

const char* kind_of(const SubModelParams& p) {
  return std::visit(
      [](const auto& m) -> const char* {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ForestModel>) return "random_forest";
        if constexpr (std::is_same_v<T, BoostModel>) return "adaboost";
        if constexpr (std::is_same_v<T, TextSubModel>) return "text_head";
        return "graph_student";
      },
      p);
}

json params_to_json(const SubModelParams& p) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ForestModel> || std::is_same_v<T, BoostModel>) {
          return to_json(m);
        } else if constexpr (std::is_same_v<T, TextSubModel>) {
          return {{"kind", "text_head"}, {"version", 1}, {"provider", m.provider}, {"head", to_json(m.head)}};
        } else {
          json j = to_json(m.student);
          j["teacher_variant"] = to_string(m.teacher_variant);
          return j;
        }
      },
      p);
}

SubModelParams params_from_json(const std::string& kind, const json& j) {
  if (kind == "random_forest") return forest_from_json(j);
  if (kind == "adaboost") return boost_from_json(j);
  if (kind == "text_head") {
    if (j.at("version").get<int>() != 1) fail(ErrorKind::version, "unsupported text head file");
    return TextSubModel{j.at("provider").get<std::string>(), dense_head_from_json(j.at("head"))};
  }
  if (kind == "graph_student")
    return StudentSubModel{parse_gnn_variant(j.at("teacher_variant").get<std::string>()), student_from_json(j)};
  fail(ErrorKind::config, "unknown sub-model kind '" + kind + "'");
}

std::size_t provider_index(const EnsembleBundle& b, std::string_view name) {
  for (std::size_t i = 0; i < b.providers.size(); ++i)
    if (b.providers[i]->name() == name) return i;
  fail(ErrorKind::config, "bundle has no provider named '" + std::string(name) + "'");
}

}  // namespace

std::vector<std::string> EnsembleBundle::names() const {
  std::vector<std::string> out;
  for (const auto& s : sub_models) out.push_back(s.name);
  return out;
}

const EmbeddingProvider& EnsembleBundle::provider(std::string_view name) const {
  return *providers[provider_index(*this, name)];
}

std::vector<double> EnsembleBundle::node_features(const FeatureVector& raw, std::span<const double> node_encoding) const {
  const FeatureVector z = normalize(log_compress(raw), normalizer);
  std::vector<double> out(z.values.begin(), z.values.end());
  out.insert(out.end(), node_encoding.begin(), node_encoding.end());
  return out;
}

UserInputs EnsembleBundle::prepare(const UserRecord& u) const {
  UserInputs in;
  in.raw = compute_features(u);
  for (const auto& p : providers) {
    const Vector e = encode_user(*p, u);
    in.encodings.emplace_back(e.data(), e.data() + e.size());
  }
  in.node_features = node_features(in.raw, in.encodings[provider_index(*this, node_provider)]);
  return in;
}

std::vector<LogitPair> EnsembleBundle::logits(const UserInputs& in) const {
  std::vector<LogitPair> out;
  out.reserve(sub_models.size());
  for (const auto& s : sub_models) {
    out.push_back(std::visit(
        [&](const auto& m) -> LogitPair {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, ForestModel> || std::is_same_v<T, BoostModel>) {
            return predict_tabular(m, in.raw.values);
          } else if constexpr (std::is_same_v<T, TextSubModel>) {
            return predict_text(m.head, in.encodings[provider_index(*this, m.provider)]);
          } else {
            return predict_student(m.student, in.node_features);
          }
        },
        s.params));
  }
  return out;
}

std::vector<ProbPair> EnsembleBundle::calibrate(std::span<const LogitPair> z) const {
  if (z.size() != sub_models.size()) fail(ErrorKind::dimension, "one logit pair per sub-model is required");
  std::vector<ProbPair> out;
  out.reserve(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out.push_back(apply_temperature(z[k], sub_models[k].temperature));
  return out;
}

Label EnsembleBundle::classify(const UserRecord& u) const {
  const auto p = probabilities(u);
  const auto alpha = weights.alphas();
  return commbot::classify(p, alpha);
}

CommunityEstimate EnsembleBundle::estimate(const UserStore& community) const {
  std::vector<std::vector<ProbPair>> users;
  users.reserve(community.size());
  for (const auto& [_, u] : community) users.push_back(probabilities(u));
  return estimate_community(users, weights);
}

EnsembleBundle EnsembleBundle::with_unit_temperatures() const {
  EnsembleBundle out = *this;
  for (auto& s : out.sub_models) s.temperature = Temperature(1.0);
  return out;
}

void EnsembleBundle::validate() const {
  if (sub_models.empty()) fail(ErrorKind::invariant_violation, "bundle has no sub-models");
  if (weights.size() != sub_models.size()) fail(ErrorKind::key_mismatch, "weights do not cover the sub-models");
  std::set<std::string> seen;
  const std::size_t node_dim = kFeatureCount + 2 * provider(node_provider).dim();
  for (std::size_t k = 0; k < sub_models.size(); ++k) {
    const auto& s = sub_models[k];
    if (!seen.insert(s.name).second) fail(ErrorKind::invariant_violation, "duplicate sub-model " + s.name);
    if (weights.entries()[k].name != s.name) fail(ErrorKind::key_mismatch, "weight order differs at " + s.name);
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, ForestModel> || std::is_same_v<T, BoostModel>) {
            if (m.n_features != static_cast<int>(kFeatureCount)) fail(ErrorKind::dimension, s.name + ": feature width");
          } else if constexpr (std::is_same_v<T, TextSubModel>) {
            if (static_cast<std::size_t>(m.head.input_dim()) != 2 * provider(m.provider).dim())
              fail(ErrorKind::dimension, s.name + ": text head width");
          } else {
            if (static_cast<std::size_t>(m.student.head.input_dim()) != node_dim)
              fail(ErrorKind::dimension, s.name + ": student width");
          }
        },
        s.params);
  }
}

void EnsembleBundle::save(const std::filesystem::path& dir) const {
  validate();
  std::error_code ec;
  std::filesystem::create_directories(dir / "models", ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());

  json models = json::array();
  for (std::size_t k = 0; k < sub_models.size(); ++k) {
    const auto& s = sub_models[k];
    const std::string file = "models/" + file_name_for(s.name);
    write_json(dir / file, params_to_json(s.params));
    models.push_back({{"name", s.name},
                      {"channel", to_string(s.channel)},
                      {"kind", kind_of(s.params)},
                      {"file", file},
                      {"temperature", s.temperature.value()},
                      {"alpha", weights.entries()[k].alpha}});
  }
  json teachers = json::array();
  if (!archived_teachers.empty()) std::filesystem::create_directories(dir / "teachers", ec);
  for (const auto& [name, g] : archived_teachers) {
    const std::string file = "teachers/" + file_name_for(name);
    write_json(dir / file, to_json(g));
    teachers.push_back({{"name", name}, {"file", file}});
  }
  json providers_j = json::array();
  for (const auto& p : providers) providers_j.push_back(p->manifest());
  json registry = json::array();
  for (auto n : feature_names()) registry.push_back(n);

  const json manifest = {
      {"format", kFormat},
      {"version", kBundleVersion},
      {"sub_models", std::move(models)},
      {"feature_registry", std::move(registry)},
      {"providers", std::move(providers_j)},
      {"node_provider", node_provider},
      {"normalizer",
       {{"log_compress", true},
        {"mean", std::vector<double>(normalizer.mean.begin(), normalizer.mean.end())},
        {"stddev", std::vector<double>(normalizer.stddev.begin(), normalizer.stddev.end())}}},
      {"archived_teachers", std::move(teachers)},
  };
  write_json(dir / "manifest.json", manifest);
}

EnsembleBundle EnsembleBundle::load(const std::filesystem::path& dir) {
  const json m = read_json(dir / "manifest.json");
  try {
    if (m.at("format").get<std::string>() != kFormat) fail(ErrorKind::version, "not a bundle manifest");
    if (m.at("version").get<int>() != kBundleVersion)
      fail(ErrorKind::version, "bundle version " + std::to_string(m.at("version").get<int>()) + ", expected " +
                                   std::to_string(kBundleVersion));
    const auto registry = m.at("feature_registry").get<std::vector<std::string>>();
    if (registry.size() != kFeatureCount || !std::equal(registry.begin(), registry.end(), feature_names().begin()))
      fail(ErrorKind::version, "feature registry differs from this build");

    EnsembleBundle b;
    for (const auto& pj : m.at("providers")) b.providers.push_back(make_provider(pj));
    b.node_provider = m.at("node_provider").get<std::string>();
    const auto& nj = m.at("normalizer");
    if (!nj.at("log_compress").get<bool>()) fail(ErrorKind::version, "unsupported normalizer mode");
    const auto mean = nj.at("mean").get<std::vector<double>>();
    const auto sd = nj.at("stddev").get<std::vector<double>>();
    if (mean.size() != kFeatureCount || sd.size() != kFeatureCount) fail(ErrorKind::dimension, "normalizer width");
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      if (!std::isfinite(mean[k]) || !std::isfinite(sd[k]) || sd[k] < 0.0)
        fail(ErrorKind::invariant_violation, "invalid normalizer statistics");
      b.normalizer.mean[k] = mean[k];
      b.normalizer.stddev[k] = sd[k];
    }

    std::vector<WeightEntry> entries;
    for (const auto& sj : m.at("sub_models")) {
      SubModel s{sj.at("name").get<std::string>(), parse_channel(sj.at("channel").get<std::string>()),
                 params_from_json(sj.at("kind").get<std::string>(), read_json(dir / sj.at("file").get<std::string>())),
                 Temperature(sj.at("temperature").get<double>())};
      entries.push_back({s.name, s.channel, sj.at("alpha").get<double>()});
      b.sub_models.push_back(std::move(s));
    }
    b.weights = EnsembleWeights(std::move(entries));
    for (const auto& tj : m.at("archived_teachers"))
      b.archived_teachers.emplace_back(tj.at("name").get<std::string>(), gnn_from_json(read_json(dir / tj.at("file").get<std::string>())));
    b.validate();
    return b;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, "bundle manifest: " + std::string(e.what()));
  }
}

}  // namespace commbot
