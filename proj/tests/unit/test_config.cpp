#include <map>

#include "commbot/config.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace commbot;
using nlohmann::json;

namespace {

Settings::EnvLookup env(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    if (auto it = vars.find(name); it != vars.end()) return it->second;
    return std::nullopt;
  };
}

}  // namespace

TEST_CASE("defaults mirror the library configs") {
  const Settings s;
  const auto p = to_pipeline_config(s);
  const PipelineConfig d;
  CHECK(p.seed == d.seed);
  CHECK(p.embedding_dim == d.embedding_dim);
  CHECK(p.graph.learning_rate == d.graph.learning_rate);
  CHECK(p.distill.lambda == d.distill.lambda);
  CHECK(p.forest.n_trees == d.forest.n_trees);
  CHECK(to_sweep_config(s).fractions == SweepConfig{}.fractions);
  CHECK(to_synth_config(s).separation == SynthConfig{}.separation);
}

TEST_CASE("environment variable names") {
  CHECK(Settings::env_name("seed") == "COMMBOT_SEED");
  CHECK(Settings::env_name("graph.lr") == "COMMBOT_GRAPH_LR");
  CHECK(Settings::env_name("distill.lambda") == "COMMBOT_DISTILL_LAMBDA");
}

TEST_CASE("flags override file, file overrides environment") {
  Settings s;
  s.apply_env(env({{"COMMBOT_SEED", "7"}, {"COMMBOT_GRAPH_LR", "0.5"}, {"COMMBOT_BOOST_ROUNDS", "3"}}));
  CHECK(s.integer("seed") == 7);
  CHECK(s.number("graph.lr") == 0.5);

  s.apply_file(json::parse(R"({"graph": {"lr": 0.25}, "boost.rounds": 9})"));
  CHECK(s.number("graph.lr") == 0.25);
  CHECK(s.integer("boost.rounds") == 9);
  CHECK(s.integer("seed") == 7);

  s.apply_assignment("graph.lr=0.125");
  s.apply_assignment("sweep.fractions=[0.2,0.4]");
  CHECK(s.number("graph.lr") == 0.125);
  CHECK(to_sweep_config(s).fractions == std::vector<double>{0.2, 0.4});
  CHECK(s.integer("boost.rounds") == 9);
}

TEST_CASE("type coercion") {
  Settings s;
  s.set("graph.lr", 1);
  CHECK(s.at("graph.lr").is_number_float());
  s.set("boost.rounds", 4.0);
  CHECK(s.integer("boost.rounds") == 4);
  CHECK_ERROR_KIND(s.set("boost.rounds", 4.5), ErrorKind::config);
  CHECK_ERROR_KIND(s.set("embedding_dim", -1), ErrorKind::config);
  CHECK_ERROR_KIND(s.set("calibrate", 1), ErrorKind::config);
  CHECK_ERROR_KIND(s.apply_assignment("graph.lr=fast"), ErrorKind::config);
  CHECK_ERROR_KIND(s.set("sweep.seeds", json::array()), ErrorKind::config);
  s.apply_assignment("calibrate=false");
  CHECK_FALSE(s.flag("calibrate"));
}

TEST_CASE("unknown keys and malformed input") {
  Settings s;
  CHECK_ERROR_KIND(s.set("graph.learning_rate", 0.1), ErrorKind::config);
  CHECK_ERROR_KIND(s.apply_file(json::parse(R"({"graph": {"nope": 1}})")), ErrorKind::config);
  CHECK_ERROR_KIND(s.apply_file(json::array()), ErrorKind::config);
  CHECK_ERROR_KIND(s.apply_assignment("no_equals_sign"), ErrorKind::config);
  CHECK_ERROR_KIND(s.apply_assignment("=3"), ErrorKind::config);
  CHECK_ERROR_KIND(s.apply_env(env({{"COMMBOT_SEED", "abc"}})), ErrorKind::config);
  CHECK_ERROR_KIND(s.at("missing"), ErrorKind::config);
}

TEST_CASE("range checks on conversion") {
  Settings s;
  s.set("distill.lambda", 1.5);
  CHECK_ERROR_KIND(to_pipeline_config(s), ErrorKind::bad_lambda);
  s.set("distill.lambda", 0.5);
  s.set("embedding_dim", 0);
  CHECK_ERROR_KIND(to_pipeline_config(s), ErrorKind::config);

  Settings t;
  t.set("synth.bot_fraction", 1.5);
  CHECK_ERROR_KIND(to_synth_config(t), ErrorKind::config);
  Settings u;
  u.set("sweep.fractions", json::array({0.5, 1.2}));
  CHECK_ERROR_KIND(to_sweep_config(u), ErrorKind::config);
}
