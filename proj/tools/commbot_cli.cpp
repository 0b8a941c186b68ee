// Command-line front end: data generation, training, calibration, weighting,
// estimation and the evaluation protocols.
//
// Settings precedence: flags > --config file > COMMBOT_* environment > defaults.
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 infeasible evaluation.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "commbot/config.hpp"
#include "commbot/error.hpp"
#include "commbot/eval.hpp"
#include "commbot/pipeline.hpp"

using namespace commbot;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInfeasible = 4;

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::bad_fraction:
    case ErrorKind::bad_lambda:
    case ErrorKind::bad_temperature:
      return kExitConfig;
    case ErrorKind::infeasible_target:
      return kExitInfeasible;
    default:
      return kExitData;
  }
}

// Options every command accepts.
struct Common {
  std::string config_path;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON settings document");
    cmd->add_option("--set", assignments, "Override one setting, e.g. --set graph.lr=0.01")->take_all();
    cmd->add_option("--seed", seed, "Master seed");
  }

  Settings resolve() const {
    Settings s;
    s.apply_env([](const std::string& name) -> std::optional<std::string> {
      if (const char* v = std::getenv(name.c_str())) return std::string(v);
      return std::nullopt;
    });
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) fail(ErrorKind::config, "cannot open config " + config_path);
      const json doc = json::parse(in, nullptr, false);
      if (doc.is_discarded()) fail(ErrorKind::config, "config " + config_path + " is not valid JSON");
      s.apply_file(doc);
    }
    for (const auto& a : assignments) s.apply_assignment(a);
    if (seed) s.set("seed", *seed);
    return s;
  }
};

struct DataPaths {
  std::string users, edges, labels;

  void attach(CLI::App* cmd, bool users_required) {
    auto* u = cmd->add_option("--users", users, "Users file (JSON lines)");
    if (users_required) u->required();
    cmd->add_option("--edges", edges, "Edges file (CSV)");
    cmd->add_option("--labels", labels, "Labels file (CSV id,label)");
  }

  UserStore load_store() const {
    UserStore s = load_users(users, fs::path(users).filename().string());
    if (!labels.empty()) apply_labels(s, load_labels(labels));
    return s;
  }
  EdgeList load_edge_list() const { return edges.empty() ? EdgeList{} : load_edges(edges); }
};

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

json estimate_json(const CommunityEstimate& e) {
  return {{"p_hat", e.p_hat},
          {"n_users", e.n_users},
          {"n_bots_predicted", e.n_bots_predicted},
          {"mean_bot_probability", e.mean_bot_probability}};
}

json report_json(const TrainingReport& r) {
  json models = json::array();
  for (const auto& m : r.models)
    models.push_back({{"name", m.name},
                      {"val_accuracy", m.val_accuracy},
                      {"ece_before", m.ece_before},
                      {"ece_after", m.ece_after},
                      {"temperature", m.temperature},
                      {"alpha", m.alpha}});
  return {{"models", models},
          {"weight_nll", r.weight_nll},
          {"ensemble_val_accuracy", r.ensemble_val_accuracy},
          {"teacher_student_agreement", r.teacher_student_agreement},
          {"n_train", r.n_train},
          {"n_val", r.n_val}};
}

json summary_json(const EvalReport& r) {
  json j = {{"rows", r.rows.size()}, {"infeasible", r.infeasible.size()}, {"mae", r.mae}, {"max_error", r.max_error}};
  if (r.individual) j["individual"] = {{"accuracy", r.individual->accuracy}, {"f1", r.individual->f1}};
  for (const auto& inf : r.infeasible)
    j["infeasible_rows"].push_back({{"target_fraction", inf.target_fraction}, {"seed", inf.seed}, {"reason", inf.reason}});
  return j;
}

void write_outputs(const EvalReport& r, const std::string& csv, const std::string& svg) {
  if (!csv.empty()) write_report_csv(r, csv);
  if (!svg.empty()) write_report_svg(r, svg);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Reads a report CSV written by write_report_csv.
EvalReport read_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::parse, path.string() + ": empty report");
  const auto header = split_csv_line(line);
  if (header.size() < 7 || header[0] != "community_id") fail(ErrorKind::parse, path.string() + ": not a report CSV");
  EvalReport r;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) fail(ErrorKind::parse, path.string() + ": line " + std::to_string(ln) + " has wrong width");
    try {
      EvalRow row;
      row.community_id = f[0];
      row.target_fraction = std::stod(f[1]);
      row.seed = std::stoull(f[2]);
      row.true_fraction = std::stod(f[3]);
      row.estimated_fraction = std::stod(f[4]);
      row.abs_error = std::stod(f[5]);
      row.n_users = std::stoull(f[6]);
      for (std::size_t k = 7; k < f.size(); ++k)
        if (!f[k].empty()) row.diagnostics[header[k].substr(header[k].find(':') + 1)] = std::stod(f[k]);
      r.rows.push_back(std::move(row));
    } catch (const std::logic_error&) {
      fail(ErrorKind::parse, path.string() + ": bad number on line " + std::to_string(ln));
    }
  }
  r.summarize();
  return r;
}

UserStore labeled_only(const UserStore& s) {
  UserStore out;
  for (const auto& [id, u] : s)
    if (u.label) out.insert(u, s.source_of(id));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Community-level bot fraction estimation"};
  app.require_subcommand(1);

  // synth-generate
  Common c_synth;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth-generate", "Write a synthetic labeled community (users, edges, labels)");
  c_synth.attach(synth);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  Common c_train;
  DataPaths d_train;
  std::string train_out, train_report;
  auto* train = app.add_subcommand("train", "Train, calibrate and weight every sub-model; write a bundle");
  c_train.attach(train);
  d_train.attach(train, true);
  train->add_option("--out", train_out, "Bundle directory")->required();
  train->add_option("--report", train_report, "Training report (JSON)");

  // calibrate
  Common c_cal;
  DataPaths d_cal;
  std::string cal_bundle, cal_out;
  auto* cal = app.add_subcommand("calibrate", "Refit every sub-model temperature on labeled users");
  c_cal.attach(cal);
  d_cal.attach(cal, true);
  cal->add_option("--bundle", cal_bundle, "Bundle directory")->required();
  cal->add_option("--out", cal_out, "Output bundle directory (default: overwrite)");

  // fit-weights
  Common c_fw;
  DataPaths d_fw;
  std::string fw_bundle, fw_out;
  auto* fw = app.add_subcommand("fit-weights", "Refit the combination weights on labeled users");
  c_fw.attach(fw);
  d_fw.attach(fw, true);
  fw->add_option("--bundle", fw_bundle, "Bundle directory")->required();
  fw->add_option("--out", fw_out, "Output bundle directory (default: overwrite)");

  // estimate
  Common c_est;
  DataPaths d_est;
  std::string est_bundle, est_preds;
  auto* est = app.add_subcommand("estimate", "Estimate the bot fraction of a community");
  c_est.attach(est);
  d_est.attach(est, true);
  est->add_option("--bundle", est_bundle, "Bundle directory")->required();
  est->add_option("--predictions", est_preds, "Per-user predictions (CSV)");

  // eval-balanced
  Common c_bal;
  std::string bal_bundle, bal_csv, bal_svg;
  int bal_count = 10;
  auto* bal = app.add_subcommand("eval-balanced", "Estimate synthetic communities at a fixed bot fraction");
  c_bal.attach(bal);
  bal->add_option("--bundle", bal_bundle, "Bundle directory")->required();
  bal->add_option("--communities", bal_count, "Number of communities")->check(CLI::PositiveNumber);
  bal->add_option("--csv", bal_csv, "Report CSV");
  bal->add_option("--svg", bal_svg, "Report chart (SVG)");

  // eval-sweep
  Common c_sw;
  DataPaths d_sw;
  std::string sw_bundle, sw_csv, sw_svg;
  bool sw_unit_t = false;
  auto* sw = app.add_subcommand("eval-sweep", "Resample communities across bot fractions and estimate each");
  c_sw.attach(sw);
  d_sw.attach(sw, false);
  sw->add_option("--bundle", sw_bundle, "Bundle directory")->required();
  sw->add_flag("--unit-temperatures", sw_unit_t, "Ignore fitted temperatures (ablation)");
  sw->add_option("--csv", sw_csv, "Report CSV");
  sw->add_option("--svg", sw_svg, "Report chart (SVG)");

  // perturb-eval
  Common c_pert;
  DataPaths d_pert, d_base;
  std::string pert_bundle;
  auto* pert = app.add_subcommand("perturb-eval", "Estimate under forced verification flags vs a verified-only stump");
  c_pert.attach(pert);
  d_pert.attach(pert, false);
  pert->add_option("--bundle", pert_bundle, "Bundle directory")->required();
  pert->add_option("--baseline-users", d_base.users, "Labeled users for the verified-only stump (default: synthetic)");

  // report
  std::string rep_csv, rep_svg;
  auto* rep = app.add_subcommand("report", "Summarize a report CSV and optionally draw its chart");
  rep->add_option("--csv", rep_csv, "Report CSV")->required();
  rep->add_option("--svg", rep_svg, "Chart output (SVG)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (synth->parsed()) {
      const SynthConfig cfg = to_synth_config(c_synth.resolve());
      const SynthCommunity c = generate_community(cfg);
      fs::create_directories(synth_out);
      save_users(c.users, fs::path(synth_out) / "users.jsonl");
      save_edges(c.edges, fs::path(synth_out) / "edges.csv");
      save_labels(c.users, fs::path(synth_out) / "labels.csv");
      print_json({{"users", c.users.size()}, {"edges", c.edges.size()}, {"bot_fraction", cfg.bot_fraction}});
    } else if (train->parsed()) {
      const PipelineConfig cfg = to_pipeline_config(c_train.resolve());
      const auto result = train_pipeline(d_train.load_store(), d_train.load_edge_list(), cfg);
      result.bundle.save(train_out);
      const json rj = report_json(result.report);
      if (!train_report.empty()) std::ofstream(train_report) << rj.dump(2) << '\n';
      print_json(rj);
    } else if (cal->parsed()) {
      c_cal.resolve();
      EnsembleBundle b = EnsembleBundle::load(cal_bundle);
      const auto ece = calibrate_bundle(b, labeled_only(d_cal.load_store()));
      b.save(cal_out.empty() ? cal_bundle : cal_out);
      json out = json::array();
      for (std::size_t k = 0; k < b.size(); ++k)
        out.push_back({{"name", b.sub_models[k].name},
                       {"temperature", b.sub_models[k].temperature.value()},
                       {"ece_before", ece[k].first},
                       {"ece_after", ece[k].second}});
      print_json(out);
    } else if (fw->parsed()) {
      const PipelineConfig cfg = to_pipeline_config(c_fw.resolve());
      EnsembleBundle b = EnsembleBundle::load(fw_bundle);
      const auto trace = refit_weights(b, labeled_only(d_fw.load_store()), cfg.weights);
      b.save(fw_out.empty() ? fw_bundle : fw_out);
      json alphas = json::object();
      for (const auto& e : b.weights.entries()) alphas[e.name] = e.alpha;
      print_json({{"alpha", alphas}, {"nll", trace.nll}});
    } else if (est->parsed()) {
      c_est.resolve();
      const EnsembleBundle b = EnsembleBundle::load(est_bundle);
      const UserStore users = d_est.load_store();
      const auto e = b.estimate(users);
      json out = estimate_json(e);
      std::vector<Label> pred, truth;
      if (!est_preds.empty()) {
        std::ofstream p(est_preds);
        if (!p) fail(ErrorKind::io, "cannot write " + est_preds);
        p << "id,prediction\n";
        for (const auto& [id, u] : users) p << id << ',' << to_string(b.classify(u)) << '\n';
      }
      if (users.labeled_count() == users.size()) {
        for (const auto& [_, u] : users) {
          pred.push_back(b.classify(u));
          truth.push_back(*u.label);
        }
        const auto m = individual_metrics(pred, truth);
        out["individual"] = {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
      }
      print_json(out);
    } else if (bal->parsed()) {
      const Settings s = c_bal.resolve();
      const EnsembleBundle b = EnsembleBundle::load(bal_bundle);
      SynthConfig base = to_synth_config(s);
      EvalReport report;
      std::vector<Label> pred, truth;
      for (int k = 0; k < bal_count; ++k) {
        SynthConfig cfg = base;
        cfg.seed = mix_seed(base.seed, static_cast<std::uint64_t>(k));
        cfg.id_prefix = "b" + std::to_string(k) + "_";
        const auto c = generate_community(cfg);
        EvalRow row = evaluate_community("balanced_" + std::to_string(k), c.users,
                                         [&](const UserStore& u) { return b.estimate(u); });
        row.target_fraction = cfg.bot_fraction;
        row.seed = cfg.seed;
        report.rows.push_back(std::move(row));
        for (const auto& [_, u] : c.users) {
          pred.push_back(b.classify(u));
          truth.push_back(*u.label);
        }
      }
      report.summarize();
      report.individual = individual_metrics(pred, truth);
      write_outputs(report, bal_csv, bal_svg);
      print_json(summary_json(report));
    } else if (sw->parsed()) {
      const Settings s = c_sw.resolve();
      EnsembleBundle b = EnsembleBundle::load(sw_bundle);
      if (sw_unit_t) b = b.with_unit_temperatures();
      UserStore pool;
      EdgeList edges;
      if (d_sw.users.empty()) {
        const auto c = generate_community(to_synth_config(s));
        pool = c.users;
        edges = c.edges;
      } else {
        pool = d_sw.load_store();
        edges = d_sw.load_edge_list();
      }
      const EvalReport report = run_sweep(b, pool, edges, to_sweep_config(s));
      write_outputs(report, sw_csv, sw_svg);
      print_json(summary_json(report));
      if (!report.infeasible.empty()) return kExitInfeasible;
    } else if (pert->parsed()) {
      const Settings s = c_pert.resolve();
      const EnsembleBundle b = EnsembleBundle::load(pert_bundle);
      const SynthConfig sc = to_synth_config(s);
      const UserStore community = d_pert.users.empty() ? generate_community(sc).users : d_pert.load_store();
      UserStore base_users;
      if (d_base.users.empty()) {
        SynthConfig bc = sc;
        bc.seed = mix_seed(sc.seed, 1);
        bc.id_prefix = "baseline_";
        base_users = generate_community(bc).users;
      } else {
        base_users = d_base.load_store();
      }
      const auto vi = feature_index("verified");
      RowMatrix X(static_cast<Eigen::Index>(base_users.labeled_count()), 1);
      std::vector<Label> y;
      for (const auto& [_, u] : base_users)
        if (u.label) {
          X(static_cast<Eigen::Index>(y.size()), 0) = compute_features(u)[vi];
          y.push_back(*u.label);
        }
      BoostConfig one;
      one.rounds = 1;
      const BoostModel stump = train_adaboost(X, y, one);

      std::size_t bots = 0;
      for (const auto& [_, u] : community) {
        if (!u.label) fail(ErrorKind::missing_field, "perturb-eval needs a fully labeled community");
        bots += *u.label == Label::bot;
      }
      const double truth = static_cast<double>(bots) / static_cast<double>(community.size());
      json rows = json::array();
      for (auto mode : {VerifiedMode::all_true, VerifiedMode::all_false, VerifiedMode::random}) {
        const UserStore p = apply_verified_perturbation(community, mode, static_cast<std::uint64_t>(s.integer("seed")));
        const double ens = b.estimate(p).p_hat;
        std::size_t sb = 0;
        for (const auto& [_, u] : p) {
          const double x = compute_features(u)[vi];
          sb += softmax(predict_tabular(stump, std::span<const double>(&x, 1))).argmax() == Label::bot;
        }
        const double base = static_cast<double>(sb) / static_cast<double>(p.size());
        rows.push_back({{"mode", to_string(mode)},
                        {"ensemble_estimate", ens},
                        {"ensemble_drift", ens - truth},
                        {"stump_estimate", base},
                        {"stump_drift", base - truth}});
      }
      print_json({{"true_fraction", truth}, {"modes", rows}});
    } else if (rep->parsed()) {
      const EvalReport r = read_report_csv(rep_csv);
      if (!rep_svg.empty()) write_report_svg(r, rep_svg);
      print_json(summary_json(r));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error (parse): " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
