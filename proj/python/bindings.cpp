#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "commbot/config.hpp"
#include "commbot/error.hpp"
#include "commbot/eval.hpp"
#include "commbot/pipeline.hpp"

namespace py = pybind11;
using namespace commbot;
using nlohmann::json;

namespace {

json to_json(const py::handle& obj) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(py::cast<std::string>(dumps(obj)));
}

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Settings settings_from(const py::dict& overrides) {
  Settings s;
  if (!overrides.empty()) s.apply_file(to_json(overrides));
  return s;
}

py::dict estimate_dict(const CommunityEstimate& e) {
  py::dict d;
  d["p_hat"] = e.p_hat;
  d["n_users"] = e.n_users;
  d["n_bots_predicted"] = e.n_bots_predicted;
  d["mean_bot_probability"] = e.mean_bot_probability;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::list rows;
  for (const auto& row : r.rows) {
    py::dict d;
    d["community_id"] = row.community_id;
    d["target_fraction"] = row.target_fraction;
    d["seed"] = row.seed;
    d["true_fraction"] = row.true_fraction;
    d["estimated_fraction"] = row.estimated_fraction;
    d["abs_error"] = row.abs_error;
    d["n_users"] = row.n_users;
    rows.append(d);
  }
  py::list infeasible;
  for (const auto& inf : r.infeasible) infeasible.append(py::make_tuple(inf.target_fraction, inf.seed, inf.reason));
  py::dict out;
  out["rows"] = rows;
  out["infeasible"] = infeasible;
  out["mae"] = r.mae;
  out["max_error"] = r.max_error;
  out["csv"] = report_csv(r);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Community-level bot fraction estimation";

  static py::exception<Error> error_type(m, "CommbotError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error_type.ptr(), py::make_tuple(std::string(to_string(e.kind())), e.what()).ptr());
    }
  });

  py::enum_<Label>(m, "Label").value("human", Label::human).value("bot", Label::bot);

  py::class_<UserStore>(m, "UserStore")
      .def(py::init<>())
      .def("__len__", &UserStore::size)
      .def("__contains__", [](const UserStore& s, const std::string& id) { return s.contains(id); })
      .def("ids", &UserStore::ids)
      .def("labeled_count", &UserStore::labeled_count)
      .def("label", [](const UserStore& s, const std::string& id) { return s.at(id).label; });

  py::class_<EdgeList>(m, "EdgeList")
      .def(py::init<>())
      .def("__len__", &EdgeList::size)
      .def("add", [](EdgeList& e, std::string a, std::string b) { e.add(std::move(a), std::move(b)); });

  m.def(
      "load_users",
      [](const std::filesystem::path& path, const std::optional<std::filesystem::path>& labels) {
        UserStore s = load_users(path, path.filename().string());
        if (labels) apply_labels(s, load_labels(*labels));
        return s;
      },
      py::arg("path"), py::arg("labels") = py::none());
  m.def("load_edges", &load_edges, py::arg("path"));
  m.def("save_users", &save_users, py::arg("users"), py::arg("path"));
  m.def("save_edges", &save_edges, py::arg("edges"), py::arg("path"));

  m.def(
      "generate_community",
      [](std::size_t n_users, double bot_fraction, std::uint64_t seed, double separation, double homophily,
         double mean_degree, std::string id_prefix) {
        SynthConfig c;
        c.n_users = n_users;
        c.bot_fraction = bot_fraction;
        c.seed = seed;
        c.separation = separation;
        c.homophily = homophily;
        c.mean_degree = mean_degree;
        c.id_prefix = std::move(id_prefix);
        auto out = generate_community(c);
        return py::make_tuple(std::move(out.users), std::move(out.edges));
      },
      py::arg("n_users") = 1000, py::arg("bot_fraction") = 0.5, py::arg("seed") = 1, py::arg("separation") = 1.25,
      py::arg("homophily") = 0.8, py::arg("mean_degree") = 8.0, py::arg("id_prefix") = "");

  m.def("default_settings", [] { return to_py(Settings::defaults()); });

  py::class_<EnsembleBundle>(m, "Bundle")
      .def_static("load", &EnsembleBundle::load, py::arg("path"))
      .def("save", &EnsembleBundle::save, py::arg("path"))
      .def("names", &EnsembleBundle::names)
      .def("alphas", [](const EnsembleBundle& b) { return b.weights.alphas(); })
      .def("set_alphas", [](EnsembleBundle& b, const std::vector<double>& a) { b.weights.set_alphas(a); })
      .def("temperatures",
           [](const EnsembleBundle& b) {
             std::vector<double> t;
             for (const auto& s : b.sub_models) t.push_back(s.temperature.value());
             return t;
           })
      .def("with_unit_temperatures", &EnsembleBundle::with_unit_temperatures)
      .def("classify", [](const EnsembleBundle& b, const UserStore& s, const std::string& id) { return b.classify(s.at(id)); })
      .def("probabilities",
           [](const EnsembleBundle& b, const UserStore& s, const std::string& id) {
             std::vector<double> out;
             for (const auto& p : b.probabilities(s.at(id))) out.push_back(p.bot);
             return out;
           })
      .def("estimate", [](const EnsembleBundle& b, const UserStore& s) { return estimate_dict(b.estimate(s)); })
      .def("calibrate", [](EnsembleBundle& b, const UserStore& val) { return calibrate_bundle(b, val); })
      .def("fit_weights", [](EnsembleBundle& b, const UserStore& val) { return refit_weights(b, val).nll; });

  m.def(
      "train",
      [](const UserStore& users, const EdgeList& edges, const py::dict& settings) {
        const PipelineConfig cfg = to_pipeline_config(settings_from(settings));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_pipeline(users, edges, cfg);
        }
        py::dict report;
        py::list models;
        for (const auto& s : r.report.models) {
          py::dict d;
          d["name"] = s.name;
          d["val_accuracy"] = s.val_accuracy;
          d["ece_before"] = s.ece_before;
          d["ece_after"] = s.ece_after;
          d["temperature"] = s.temperature;
          d["alpha"] = s.alpha;
          models.append(d);
        }
        report["models"] = models;
        report["weight_nll"] = r.report.weight_nll;
        report["ensemble_val_accuracy"] = r.report.ensemble_val_accuracy;
        report["teacher_student_agreement"] = r.report.teacher_student_agreement;
        return py::make_tuple(std::move(r.bundle), report);
      },
      py::arg("users"), py::arg("edges"), py::arg("settings") = py::dict());

  m.def(
      "run_sweep",
      [](const EnsembleBundle& b, const UserStore& pool, const EdgeList& edges, const py::dict& settings) {
        const SweepConfig cfg = to_sweep_config(settings_from(settings));
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = run_sweep(b, pool, edges, cfg);
        }
        return report_dict(r);
      },
      py::arg("bundle"), py::arg("pool"), py::arg("edges"), py::arg("settings") = py::dict());

  m.def(
      "individual_metrics",
      [](const std::vector<Label>& pred, const std::vector<Label>& truth) {
        const auto r = individual_metrics(pred, truth);
        py::dict d;
        d["accuracy"] = r.accuracy;
        d["precision"] = r.precision;
        d["recall"] = r.recall;
        d["f1"] = r.f1;
        return d;
      },
      py::arg("predicted"), py::arg("truth"));
}
