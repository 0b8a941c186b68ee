#include "commbot/pipeline.hpp"

#include <unordered_map>

#include "commbot/error.hpp"

namespace commbot {

namespace {

struct GraphInstance {
  const char* name;
  GnnVariant variant;
  std::uint64_t seed_offset;
};

// Two attention-over-edge-type instances differ only in their seed.
constexpr GraphInstance kGraphInstances[] = {
    {"graph/attn_edge_type_a", GnnVariant::attn_edge_type, 0},
    {"graph/attn_edge_type_b", GnnVariant::attn_edge_type, 1},
    {"graph/mean_relational", GnnVariant::mean_relational, 2},
    {"graph/attn_relation", GnnVariant::attn_relation, 3},
};

double accuracy(std::span<const Label> pred, std::span<const Label> y) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i];
  return y.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(y.size());
}

std::vector<ProbPair> scaled(std::span<const LogitPair> z, Temperature t) {
  std::vector<ProbPair> out;
  out.reserve(z.size());
  for (const auto& zi : z) out.push_back(apply_temperature(zi, t));
  return out;
}

std::vector<WeightEntry> uniform_entries(const EnsembleBundle& b) {
  std::vector<WeightEntry> out;
  for (const auto& s : b.sub_models) out.push_back({s.name, s.channel, 1.0 / static_cast<double>(b.size())});
  return out;
}

}  // namespace

std::vector<std::vector<LogitPair>> validation_logits(const EnsembleBundle& bundle, const UserStore& val,
                                                      std::vector<Label>& labels) {
  labels.clear();
  std::vector<std::vector<LogitPair>> cols(bundle.size());
  for (const auto& [_, u] : val) {
    if (!u.label) continue;
    labels.push_back(*u.label);
    const auto z = bundle.logits(u);
    for (std::size_t k = 0; k < z.size(); ++k) cols[k].push_back(z[k]);
  }
  return cols;
}

std::vector<std::pair<double, double>> calibrate_bundle(EnsembleBundle& bundle, const UserStore& val) {
  std::vector<Label> y;
  const auto cols = validation_logits(bundle, val, y);
  std::vector<std::pair<double, double>> ece;
  for (std::size_t k = 0; k < bundle.size(); ++k) {
    const double before = expected_calibration_error(scaled(cols[k], Temperature(1.0)), y);
    bundle.sub_models[k].temperature = fit_temperature(cols[k], y);
    ece.emplace_back(before, expected_calibration_error(scaled(cols[k], bundle.sub_models[k].temperature), y));
  }
  return ece;
}

WeightFitTrace refit_weights(EnsembleBundle& bundle, const UserStore& val, const WeightFitConfig& config) {
  std::vector<Label> y;
  const auto cols = validation_logits(bundle, val, y);
  std::vector<std::vector<ProbPair>> probs;
  for (std::size_t k = 0; k < bundle.size(); ++k) probs.push_back(scaled(cols[k], bundle.sub_models[k].temperature));
  WeightFitTrace trace;
  bundle.weights = fit_weights(uniform_entries(bundle), probs, y, config, &trace);
  return trace;
}

TrainResult train_pipeline(const UserStore& store, const EdgeList& edges, const PipelineConfig& config) {
  const Split split = split_train_val(store, config.val_fraction, config.seed);

  EnsembleBundle b;
  b.providers = default_providers(config.embedding_dim);
  b.node_provider = b.providers.front()->name();

  // Inputs for every user in id order; the graph needs unlabeled users too.
  const auto ids = store.ids();
  const auto n = static_cast<Eigen::Index>(ids.size());
  std::unordered_map<std::string_view, Eigen::Index> row_of;
  std::vector<FeatureVector> raw;
  raw.reserve(ids.size());
  std::vector<RowMatrix> enc(b.providers.size());
  for (std::size_t p = 0; p < b.providers.size(); ++p)
    enc[p].resize(n, static_cast<Eigen::Index>(2 * b.providers[p]->dim()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& u = store.at(ids[static_cast<std::size_t>(i)]);
    row_of[ids[static_cast<std::size_t>(i)]] = i;
    raw.push_back(compute_features(u));
    for (std::size_t p = 0; p < b.providers.size(); ++p) enc[p].row(i) = encode_user(*b.providers[p], u).transpose();
  }

  std::vector<int> train_rows;
  std::vector<Label> y_train;
  std::vector<FeatureVector> train_compressed;
  for (const auto& [id, u] : split.train) {
    train_rows.push_back(static_cast<int>(row_of.at(id)));
    y_train.push_back(*u.label);
    train_compressed.push_back(log_compress(raw[static_cast<std::size_t>(train_rows.back())]));
  }
  b.normalizer = fit_normalizer(train_compressed);

  const Eigen::Index enc_dim = enc[0].cols();
  RowMatrix node(n, static_cast<Eigen::Index>(kFeatureCount) + enc_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = b.node_features(raw[static_cast<std::size_t>(i)], std::span<const double>(enc[0].row(i).data(), enc_dim));
    node.row(i) = Eigen::Map<const RowVector>(row.data(), static_cast<Eigen::Index>(row.size()));
  }

  RowMatrix X_tab(static_cast<Eigen::Index>(train_rows.size()), static_cast<Eigen::Index>(kFeatureCount));
  for (std::size_t r = 0; r < train_rows.size(); ++r)
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      X_tab(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) = raw[static_cast<std::size_t>(train_rows[r])][f];

  ForestConfig fc = config.forest;
  fc.seed = mix_seed(config.seed, 10);
  BoostConfig bc = config.boost;
  bc.seed = mix_seed(config.seed, 11);
  b.sub_models.push_back({"feature/random_forest", Channel::feature, train_forest(X_tab, y_train, fc), Temperature(1.0)});
  b.sub_models.push_back({"feature/adaboost", Channel::feature, train_adaboost(X_tab, y_train, bc), Temperature(1.0)});

  for (std::size_t p = 0; p < b.providers.size(); ++p) {
    TextTrainConfig tc = config.text;
    tc.seed = mix_seed(config.seed, 20 + p);
    DenseHead head = train_text_head(gather_rows(enc[p], train_rows), y_train, tc);
    b.sub_models.push_back({"text/" + b.providers[p]->name(), Channel::text, TextSubModel{b.providers[p]->name(), std::move(head)}, Temperature(1.0)});
  }

  TrainingReport report;
  std::vector<int> val_rows;
  for (const auto& [id, u] : split.val) val_rows.push_back(static_cast<int>(row_of.at(id)));

  const HeteroGraph g = build_graph(store, edges, node);
  for (const auto& inst : kGraphInstances) {
    GnnTrainConfig gc = config.graph;
    gc.seed = mix_seed(config.seed, 30 + inst.seed_offset);
    const GnnModel teacher = train_gnn(inst.variant, g, train_rows, y_train, gc);
    DistillConfig dc = config.distill;
    dc.seed = mix_seed(config.seed, 40 + inst.seed_offset);
    LinearStudent student = distill_student(teacher, g, train_rows, y_train, dc);

    const Matrix tl = gnn_forward(teacher, g);
    std::size_t agree = 0;
    for (int r : val_rows) {
      const LogitPair t{tl(r, 0), tl(r, 1)};
      const auto s = predict_student(student, std::span<const double>(node.row(r).data(), node.cols()));
      agree += softmax(t).argmax() == softmax(s).argmax();
    }
    report.teacher_student_agreement[inst.name] =
        val_rows.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(val_rows.size());

    b.sub_models.push_back({inst.name, Channel::graph, StudentSubModel{inst.variant, std::move(student)}, Temperature(1.0)});
    if (config.archive_teachers) b.archived_teachers.emplace_back(inst.name, teacher);
  }

  b.weights = EnsembleWeights(uniform_entries(b));

  std::vector<Label> y_val;
  const auto cols = validation_logits(b, split.val, y_val);
  std::vector<std::vector<ProbPair>> probs;
  for (std::size_t k = 0; k < b.size(); ++k) {
    auto& s = b.sub_models[k];
    SubModelReport r;
    r.name = s.name;
    const auto before = scaled(cols[k], Temperature(1.0));
    r.ece_before = expected_calibration_error(before, y_val);
    if (config.calibrate) s.temperature = fit_temperature(cols[k], y_val);
    r.temperature = s.temperature.value();
    probs.push_back(scaled(cols[k], s.temperature));
    r.ece_after = expected_calibration_error(probs.back(), y_val);
    std::vector<Label> pred;
    for (const auto& p : probs.back()) pred.push_back(p.argmax());
    r.val_accuracy = accuracy(pred, y_val);
    report.models.push_back(r);
  }

  WeightFitTrace trace;
  b.weights = fit_weights(uniform_entries(b), probs, y_val, config.weights, &trace);
  report.weight_nll = trace.nll;
  const auto alpha = b.weights.alphas();
  std::vector<Label> pred;
  for (std::size_t i = 0; i < y_val.size(); ++i) {
    std::vector<ProbPair> p;
    for (std::size_t k = 0; k < b.size(); ++k) p.push_back(probs[k][i]);
    pred.push_back(classify(p, alpha));
  }
  for (std::size_t k = 0; k < b.size(); ++k) report.models[k].alpha = alpha[k];
  report.ensemble_val_accuracy = accuracy(pred, y_val);
  report.n_train = split.train.size();
  report.n_val = split.val.size();

  b.validate();
  return {std::move(b), std::move(report)};
}

}  // namespace commbot
