#pragma once

#include <map>
#include <string>
#include <vector>

#include "commbot/bundle.hpp"
#include "commbot/ingest.hpp"

namespace commbot {

struct PipelineConfig {
  ForestConfig forest;
  BoostConfig boost;
  TextTrainConfig text;
  GnnTrainConfig graph;
  DistillConfig distill;
  WeightFitConfig weights;
  double val_fraction = 0.2;
  std::uint64_t seed = 1;
  std::size_t embedding_dim = 256;
  /// false keeps every temperature at 1.
  bool calibrate = true;
  /// Keep the graph teachers in the bundle (large; never used for scoring).
  bool archive_teachers = false;
};

struct SubModelReport {
  std::string name;
  double val_accuracy = 0.0;
  double ece_before = 0.0;
  double ece_after = 0.0;
  double temperature = 1.0;
  double alpha = 0.0;
};

struct TrainingReport {
  std::vector<SubModelReport> models;
  std::vector<double> weight_nll;
  double ensemble_val_accuracy = 0.0;
  /// Teacher/student argmax agreement on validation nodes, keyed by student name.
  std::map<std::string, double> teacher_student_agreement;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
};

struct TrainResult {
  EnsembleBundle bundle;
  TrainingReport report;
};

/// Splits the labeled users, trains every sub-model on the training part, then
/// fits temperatures and combination weights on the validation part. The graph
/// channel sees every user and edge; only training labels enter its loss.
TrainResult train_pipeline(const UserStore& store, const EdgeList& edges, const PipelineConfig& config);

/// Raw logits of every labeled user in `val`, one column per sub-model.
std::vector<std::vector<LogitPair>> validation_logits(const EnsembleBundle& bundle, const UserStore& val,
                                                      std::vector<Label>& labels);

/// Refits every temperature on `val`. Returns (ECE before, ECE after) per sub-model.
std::vector<std::pair<double, double>> calibrate_bundle(EnsembleBundle& bundle, const UserStore& val);

/// Refits the combination weights on `val` from uniform, leaving sub-models untouched.
WeightFitTrace refit_weights(EnsembleBundle& bundle, const UserStore& val, const WeightFitConfig& config = {});

}  // namespace commbot
