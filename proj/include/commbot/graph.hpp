#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "commbot/ingest.hpp"
#include "commbot/linalg.hpp"
#include "commbot/nn.hpp"
#include "commbot/text.hpp"

namespace commbot {

/// follows: messages flow from follower to followee; followed_by is its transpose.
inline constexpr int kRelationCount = 2;
enum class GraphRelation : int { follows = 0, followed_by = 1 };

struct HeteroGraph {
  std::vector<std::string> node_ids;  // sorted
  RowMatrix features;                 // one row per node
  /// Directed (source, destination) index pairs per relation.
  std::array<std::vector<std::pair<int, int>>, kRelationCount> edges;

  /// In-edges grouped by destination: sources of node i are
  /// sources[offsets[i] .. offsets[i+1]).
  struct InIndex {
    std::vector<int> offsets;
    std::vector<int> sources;
  };
  std::array<InIndex, kRelationCount> in;

  int node_count() const { return static_cast<int>(node_ids.size()); }
  int index_of(std::string_view id) const;
  /// Rebuilds `in` from `edges`. Call after editing edges by hand.
  void reindex();
};

/// `features` rows follow store.ids() (sorted id order).
HeteroGraph build_graph(const UserStore& store, const EdgeList& edges, const RowMatrix& features);

enum class GnnVariant { mean_relational, attn_edge_type, attn_relation };
std::string_view to_string(GnnVariant v);
GnnVariant parse_gnn_variant(std::string_view s);

struct GnnLayer {
  /// [self | follows | followed_by] projections side by side: in_dim x 3*out_dim.
  Matrix W;
  Vector bias;
  /// Per-relation attention vectors over projected destination/source rows
  /// (attention variants only).
  std::array<Vector, kRelationCount> att_dst;
  std::array<Vector, kRelationCount> att_src;
  /// Relation-level attention query (attn_relation only).
  Vector rel_query;

  Eigen::Index in_dim() const { return W.rows(); }
  Eigen::Index out_dim() const { return W.cols() / 3; }
};

struct GnnModel {
  GnnVariant variant = GnnVariant::mean_relational;
  std::vector<GnnLayer> layers;
  Matrix W_out;  // hidden x 2
  Vector b_out;  // 2

  Eigen::Index input_dim() const { return layers.front().in_dim(); }
  Vector parameters() const;
  void set_parameters(const Vector& flat);
  Eigen::Index parameter_count() const;
};

GnnModel make_gnn(GnnVariant variant, Eigen::Index input_dim, Eigen::Index hidden_dim, int n_layers, std::uint64_t seed);

inline constexpr double kGnnActivationSlope = 0.01;
inline constexpr double kAttentionSlope = 0.2;

/// Inference pass: per-node logits (n x 2).
Matrix gnn_forward(const GnnModel& model, const HeteroGraph& g);
/// Node representations after the final message-passing layer (inference mode).
Matrix gnn_embeddings(const GnnModel& model, const HeteroGraph& g);

/// Mean cross-entropy over `nodes` plus 0.5 * l2 * ||theta||^2, no dropout.
double gnn_cross_entropy(const GnnModel& model, const HeteroGraph& g, std::span<const int> nodes,
                         std::span<const Label> y, double l2, Vector* grad);

struct GnnTrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  int epochs = 50;
  double l2 = 1e-5;
  int hidden_dim = 128;
  double dropout = 0.5;
  int layers = 2;
  std::uint64_t seed = 1;
};

/// Full-graph forward each step, loss over a mini-batch of the labeled nodes.
GnnModel train_gnn(GnnVariant variant, const HeteroGraph& g, std::span<const int> nodes, std::span<const Label> y,
                   const GnnTrainConfig& config, TrainTrace* trace = nullptr);

/// Graph-free student: an affine (or one-hidden-layer) map over node features.
struct LinearStudent {
  DenseHead head;
};

struct DistillConfig {
  double learning_rate = 5e-4;
  int batch_size = 2048;
  int epochs = 50;
  double l2 = 1e-5;
  int hidden_dim = 0;
  double dropout = 0.3;
  double lambda = 0.7;
  std::uint64_t seed = 1;
};

/// lambda * sum CE(student, y) + (1 - lambda) * sum KL(student || teacher).
/// Fills dL/dlogits when `dlogits` is non-null.
double distillation_loss(const Matrix& student_logits, const Matrix& teacher_probs, std::span<const Label> y,
                         double lambda, Matrix* dlogits = nullptr);

LinearStudent distill_student(const GnnModel& teacher, const HeteroGraph& g, std::span<const int> nodes,
                              std::span<const Label> y, const DistillConfig& config, TrainTrace* trace = nullptr);

/// Takes node features only; no graph access.
LogitPair predict_student(const LinearStudent& student, std::span<const double> node_features);

nlohmann::json to_json(const GnnModel& m);
GnnModel gnn_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LinearStudent& s);
LinearStudent student_from_json(const nlohmann::json& j);

}  // namespace commbot
