#include "commbot/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "commbot/error.hpp"

namespace commbot {

using nlohmann::json;

namespace {

constexpr int kModelVersion = 1;

bool uses_edge_attention(GnnVariant v) { return v != GnnVariant::mean_relational; }
bool uses_relation_attention(GnnVariant v) { return v == GnnVariant::attn_relation; }

struct LayerTape {
  RowMatrix input;
  RowMatrix P;  // n x 3h
  std::array<std::vector<double>, kRelationCount> alpha;
  std::array<std::vector<double>, kRelationCount> score;
  std::array<RowMatrix, kRelationCount> Z;
  std::array<RowMatrix, kRelationCount> tanhZ;
  RowMatrix beta;  // n x R
  RowMatrix pre;
  RowMatrix mask;  // empty unless dropout was applied
  RowMatrix output;
};

struct ForwardTape {
  std::vector<LayerTape> layers;
  RowMatrix final_rep;
};

void check_dims(const GnnModel& m, const HeteroGraph& g) {
  if (m.layers.empty()) fail(ErrorKind::dimension, "GNN without layers");
  if (g.features.cols() != m.input_dim())
    fail(ErrorKind::dimension, "node features have width " + std::to_string(g.features.cols()) + ", model expects " +
                                   std::to_string(m.input_dim()));
  if (static_cast<int>(g.features.rows()) != g.node_count()) fail(ErrorKind::dimension, "feature rows != node count");
  for (const auto& idx : g.in)
    if (static_cast<int>(idx.offsets.size()) != g.node_count() + 1) fail(ErrorKind::dimension, "graph index is stale");
}

RowMatrix run_layer(const GnnModel& m, const GnnLayer& L, const HeteroGraph& g, const RowMatrix& H, double dropout,
                    std::mt19937_64* rng, LayerTape* tape) {
  const Eigen::Index n = H.rows();
  const Eigen::Index h = L.out_dim();
  RowMatrix P = H * L.W;
  RowMatrix agg = RowMatrix::Zero(n, h);

  std::array<RowMatrix, kRelationCount> Z;
  std::array<std::vector<double>, kRelationCount> alpha, score;
  for (int r = 0; r < kRelationCount; ++r) {
    const auto& idx = g.in[static_cast<std::size_t>(r)];
    const auto Pr = P.middleCols((r + 1) * h, h);
    auto& al = alpha[static_cast<std::size_t>(r)];
    auto& sc = score[static_cast<std::size_t>(r)];
    al.assign(idx.sources.size(), 0.0);
    Vector u_dst, u_src;
    if (uses_edge_attention(m.variant)) {
      sc.assign(idx.sources.size(), 0.0);
      u_dst = Pr * L.att_dst[static_cast<std::size_t>(r)];
      u_src = Pr * L.att_src[static_cast<std::size_t>(r)];
    }
    RowMatrix Zr = RowMatrix::Zero(n, h);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int b = idx.offsets[static_cast<std::size_t>(i)], e = idx.offsets[static_cast<std::size_t>(i) + 1];
      if (b == e) continue;
      if (uses_edge_attention(m.variant)) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int k = b; k < e; ++k) {
          const double s = u_dst[i] + u_src[idx.sources[static_cast<std::size_t>(k)]];
          sc[static_cast<std::size_t>(k)] = s;
          al[static_cast<std::size_t>(k)] = leaky_relu(s, kAttentionSlope);
          mx = std::max(mx, al[static_cast<std::size_t>(k)]);
        }
        double total = 0.0;
        for (int k = b; k < e; ++k) total += (al[static_cast<std::size_t>(k)] = std::exp(al[static_cast<std::size_t>(k)] - mx));
        for (int k = b; k < e; ++k) al[static_cast<std::size_t>(k)] /= total;
      } else {
        for (int k = b; k < e; ++k) al[static_cast<std::size_t>(k)] = 1.0 / static_cast<double>(e - b);
      }
      for (int k = b; k < e; ++k) Zr.row(i) += al[static_cast<std::size_t>(k)] * Pr.row(idx.sources[static_cast<std::size_t>(k)]);
    }
    Z[static_cast<std::size_t>(r)] = std::move(Zr);
  }

  RowMatrix beta;
  std::array<RowMatrix, kRelationCount> tanhZ;
  if (uses_relation_attention(m.variant)) {
    // Relation weights are a softmax over relations rescaled to sum to the
    // relation count, so equal scores reduce to the plain relational sum.
    beta.resize(n, kRelationCount);
    for (int r = 0; r < kRelationCount; ++r) {
      tanhZ[static_cast<std::size_t>(r)] = Z[static_cast<std::size_t>(r)].array().tanh().matrix();
      beta.col(r) = tanhZ[static_cast<std::size_t>(r)] * L.rel_query;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = beta.row(i).maxCoeff();
      beta.row(i) = (beta.row(i).array() - mx).exp();
      beta.row(i) /= beta.row(i).sum();
    }
    for (int r = 0; r < kRelationCount; ++r)
      agg += (kRelationCount * beta.col(r)).asDiagonal() * Z[static_cast<std::size_t>(r)];
  } else {
    for (int r = 0; r < kRelationCount; ++r) agg += Z[static_cast<std::size_t>(r)];
  }

  RowMatrix pre = P.leftCols(h) + agg;
  pre.rowwise() += L.bias.transpose();
  RowMatrix out = pre.unaryExpr([](double v) { return leaky_relu(v, kGnnActivationSlope); });
  RowMatrix mask;
  if (dropout > 0.0 && rng != nullptr) {
    std::bernoulli_distribution keep(1.0 - dropout);
    mask.resize(n, h);
    for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = keep(*rng) ? 1.0 / (1.0 - dropout) : 0.0;
    out = out.cwiseProduct(mask);
  }
  if (tape) {
    tape->input = H;
    tape->P = std::move(P);
    tape->alpha = std::move(alpha);
    tape->score = std::move(score);
    tape->Z = std::move(Z);
    tape->tanhZ = std::move(tanhZ);
    tape->beta = std::move(beta);
    tape->pre = std::move(pre);
    tape->mask = std::move(mask);
    tape->output = out;
  }
  return out;
}

RowMatrix forward_impl(const GnnModel& m, const HeteroGraph& g, double dropout, std::mt19937_64* rng, ForwardTape* tape) {
  check_dims(m, g);
  RowMatrix H = g.features;
  if (tape) tape->layers.resize(m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l)
    H = run_layer(m, m.layers[l], g, H, dropout, rng, tape ? &tape->layers[l] : nullptr);
  if (tape) tape->final_rep = H;
  return H;
}

RowMatrix head_logits(const GnnModel& m, const RowMatrix& H) {
  RowMatrix z = H * m.W_out;
  z.rowwise() += m.b_out.transpose();
  return z;
}

// Gradient of the layer's parameters, written into `g` at the layer's offset;
// returns dL/dinput when requested.
RowMatrix backward_layer(const GnnModel& m, const GnnLayer& L, const HeteroGraph& gr, const LayerTape& t, RowMatrix G,
                         Vector& grad, Eigen::Index offset, bool need_input_grad) {
  const Eigen::Index n = t.input.rows();
  const Eigen::Index h = L.out_dim();
  if (t.mask.size() > 0) G = G.cwiseProduct(t.mask);
  const RowMatrix Gpre = G.cwiseProduct(t.pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kGnnActivationSlope; }));

  RowMatrix GP = RowMatrix::Zero(n, 3 * h);
  GP.leftCols(h) = Gpre;

  std::array<RowMatrix, kRelationCount> GZ;
  Vector d_query;
  if (uses_relation_attention(m.variant)) {
    d_query = Vector::Zero(h);
    for (int r = 0; r < kRelationCount; ++r) GZ[static_cast<std::size_t>(r)] = RowMatrix::Zero(n, h);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::array<double, kRelationCount> dbeta{};
      double mean = 0.0;
      for (int r = 0; r < kRelationCount; ++r) {
        dbeta[static_cast<std::size_t>(r)] = kRelationCount * Gpre.row(i).dot(t.Z[static_cast<std::size_t>(r)].row(i));
        mean += t.beta(i, r) * dbeta[static_cast<std::size_t>(r)];
      }
      for (int r = 0; r < kRelationCount; ++r) {
        const auto rs = static_cast<std::size_t>(r);
        const double dt = t.beta(i, r) * (dbeta[rs] - mean);
        d_query += dt * t.tanhZ[rs].row(i).transpose();
        GZ[rs].row(i) = kRelationCount * t.beta(i, r) * Gpre.row(i) +
                        dt * (L.rel_query.transpose().array() * (1.0 - t.tanhZ[rs].row(i).array().square())).matrix();
      }
    }
  } else {
    for (int r = 0; r < kRelationCount; ++r) GZ[static_cast<std::size_t>(r)] = Gpre;
  }

  std::array<Vector, kRelationCount> d_att_dst, d_att_src;
  for (int r = 0; r < kRelationCount; ++r) {
    const auto rs = static_cast<std::size_t>(r);
    const auto& idx = gr.in[rs];
    const auto Pr = t.P.middleCols((r + 1) * h, h);
    auto GPr = GP.middleCols((r + 1) * h, h);
    const auto& al = t.alpha[rs];
    Vector gu_dst, gu_src;
    if (uses_edge_attention(m.variant)) {
      gu_dst = Vector::Zero(n);
      gu_src = Vector::Zero(n);
    }
    std::vector<double> dal;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int b = idx.offsets[static_cast<std::size_t>(i)], e = idx.offsets[static_cast<std::size_t>(i) + 1];
      if (b == e) continue;
      for (int k = b; k < e; ++k) GPr.row(idx.sources[static_cast<std::size_t>(k)]) += al[static_cast<std::size_t>(k)] * GZ[rs].row(i);
      if (!uses_edge_attention(m.variant)) continue;
      dal.assign(static_cast<std::size_t>(e - b), 0.0);
      double s = 0.0;
      for (int k = b; k < e; ++k) {
        const double d = GZ[rs].row(i).dot(Pr.row(idx.sources[static_cast<std::size_t>(k)]));
        dal[static_cast<std::size_t>(k - b)] = d;
        s += al[static_cast<std::size_t>(k)] * d;
      }
      for (int k = b; k < e; ++k) {
        const double de = al[static_cast<std::size_t>(k)] * (dal[static_cast<std::size_t>(k - b)] - s);
        const double ds = de * (t.score[rs][static_cast<std::size_t>(k)] > 0.0 ? 1.0 : kAttentionSlope);
        gu_dst[i] += ds;
        gu_src[idx.sources[static_cast<std::size_t>(k)]] += ds;
      }
    }
    if (uses_edge_attention(m.variant)) {
      d_att_dst[rs] = Pr.transpose() * gu_dst;
      d_att_src[rs] = Pr.transpose() * gu_src;
      GPr += gu_dst * L.att_dst[rs].transpose();
      GPr += gu_src * L.att_src[rs].transpose();
    }
  }

  const Matrix dW = t.input.transpose() * GP;
  Eigen::Index off = offset;
  grad.segment(off, dW.size()) = Eigen::Map<const Vector>(dW.data(), dW.size());
  off += dW.size();
  grad.segment(off, h) = Gpre.colwise().sum().transpose();
  off += h;
  if (uses_edge_attention(m.variant)) {
    for (int r = 0; r < kRelationCount; ++r) {
      grad.segment(off, h) = d_att_dst[static_cast<std::size_t>(r)];
      off += h;
    }
    for (int r = 0; r < kRelationCount; ++r) {
      grad.segment(off, h) = d_att_src[static_cast<std::size_t>(r)];
      off += h;
    }
  }
  if (uses_relation_attention(m.variant)) grad.segment(off, h) = d_query;

  if (!need_input_grad) return {};
  return GP * L.W.transpose();
}

Eigen::Index layer_parameter_count(const GnnLayer& L) {
  Eigen::Index c = L.W.size() + L.bias.size();
  for (const auto& v : L.att_dst) c += v.size();
  for (const auto& v : L.att_src) c += v.size();
  return c + L.rel_query.size();
}

/// Flat gradient for an upstream dL/dlogits.
Vector backward(const GnnModel& m, const HeteroGraph& g, const ForwardTape& tape, const RowMatrix& dlogits) {
  Vector grad(m.parameter_count());
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& L : m.layers) {
    offsets.push_back(off);
    off += layer_parameter_count(L);
  }
  const Matrix dWout = tape.final_rep.transpose() * dlogits;
  grad.segment(off, dWout.size()) = Eigen::Map<const Vector>(dWout.data(), dWout.size());
  grad.segment(off + dWout.size(), 2) = dlogits.colwise().sum().transpose();

  RowMatrix G = dlogits * m.W_out.transpose();
  for (std::size_t l = m.layers.size(); l-- > 0;)
    G = backward_layer(m, m.layers[l], g, tape.layers[l], std::move(G), grad, offsets[l], l > 0);
  return grad;
}

void init_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
}
void init_uniform(Vector& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
}

template <typename F>
void for_each_param(GnnModel& m, F&& f) {
  for (auto& L : m.layers) {
    f(L.W);
    f(L.bias);
    for (auto& v : L.att_dst) f(v);
    for (auto& v : L.att_src) f(v);
    f(L.rel_query);
  }
  f(m.W_out);
  f(m.b_out);
}

}  // namespace

int HeteroGraph::index_of(std::string_view id) const {
  auto it = std::lower_bound(node_ids.begin(), node_ids.end(), id);
  if (it == node_ids.end() || *it != id) fail(ErrorKind::unknown_user, std::string(id));
  return static_cast<int>(it - node_ids.begin());
}

void HeteroGraph::reindex() {
  const int n = node_count();
  for (int r = 0; r < kRelationCount; ++r) {
    auto& E = edges[static_cast<std::size_t>(r)];
    std::sort(E.begin(), E.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    auto& idx = in[static_cast<std::size_t>(r)];
    idx.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    idx.sources.clear();
    for (const auto& [s, d] : E) {
      if (s < 0 || s >= n || d < 0 || d >= n) fail(ErrorKind::dimension, "edge index out of range");
      ++idx.offsets[static_cast<std::size_t>(d) + 1];
      idx.sources.push_back(s);
    }
    std::partial_sum(idx.offsets.begin(), idx.offsets.end(), idx.offsets.begin());
  }
}

HeteroGraph build_graph(const UserStore& store, const EdgeList& edges, const RowMatrix& features) {
  HeteroGraph g;
  g.node_ids = store.ids();
  if (static_cast<std::size_t>(features.rows()) != g.node_ids.size())
    fail(ErrorKind::dimension, "one feature row per user is required");
  g.features = features;
  for (const auto& e : edges.edges()) {
    const int s = g.index_of(e.source_id);
    const int t = g.index_of(e.target_id);
    g.edges[static_cast<std::size_t>(GraphRelation::follows)].emplace_back(s, t);
    g.edges[static_cast<std::size_t>(GraphRelation::followed_by)].emplace_back(t, s);
  }
  g.reindex();
  return g;
}

std::string_view to_string(GnnVariant v) {
  switch (v) {
    case GnnVariant::mean_relational: return "mean_relational";
    case GnnVariant::attn_edge_type: return "attn_edge_type";
    case GnnVariant::attn_relation: return "attn_relation";
  }
  return "?";
}

GnnVariant parse_gnn_variant(std::string_view s) {
  if (s == "mean_relational") return GnnVariant::mean_relational;
  if (s == "attn_edge_type") return GnnVariant::attn_edge_type;
  if (s == "attn_relation") return GnnVariant::attn_relation;
  fail(ErrorKind::config, "unknown GNN variant '" + std::string(s) + "'");
}

GnnModel make_gnn(GnnVariant variant, Eigen::Index input_dim, Eigen::Index hidden_dim, int n_layers, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || n_layers < 1) fail(ErrorKind::config, "invalid GNN shape");
  std::mt19937_64 rng(seed);
  GnnModel m;
  m.variant = variant;
  Eigen::Index d = input_dim;
  for (int l = 0; l < n_layers; ++l) {
    GnnLayer L;
    L.W.resize(d, 3 * hidden_dim);
    init_uniform(L.W, std::sqrt(6.0 / static_cast<double>(d + hidden_dim)), rng);
    L.bias = Vector::Zero(hidden_dim);
    if (uses_edge_attention(variant)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
      for (auto& v : L.att_dst) {
        v.resize(hidden_dim);
        init_uniform(v, bound, rng);
      }
      for (auto& v : L.att_src) {
        v.resize(hidden_dim);
        init_uniform(v, bound, rng);
      }
    }
    if (uses_relation_attention(variant)) {
      L.rel_query.resize(hidden_dim);
      init_uniform(L.rel_query, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
    }
    m.layers.push_back(std::move(L));
    d = hidden_dim;
  }
  m.W_out.resize(hidden_dim, 2);
  init_uniform(m.W_out, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
  m.b_out = Vector::Zero(2);
  return m;
}

Eigen::Index GnnModel::parameter_count() const {
  Eigen::Index c = W_out.size() + b_out.size();
  for (const auto& L : layers) c += layer_parameter_count(L);
  return c;
}

Vector GnnModel::parameters() const {
  Vector p(parameter_count());
  Eigen::Index off = 0;
  auto put = [&](const auto& x) {
    p.segment(off, x.size()) = Eigen::Map<const Vector>(x.data(), x.size());
    off += x.size();
  };
  for_each_param(const_cast<GnnModel&>(*this), put);
  return p;
}

void GnnModel::set_parameters(const Vector& flat) {
  if (flat.size() != parameter_count()) fail(ErrorKind::dimension, "parameter vector has wrong length");
  Eigen::Index off = 0;
  auto take = [&](auto& x) {
    using T = std::decay_t<decltype(x)>;
    x = Eigen::Map<const T>(flat.data() + off, x.rows(), x.cols());
    off += x.size();
  };
  for_each_param(*this, take);
}

Matrix gnn_embeddings(const GnnModel& model, const HeteroGraph& g) {
  return forward_impl(model, g, 0.0, nullptr, nullptr);
}

Matrix gnn_forward(const GnnModel& model, const HeteroGraph& g) {
  return head_logits(model, forward_impl(model, g, 0.0, nullptr, nullptr));
}

double gnn_cross_entropy(const GnnModel& model, const HeteroGraph& g, std::span<const int> nodes,
                         std::span<const Label> y, double l2, Vector* grad) {
  if (nodes.size() != y.size() || nodes.empty()) fail(ErrorKind::dimension, "nodes and labels differ");
  ForwardTape tape;
  const RowMatrix z = head_logits(model, forward_impl(model, g, 0.0, nullptr, grad ? &tape : nullptr));
  RowMatrix dz = RowMatrix::Zero(z.rows(), 2);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const int i = nodes[k];
    const LogitPair zi{z(i, 0), z(i, 1)};
    loss += cross_entropy(zi, y[k]);
    const ProbPair p = softmax(zi);
    dz(i, 0) += inv * (p.human - (y[k] == Label::human ? 1.0 : 0.0));
    dz(i, 1) += inv * (p.bot - (y[k] == Label::bot ? 1.0 : 0.0));
  }
  const Vector theta = model.parameters();
  loss = loss * inv + 0.5 * l2 * theta.squaredNorm();
  if (grad) *grad = backward(model, g, tape, dz) + l2 * theta;
  return loss;
}

GnnModel train_gnn(GnnVariant variant, const HeteroGraph& g, std::span<const int> nodes, std::span<const Label> y,
                   const GnnTrainConfig& config, TrainTrace* trace) {
  if (nodes.size() != y.size()) fail(ErrorKind::dimension, "nodes and labels differ");
  if (!has_both_classes(y)) fail(ErrorKind::single_class, "GNN training needs both classes");
  if (config.batch_size < 1 || config.epochs < 0) fail(ErrorKind::config, "invalid GNN training schedule");
  std::mt19937_64 rng(config.seed);
  GnnModel model = make_gnn(variant, g.features.cols(), config.hidden_dim, config.layers, rng());
  check_dims(model, g);
  Adam opt(config.learning_rate, config.l2);
  Vector theta = model.parameters();
  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      ForwardTape tape;
      const RowMatrix z = head_logits(model, forward_impl(model, g, config.dropout, &rng, &tape));
      RowMatrix dz = RowMatrix::Zero(z.rows(), 2);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const int i = nodes[order[k]];
        const ProbPair p = softmax({z(i, 0), z(i, 1)});
        const Label yk = y[order[k]];
        dz(i, 0) += inv * (p.human - (yk == Label::human ? 1.0 : 0.0));
        dz(i, 1) += inv * (p.bot - (yk == Label::bot ? 1.0 : 0.0));
      }
      opt.step(theta, backward(model, g, tape, dz));
      model.set_parameters(theta);
    }
    if (trace) trace->epoch_loss.push_back(gnn_cross_entropy(model, g, nodes, y, config.l2, nullptr));
  }
  return model;
}

double distillation_loss(const Matrix& student_logits, const Matrix& teacher_probs, std::span<const Label> y,
                         double lambda, Matrix* dlogits) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::bad_lambda, "lambda must lie in [0,1]");
  const auto n = student_logits.rows();
  if (teacher_probs.rows() != n || static_cast<std::size_t>(n) != y.size() || student_logits.cols() != 2 ||
      teacher_probs.cols() != 2)
    fail(ErrorKind::dimension, "distillation inputs disagree in shape");
  if (dlogits) dlogits->resize(n, 2);
  double ce_sum = 0.0, kl_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const LogitPair z{student_logits(i, 0), student_logits(i, 1)};
    const ProbPair s = softmax(z);
    const auto yi = static_cast<std::size_t>(i);
    ce_sum += cross_entropy(z, y[yi]);
    const double m = std::max(z.human, z.bot);
    const double lse = m + std::log(std::exp(z.human - m) + std::exp(z.bot - m));
    std::array<double, 2> g{};  // log s_c - log t_c
    double kl = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double log_s = z[c] - lse;
      const double log_t = std::log(std::max(teacher_probs(i, c), 1e-300));
      g[static_cast<std::size_t>(c)] = log_s - log_t;
      kl += s[c] * g[static_cast<std::size_t>(c)];
    }
    kl_sum += kl;
    if (dlogits) {
      for (int c = 0; c < 2; ++c) {
        const double dce = s[c] - (class_index(y[yi]) == c ? 1.0 : 0.0);
        const double dkl = s[c] * (g[static_cast<std::size_t>(c)] - kl);
        (*dlogits)(i, c) = lambda * dce + (1.0 - lambda) * dkl;
      }
    }
  }
  return lambda * ce_sum + (1.0 - lambda) * kl_sum;
}

LinearStudent distill_student(const GnnModel& teacher, const HeteroGraph& g, std::span<const int> nodes,
                              std::span<const Label> y, const DistillConfig& config, TrainTrace* trace) {
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) fail(ErrorKind::bad_lambda, "lambda must lie in [0,1]");
  if (nodes.size() != y.size() || nodes.empty()) fail(ErrorKind::dimension, "nodes and labels differ");
  if (config.batch_size < 1 || config.epochs < 0) fail(ErrorKind::config, "invalid distillation schedule");
  const Matrix teacher_all = softmax_rows(gnn_forward(teacher, g));
  const RowMatrix X = gather_rows(g.features, nodes);
  Matrix T(static_cast<Eigen::Index>(nodes.size()), 2);
  for (std::size_t k = 0; k < nodes.size(); ++k) T.row(static_cast<Eigen::Index>(k)) = teacher_all.row(nodes[k]);

  std::mt19937_64 rng(config.seed);
  LinearStudent st{DenseHead(X.cols(), config.hidden_dim, rng())};
  Adam opt(config.learning_rate, config.l2);
  Vector theta = st.head.parameters();
  std::vector<int> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Label> yb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const int> batch(order.data() + start, end - start);
      const RowMatrix Xb = gather_rows(X, batch);
      Matrix Tb(static_cast<Eigen::Index>(batch.size()), 2);
      yb.clear();
      for (std::size_t k = 0; k < batch.size(); ++k) {
        Tb.row(static_cast<Eigen::Index>(k)) = T.row(batch[k]);
        yb.push_back(y[static_cast<std::size_t>(batch[k])]);
      }
      DenseHead::Tape tape;
      const Matrix z = st.head.forward(Xb, config.dropout, &rng, tape);
      Matrix dz;
      distillation_loss(z, Tb, yb, config.lambda, &dz);
      opt.step(theta, st.head.backward(Xb, tape, dz / static_cast<double>(batch.size())));
      st.head.set_parameters(theta);
    }
    if (trace) trace->epoch_loss.push_back(distillation_loss(st.head.logits(X), T, y, config.lambda) / static_cast<double>(nodes.size()));
  }
  return st;
}

LogitPair predict_student(const LinearStudent& student, std::span<const double> node_features) {
  return student.head.predict(node_features);
}

json to_json(const GnnModel& m) {
  json layers = json::array();
  for (const auto& L : m.layers) {
    json jl = {{"W", matrix_to_json(L.W)}, {"bias", vector_to_json(L.bias)}, {"rel_query", vector_to_json(L.rel_query)}};
    jl["att_dst"] = json::array({vector_to_json(L.att_dst[0]), vector_to_json(L.att_dst[1])});
    jl["att_src"] = json::array({vector_to_json(L.att_src[0]), vector_to_json(L.att_src[1])});
    layers.push_back(std::move(jl));
  }
  return {{"kind", "gnn"},
          {"version", kModelVersion},
          {"variant", to_string(m.variant)},
          {"layers", std::move(layers)},
          {"W_out", matrix_to_json(m.W_out)},
          {"b_out", vector_to_json(m.b_out)}};
}

GnnModel gnn_from_json(const json& j) {
  if (j.at("kind").get<std::string>() != "gnn" || j.at("version").get<int>() != kModelVersion)
    fail(ErrorKind::version, "unsupported GNN model file");
  GnnModel m;
  m.variant = parse_gnn_variant(j.at("variant").get<std::string>());
  Eigen::Index expected_in = -1;
  for (const auto& jl : j.at("layers")) {
    GnnLayer L;
    L.W = matrix_from_json(jl.at("W"));
    L.bias = vector_from_json(jl.at("bias"));
    L.rel_query = vector_from_json(jl.at("rel_query"));
    for (int r = 0; r < kRelationCount; ++r) {
      L.att_dst[static_cast<std::size_t>(r)] = vector_from_json(jl.at("att_dst").at(static_cast<std::size_t>(r)));
      L.att_src[static_cast<std::size_t>(r)] = vector_from_json(jl.at("att_src").at(static_cast<std::size_t>(r)));
    }
    const Eigen::Index h = L.W.cols() / 3;
    const Eigen::Index att = uses_edge_attention(m.variant) ? h : 0;
    const Eigen::Index q = uses_relation_attention(m.variant) ? h : 0;
    bool ok = L.W.cols() == 3 * h && h > 0 && L.bias.size() == h && L.rel_query.size() == q;
    for (int r = 0; r < kRelationCount; ++r)
      ok = ok && L.att_dst[static_cast<std::size_t>(r)].size() == att && L.att_src[static_cast<std::size_t>(r)].size() == att;
    if (expected_in >= 0) ok = ok && L.W.rows() == expected_in;
    if (!ok) fail(ErrorKind::dimension, "inconsistent GNN layer shapes");
    expected_in = h;
    m.layers.push_back(std::move(L));
  }
  m.W_out = matrix_from_json(j.at("W_out"));
  m.b_out = vector_from_json(j.at("b_out"));
  if (m.layers.empty() || m.W_out.rows() != expected_in || m.W_out.cols() != 2 || m.b_out.size() != 2)
    fail(ErrorKind::dimension, "inconsistent GNN head shapes");
  return m;
}

json to_json(const LinearStudent& s) { return {{"kind", "linear_student"}, {"version", kModelVersion}, {"head", to_json(s.head)}}; }

LinearStudent student_from_json(const json& j) {
  if (j.at("kind").get<std::string>() != "linear_student" || j.at("version").get<int>() != kModelVersion)
    fail(ErrorKind::version, "unsupported student model file");
  return {dense_head_from_json(j.at("head"))};
}

}  // namespace commbot
