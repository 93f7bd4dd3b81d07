#include "rbb/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "gnn_internal.hpp"
#include "rbb/errors.hpp"

namespace rbb {

namespace {

Mlp make_mlp(int in, int hidden, int out, bool normalized) {
  Mlp m;
  m.w1 = Matrix::Zero(hidden, in);
  m.b1 = Matrix::Zero(1, hidden);
  m.w2 = Matrix::Zero(out, hidden);
  m.b2 = Matrix::Zero(1, out);
  if (normalized) {
    m.ln_gain = Matrix::Ones(1, out);
    m.ln_bias = Matrix::Zero(1, out);
  }
  return m;
}

template <class M, class P>
void add_mlp(std::vector<std::pair<std::string, P>>& out, const std::string& prefix, M& m) {
  out.emplace_back(prefix + ".w1", &m.w1);
  out.emplace_back(prefix + ".b1", &m.b1);
  out.emplace_back(prefix + ".w2", &m.w2);
  out.emplace_back(prefix + ".b2", &m.b2);
  if (m.normalized()) {
    out.emplace_back(prefix + ".ln_gain", &m.ln_gain);
    out.emplace_back(prefix + ".ln_bias", &m.ln_bias);
  }
}

template <class Model, class P>
std::vector<std::pair<std::string, P>> collect(Model& model) {
  std::vector<std::pair<std::string, P>> out;
  add_mlp(out, "node_encoder", model.node_encoder_ref());
  add_mlp(out, "edge_encoder", model.edge_encoder_ref());
  for (int b = 0; b < model.block_count(); ++b) {
    add_mlp(out, "processor." + std::to_string(b) + ".edge", model.edge_update_ref(b));
    add_mlp(out, "processor." + std::to_string(b) + ".node", model.node_update_ref(b));
  }
  add_mlp(out, "decoder", model.decoder_ref());
  return out;
}

void fill_normal(Matrix& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

// Nonzero first-layer biases matter: with b1 = 0 the edge encoder is
// positively homogeneous in the scalar weight and layer normalization would
// cancel the weight's magnitude entirely.
void init_mlp(Mlp& m, std::mt19937_64& rng, double output_scale = 1.0) {
  double in1 = 1.0 / std::sqrt(static_cast<double>(m.w1.cols()));
  double in2 = 1.0 / std::sqrt(static_cast<double>(m.w2.cols()));
  fill_normal(m.w1, in1, rng);
  fill_uniform(m.b1, in1, rng);
  fill_normal(m.w2, output_scale * in2, rng);
  fill_uniform(m.b2, output_scale * in2, rng);
}

BoundMlp bind(Tape& tape, const Mlp& m, bool trainable, std::vector<Var>& params) {
  auto put = [&](const Matrix& x) {
    Var v = trainable ? tape.variable_ref(x) : tape.constant_ref(x);
    if (trainable) params.push_back(v);
    return v;
  };
  BoundMlp b;
  b.w1 = put(m.w1);
  b.b1 = put(m.b1);
  b.w2 = put(m.w2);
  b.b2 = put(m.b2);
  b.normalized = m.normalized();
  if (b.normalized) {
    b.ln_gain = put(m.ln_gain);
    b.ln_bias = put(m.ln_bias);
  }
  return b;
}

}  // namespace

// Accessors used by the generic parameter walk above.
struct ModelAccess {
  GnnModel& m;
  int block_count() const { return m.block_count(); }
  Mlp& node_encoder_ref() { return m.node_encoder_; }
  Mlp& edge_encoder_ref() { return m.edge_encoder_; }
  Mlp& edge_update_ref(int b) { return m.edge_update_[static_cast<std::size_t>(b)]; }
  Mlp& node_update_ref(int b) { return m.node_update_[static_cast<std::size_t>(b)]; }
  Mlp& decoder_ref() { return m.decoder_; }
};

struct ConstModelAccess {
  const GnnModel& m;
  int block_count() const { return m.block_count(); }
  const Mlp& node_encoder_ref() { return m.node_encoder(); }
  const Mlp& edge_encoder_ref() { return m.edge_encoder(); }
  const Mlp& edge_update_ref(int b) { return m.edge_update(b); }
  const Mlp& node_update_ref(int b) { return m.node_update(b); }
  const Mlp& decoder_ref() { return m.decoder(); }
};

void GnnModel::allocate(const GnnConfig& config) {
  if (config.hidden < 1 || config.rounds < 1) {
    throw Error(ErrorCode::kInvalidParameters, "hidden width and rounds must be positive");
  }
  config_ = config;
  const int h = config.hidden;
  node_encoder_ = make_mlp(kNodeFeatures, h, h, true);
  edge_encoder_ = make_mlp(kEdgeFeatures, h, h, true);
  int blocks = config.shared_processor ? 1 : config.rounds;
  edge_update_.assign(static_cast<std::size_t>(blocks), make_mlp(3 * h, h, h, true));
  node_update_.assign(static_cast<std::size_t>(blocks), make_mlp(2 * h, h, h, true));
  decoder_ = make_mlp(h, h, 1, false);
}

GnnModel GnnModel::initialize(const GnnConfig& config, std::uint64_t seed) {
  GnnModel m;
  m.allocate(config);
  std::mt19937_64 rng(seed);
  init_mlp(m.node_encoder_, rng);
  init_mlp(m.edge_encoder_, rng);
  for (std::size_t b = 0; b < m.edge_update_.size(); ++b) {
    init_mlp(m.edge_update_[b], rng);
    init_mlp(m.node_update_[b], rng);
  }
  // Small logits at initialization keep early probabilities near 0.5.
  init_mlp(m.decoder_, rng, 0.1);
  return m;
}

std::vector<std::pair<std::string, Matrix*>> GnnModel::named_parameters() {
  ModelAccess a{*this};
  return collect<ModelAccess, Matrix*>(a);
}

std::vector<std::pair<std::string, const Matrix*>> GnnModel::named_parameters() const {
  ConstModelAccess a{*this};
  return collect<ConstModelAccess, const Matrix*>(a);
}

std::size_t GnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : named_parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

bool GnnModel::operator==(const GnnModel& other) const {
  if (config_.hidden != other.config_.hidden || config_.rounds != other.config_.rounds ||
      config_.shared_processor != other.config_.shared_processor) {
    return false;
  }
  auto a = named_parameters();
  auto b = other.named_parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || a[i].second->rows() != b[i].second->rows() ||
        a[i].second->cols() != b[i].second->cols() || *a[i].second != *b[i].second) {
      return false;
    }
  }
  return true;
}

GnnModel model_from_parts(const GnnConfig& config, std::vector<std::pair<std::string, Matrix>> parts) {
  GnnModel m;
  m.allocate(config);
  auto slots = m.named_parameters();
  if (parts.size() != slots.size()) {
    throw Error(ErrorCode::kShapeMismatch, "expected " + std::to_string(slots.size()) + " parameter arrays, got " +
                                               std::to_string(parts.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& [name, slot] = slots[i];
    auto found = std::find_if(parts.begin(), parts.end(), [&](const auto& p) { return p.first == name; });
    if (found == parts.end()) throw Error(ErrorCode::kMissingField, "parameter '" + name + "'");
    if (found->second.rows() != slot->rows() || found->second.cols() != slot->cols()) {
      throw Error(ErrorCode::kShapeMismatch, "parameter '" + name + "' has shape " +
                                                 std::to_string(found->second.rows()) + "x" +
                                                 std::to_string(found->second.cols()));
    }
    for (Eigen::Index k = 0; k < found->second.size(); ++k) {
      if (!std::isfinite(found->second.data()[k])) {
        throw Error(ErrorCode::kInvalidParameters, "parameter '" + name + "' is not finite");
      }
    }
    *slot = std::move(found->second);
  }
  return m;
}

BoundModel::BoundModel(Tape& tape, const GnnModel& m, bool trainable) : model(&m) {
  node_encoder = bind(tape, m.node_encoder(), trainable, parameters);
  edge_encoder = bind(tape, m.edge_encoder(), trainable, parameters);
  for (int b = 0; b < m.block_count(); ++b) {
    edge_update.push_back(bind(tape, m.edge_update(b), trainable, parameters));
    node_update.push_back(bind(tape, m.node_update(b), trainable, parameters));
  }
  decoder = bind(tape, m.decoder(), trainable, parameters);
}

namespace detail {

std::vector<int> iota(int count) {
  std::vector<int> v(static_cast<std::size_t>(count));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

Var mlp_tail(const BoundMlp& mlp, Var pre) {
  Var y = diff::affine(diff::relu(pre), mlp.w2, mlp.b2);
  return mlp.normalized ? diff::layer_normalize(y, mlp.ln_gain, mlp.ln_bias) : y;
}

Var edge_update_from_projections(const BoundMlp& mlp, Var edge_proj, std::vector<int> ie, Var recv_proj,
                                 std::vector<int> ir, Var send_proj, std::vector<int> is) {
  std::vector<diff::GatheredTerm> terms;
  terms.push_back({edge_proj, std::move(ie)});
  terms.push_back({recv_proj, std::move(ir)});
  terms.push_back({send_proj, std::move(is)});
  return mlp_tail(mlp, diff::gather_add(std::move(terms), mlp.b1));
}

Var node_update_from_projections(const BoundMlp& mlp, Var agg, Var node_proj, std::vector<int> in) {
  Var base = diff::linear_block(agg, mlp.w1, 0);
  std::vector<diff::GatheredTerm> terms;
  terms.push_back({node_proj, std::move(in)});
  return mlp_tail(mlp, diff::gather_add(base, std::move(terms), mlp.b1));
}

}  // namespace detail

Var apply_mlp(const BoundMlp& mlp, Var x) { return detail::mlp_tail(mlp, diff::affine(x, mlp.w1, mlp.b1)); }

void GraphBatch::append(const Graph& g, const WeightVector& w, const PairQuery& q) {
  validate_weights(g, w);
  if (q.source < 0 || q.destination < 0 || q.source >= g.node_count() || q.destination >= g.node_count()) {
    throw Error(ErrorCode::kInvalidNode, "query (" + std::to_string(q.source) + ", " +
                                             std::to_string(q.destination) + ")");
  }
  if (q.source == q.destination) {
    throw Error(ErrorCode::kSameEndpoints, "query node " + std::to_string(q.source));
  }
  const int base = node_count;
  Matrix nf = Matrix::Zero(node_count + g.node_count(), kNodeFeatures);
  nf.topRows(node_count) = node_features;
  nf(base + q.source, 0) = 1.0;
  nf(base + q.destination, 1) = 1.0;
  node_features = std::move(nf);

  const int e0 = edge_count();
  Matrix ef(e0 + g.edge_count(), kEdgeFeatures);
  ef.topRows(e0) = edge_features;
  for (const EdgeTriple& e : g.edges()) {
    receiver.push_back(base + e.receiver);
    sender.push_back(base + e.sender);
    ef(e0 + e.edge_index, 0) = w[static_cast<std::size_t>(e.edge_index)];
  }
  edge_features = std::move(ef);
  node_count += g.node_count();
  edge_offset.push_back(edge_count());
}

GraphState encode(const BoundModel& model, const GraphBatch& batch, Var edge_features) {
  Tape& tape = *edge_features.tape();
  if (edge_features.rows() != batch.edge_count() || edge_features.cols() != kEdgeFeatures ||
      batch.node_features.rows() != batch.node_count || batch.node_features.cols() != kNodeFeatures) {
    throw Error(ErrorCode::kShapeMismatch, "features do not match the batch");
  }
  GraphState s;
  s.nodes = apply_mlp(model.node_encoder, tape.constant_ref(batch.node_features));
  s.edges = apply_mlp(model.edge_encoder, edge_features);
  return s;
}

GraphState encode(Tape& tape, const BoundModel& model, const GraphBatch& batch) {
  return encode(model, batch, tape.constant_ref(batch.edge_features));
}

namespace {

GraphState step(const BoundModel& model, const GraphBatch& batch, const GraphState& state, int round,
                bool update_nodes) {
  const int h = model.model->config().hidden;
  if (state.nodes.rows() != batch.node_count || state.edges.rows() != batch.edge_count() || state.nodes.cols() != h ||
      state.edges.cols() != h) {
    throw Error(ErrorCode::kShapeMismatch, "state does not match the batch");
  }
  if (round < 1 || round > model.model->config().rounds) {
    throw Error(ErrorCode::kInvalidParameters, "round " + std::to_string(round));
  }
  int b = model.model->block_for_round(round);
  const BoundMlp& fe = model.edge_update[static_cast<std::size_t>(b)];
  const BoundMlp& fv = model.node_update[static_cast<std::size_t>(b)];

  Var pe = diff::linear_block(state.edges, fe.w1, 0);
  Var pr = diff::linear_block(state.nodes, fe.w1, h);
  Var ps = diff::linear_block(state.nodes, fe.w1, 2 * h);
  GraphState next;
  next.edges = detail::edge_update_from_projections(fe, pe, detail::iota(batch.edge_count()), pr, batch.receiver, ps,
                                                    batch.sender);
  if (!update_nodes) {
    next.nodes = state.nodes;
    return next;
  }
  Var agg = diff::segment_sum(next.edges, detail::iota(batch.edge_count()), batch.receiver, batch.node_count);
  Var pn = diff::linear_block(state.nodes, fv.w1, h);
  next.nodes = detail::node_update_from_projections(fv, agg, pn, detail::iota(batch.node_count));
  return next;
}

}  // namespace

GraphState process_step(const BoundModel& model, const GraphBatch& batch, const GraphState& state, int round) {
  return step(model, batch, state, round, true);
}

Var decode(const BoundModel& model, Var edges) { return diff::sigmoid(apply_mlp(model.decoder, edges)); }

std::vector<Var> forward_steps(const BoundModel& model, const GraphBatch& batch, Var edge_features) {
  GraphState s = encode(model, batch, edge_features);
  const int rounds = model.model->config().rounds;
  std::vector<Var> out;
  for (int t = 1; t <= rounds; ++t) {
    // Final-round node latents feed nothing.
    s = step(model, batch, s, t, t < rounds);
    out.push_back(decode(model, s.edges));
  }
  return out;
}

namespace detail {

Var forward_final(const BoundModel& model, const GraphBatch& batch, Var edge_features) {
  GraphState s = encode(model, batch, edge_features);
  const int rounds = model.model->config().rounds;
  for (int t = 1; t <= rounds; ++t) s = step(model, batch, s, t, t < rounds);
  return decode(model, s.edges);
}

}  // namespace detail

PathPrediction predict_path(const GnnModel& model, const Graph& g, const WeightVector& w, const PairQuery& q) {
  GraphBatch batch;
  batch.append(g, w, q);
  Tape tape;
  BoundModel bound(tape, model, false);
  auto steps = forward_steps(bound, batch, tape.constant_ref(batch.edge_features));
  PathPrediction out;
  for (Var v : steps) {
    const Matrix& p = v.value();
    out.per_step.emplace_back(p.data(), p.data() + p.size());
  }
  out.probabilities = out.per_step.back();
  return out;
}

}  // namespace rbb
