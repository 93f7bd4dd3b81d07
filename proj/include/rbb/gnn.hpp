#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rbb/diffcore.hpp"
#include "rbb/netgraph.hpp"

namespace rbb {

using diff::Matrix;
using diff::Tape;
using diff::Var;

struct GnnConfig {
  int hidden = 128;
  int rounds = 8;
  /// One processor block reused for every round instead of `rounds` blocks.
  bool shared_processor = false;
};

inline constexpr int kNodeFeatures = 2;  // [is source, is destination]
inline constexpr int kEdgeFeatures = 1;  // [weight]

/// Linear -> ReLU -> Linear, optionally followed by layer normalization.
struct Mlp {
  Matrix w1, b1, w2, b2;
  Matrix ln_gain, ln_bias;  // empty when the block has no normalization

  bool normalized() const { return ln_gain.size() != 0; }
};

/// Encode-process-decode network mapping (graph, weights, query) to per-edge
/// probabilities of lying on the query's shortest path.
class GnnModel;
GnnModel model_from_parts(const GnnConfig& config, std::vector<std::pair<std::string, Matrix>> parts);

class GnnModel {
 public:
  GnnModel() = default;

  /// Random initialization, deterministic in `seed`.
  static GnnModel initialize(const GnnConfig& config, std::uint64_t seed);

  const GnnConfig& config() const noexcept { return config_; }
  int block_count() const noexcept { return static_cast<int>(edge_update_.size()); }
  /// Processor block used in round `round` (1-based).
  int block_for_round(int round) const { return config_.shared_processor ? 0 : round - 1; }

  const Mlp& node_encoder() const { return node_encoder_; }
  const Mlp& edge_encoder() const { return edge_encoder_; }
  const Mlp& edge_update(int block) const { return edge_update_.at(static_cast<std::size_t>(block)); }
  const Mlp& node_update(int block) const { return node_update_.at(static_cast<std::size_t>(block)); }
  const Mlp& decoder() const { return decoder_; }

  /// Every parameter tensor with a stable dotted name, in a fixed order.
  std::vector<std::pair<std::string, Matrix*>> named_parameters();
  std::vector<std::pair<std::string, const Matrix*>> named_parameters() const;
  std::size_t parameter_count() const;

  bool operator==(const GnnModel& other) const;

 private:
  friend struct ModelAccess;
  friend GnnModel model_from_parts(const GnnConfig&, std::vector<std::pair<std::string, Matrix>>);
  void allocate(const GnnConfig& config);

  GnnConfig config_;
  Mlp node_encoder_, edge_encoder_;
  std::vector<Mlp> edge_update_, node_update_;
  Mlp decoder_;
};

// --- taped building blocks -------------------------------------------------

/// Mlp parameters placed on a tape.
struct BoundMlp {
  Var w1, b1, w2, b2, ln_gain, ln_bias;
  bool normalized = false;
};

/// All model parameters on one tape, as constants or as trainable variables.
struct BoundModel {
  BoundModel(Tape& tape, const GnnModel& model, bool trainable);

  const GnnModel* model;
  BoundMlp node_encoder, edge_encoder, decoder;
  std::vector<BoundMlp> edge_update, node_update;
  /// Parameter handles in named_parameters() order (trainable binding only).
  std::vector<Var> parameters;
};

/// Applies an Mlp to every row of x.
Var apply_mlp(const BoundMlp& mlp, Var x);

struct PairQuery {
  NodeId source = 0;
  NodeId destination = 0;
};

/// Disjoint union of (graph, query) instances evaluated as one graph.
struct GraphBatch {
  int node_count = 0;
  std::vector<int> receiver, sender;  // global node indices per edge
  std::vector<int> edge_offset{0};    // edge range of instance i: [offset[i], offset[i+1])
  Matrix node_features;               // node_count x 2
  Matrix edge_features;               // edge_count x 1

  int edge_count() const { return static_cast<int>(receiver.size()); }
  int instance_count() const { return static_cast<int>(edge_offset.size()) - 1; }

  void append(const Graph& g, const WeightVector& w, const PairQuery& q);
};

struct GraphState {
  Var nodes;  // node_count x H
  Var edges;  // edge_count x H
};

/// Feature construction and encoders. `edge_features` overrides the batch's
/// weights with a (possibly differentiable) column.
GraphState encode(const BoundModel& model, const GraphBatch& batch, Var edge_features);
GraphState encode(Tape& tape, const BoundModel& model, const GraphBatch& batch);

/// One message-passing round: edges from [edge, receiver, sender], incoming-edge
/// sums per node, then nodes from [sum, node].
GraphState process_step(const BoundModel& model, const GraphBatch& batch, const GraphState& state, int round);

/// Per-edge probabilities (edge_count x 1) from edge latents.
Var decode(const BoundModel& model, Var edges);

/// Full forward pass with a decode after every round.
std::vector<Var> forward_steps(const BoundModel& model, const GraphBatch& batch, Var edge_features);

struct PathPrediction {
  std::vector<double> probabilities;             // final round
  std::vector<std::vector<double>> per_step;     // one vector per round
};

PathPrediction predict_path(const GnnModel& model, const Graph& g, const WeightVector& w, const PairQuery& q);

/// Soft routing matrix: pair_count x edge_count, rows in pair order.
Matrix predict_all_pairs(const GnnModel& model, const Graph& g, const WeightVector& w);

struct AllPairsGradient {
  Matrix probabilities;  // the soft routing matrix at w
  std::vector<double> weight_gradient;
};

/// Vector-Jacobian product of the soft routing matrix: given d(objective)/dP
/// computed by `seed_fn` from P, returns P and d(objective)/dw.
AllPairsGradient all_pairs_vjp(const GnnModel& model, const Graph& g, const WeightVector& w,
                               const std::function<Matrix(const Matrix&)>& seed_fn);

enum class AllPairsEngine {
  /// Each pair's computation is restricted to nodes reachable from its
  /// endpoints within the current round; everything else reuses a shared
  /// query-free state. 64-bit, on the autodiff tape.
  kSparse,
  /// Plain batched evaluation of every (pair, edge). 64-bit reference.
  kDense,
  /// The sparse scheme in 32-bit arithmetic with hand-written reverse pass and
  /// stored activations. Roughly 3x faster than kSparse for gradients.
  kSparseSingle,
};

struct AllPairsOptions {
  AllPairsEngine engine = AllPairsEngine::kSparse;
  /// Target edge rows per evaluation chunk.
  int chunk_rows = 2048;
  /// kSparseSingle keeps forward activations for the reverse pass while they
  /// fit in this many bytes and recomputes them otherwise.
  std::size_t activation_budget = std::size_t{1} << 31;
};

Matrix predict_all_pairs(const GnnModel& model, const Graph& g, const WeightVector& w, const AllPairsOptions& opts);
AllPairsGradient all_pairs_vjp(const GnnModel& model, const Graph& g, const WeightVector& w,
                               const std::function<Matrix(const Matrix&)>& seed_fn, const AllPairsOptions& opts);

// --- checkpoints -----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

std::string serialize_model(const GnnModel& model);
GnnModel deserialize_model(const std::string& document);
void save_model(const GnnModel& model, const std::string& path);
GnnModel load_model(const std::string& path);

}  // namespace rbb
