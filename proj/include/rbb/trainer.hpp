#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "rbb/gnn.hpp"
#include "rbb/netgraph.hpp"

namespace rbb {

/// scale * Beta(a, b). Symmetric shapes a = b > 1 give mode scale / 2.
struct WeightPrior {
  double a = 2.0;
  double b = 2.0;
  double scale = 2.0;
};

/// Barabasi-Albert graph: complete graph on m+1 nodes, then every new node
/// links to m distinct existing nodes drawn with probability proportional to
/// degree. Links are bidirectional with unit capacity.
Graph sample_ba_topology(int n, int m, std::uint64_t seed);

/// Independent prior draws floored at kMinWeight.
WeightVector sample_weights_beta(int edge_count, const WeightPrior& prior, std::uint64_t seed);

struct TrainingSample {
  Graph graph;
  WeightVector weights;
  PairQuery query;
  PathVector label;
};

struct TrainConfig {
  int steps = 4000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int min_nodes = 10;
  int max_nodes = 20;
  int attachment = 2;
  WeightPrior prior;
  std::uint64_t seed = 0;
  /// Validation accuracy is recorded every this many steps and after the last.
  int eval_every = 250;
  /// When non-empty, samples use these graphs (drawn uniformly) instead of
  /// fresh BA graphs.
  std::vector<Graph> graph_pool;
};

/// Fresh BA graph (or a pool graph), prior weights, a uniform ordered pair and
/// its Dijkstra label for each of config.batch_size samples.
std::vector<TrainingSample> make_training_batch(const TrainConfig& config, std::uint64_t seed);

/// `count` samples on the given topologies (used round-robin) with prior
/// weights and uniform pairs.
std::vector<TrainingSample> make_validation_set(const std::vector<Graph>& topologies, int count,
                                                const WeightPrior& prior, std::uint64_t seed);

/// Sum over rounds of the per-sample mean edge cross entropy, averaged over
/// the samples, at the model's current parameters.
double batch_loss(const GnnModel& model, const std::vector<TrainingSample>& batch);

struct LossGradient {
  double loss = 0.0;
  /// d(loss)/d(parameter), in named_parameters() order.
  std::vector<Matrix> gradients;
};

LossGradient batch_loss_gradient(const GnnModel& model, const std::vector<TrainingSample>& batch);

/// Pooled fraction of edges whose final-round prediction, thresholded at 0.5,
/// equals the label.
double edge_accuracy(const GnnModel& model, const std::vector<TrainingSample>& samples);

struct MetricRow {
  int step = 0;
  double loss = 0.0;
  std::optional<double> accuracy;
};

struct TrainResult {
  GnnModel model;
  std::vector<MetricRow> history;
};

/// Called after every step with the row just recorded.
using TrainProgress = std::function<void(const MetricRow&)>;

TrainResult train(GnnModel model, const TrainConfig& config, const std::vector<TrainingSample>& validation,
                  const TrainProgress& progress = {});

/// CSV with header step,loss,accuracy; accuracy is empty on steps without
/// validation.
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& history);

}  // namespace rbb
