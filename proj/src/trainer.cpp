#include "rbb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <set>
#include <string>

#include "gnn_internal.hpp"
#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"

namespace rbb {

namespace {

constexpr int kEvalChunk = 64;

PairQuery random_pair(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, n - 1);
  int u = pick(rng);
  int v = pick(rng);
  while (v == u) v = pick(rng);
  return {u, v};
}

TrainingSample labeled_sample(Graph g, WeightVector w, PairQuery q) {
  PathVector label = path_vector(g, w, q.source, q.destination);
  return TrainingSample{std::move(g), std::move(w), q, std::move(label)};
}

struct LabeledBatch {
  GraphBatch batch;
  Matrix labels;
  Matrix weights;  // 1 / (edges in the sample * samples)
};

LabeledBatch assemble(std::span<const TrainingSample> samples) {
  LabeledBatch out;
  for (const TrainingSample& s : samples) out.batch.append(s.graph, s.weights, s.query);
  out.labels.resize(out.batch.edge_count(), 1);
  out.weights.resize(out.batch.edge_count(), 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& membership = samples[i].label.membership;
    int b = out.batch.edge_offset[i];
    int e = out.batch.edge_offset[i + 1];
    for (int k = b; k < e; ++k) {
      out.labels(k, 0) = membership[static_cast<std::size_t>(k - b)];
      out.weights(k, 0) = 1.0 / (static_cast<double>(e - b) * static_cast<double>(samples.size()));
    }
  }
  return out;
}

Var taped_loss(Tape& tape, const BoundModel& bm, const LabeledBatch& lb) {
  std::vector<Var> steps = forward_steps(bm, lb.batch, tape.constant_ref(lb.batch.edge_features));
  Var total = diff::weighted_binary_cross_entropy(steps.front(), lb.labels, lb.weights);
  for (std::size_t t = 1; t < steps.size(); ++t) {
    total = diff::add(total, diff::weighted_binary_cross_entropy(steps[t], lb.labels, lb.weights));
  }
  return total;
}

LossGradient loss_gradient(const LabeledBatch& lb, const GnnModel& model) {
  Tape tape;
  BoundModel bm(tape, model, true);
  Var total = taped_loss(tape, bm, lb);
  LossGradient out{total.scalar(), {}};
  if (!std::isfinite(out.loss)) return out;
  tape.backward(total);
  out.gradients.reserve(bm.parameters.size());
  for (Var p : bm.parameters) out.gradients.push_back(tape.grad(p));
  return out;
}

void check_config(const TrainConfig& c) {
  if (c.steps < 1 || c.batch_size < 1 || !(c.learning_rate > 0.0) || c.min_nodes < c.attachment + 1 ||
      c.max_nodes < c.min_nodes || c.eval_every < 1) {
    throw Error(ErrorCode::kInvalidParameters, "training configuration");
  }
}

}  // namespace

Graph sample_ba_topology(int n, int m, std::uint64_t seed) {
  if (m < 1 || m + 1 > n) {
    throw Error(ErrorCode::kInvalidParameters,
                "BA graph needs 1 <= m < n, got n=" + std::to_string(n) + " m=" + std::to_string(m));
  }
  std::mt19937_64 rng(seed);
  GraphSpec spec{"ba-" + std::to_string(n) + "-" + std::to_string(m) + "-" + std::to_string(seed), n, {}};
  // Each link contributes both endpoints, so a uniform draw from `ends` is a
  // degree-proportional draw of a node.
  std::vector<int> ends;
  for (int a = 0; a <= m; ++a) {
    for (int b = a + 1; b <= m; ++b) {
      spec.links.push_back({a, b, 1.0, false});
      ends.push_back(a);
      ends.push_back(b);
    }
  }
  for (int node = m + 1; node < n; ++node) {
    std::set<int> targets;
    std::vector<int> order;
    std::uniform_int_distribution<std::size_t> pick(0, ends.size() - 1);
    while (static_cast<int>(targets.size()) < m) {
      int t = ends[pick(rng)];
      if (targets.insert(t).second) order.push_back(t);
    }
    for (int t : order) {
      spec.links.push_back({t, node, 1.0, false});
      ends.push_back(t);
      ends.push_back(node);
    }
  }
  return build_graph(spec);
}

WeightVector sample_weights_beta(int edge_count, const WeightPrior& prior, std::uint64_t seed) {
  if (!(prior.a > 0.0) || !(prior.b > 0.0) || !(prior.scale > 0.0) || edge_count < 0) {
    throw Error(ErrorCode::kInvalidParameters, "weight prior");
  }
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> ga(prior.a, 1.0);
  std::gamma_distribution<double> gb(prior.b, 1.0);
  std::vector<double> w(static_cast<std::size_t>(edge_count));
  for (double& x : w) {
    double a = ga(rng);
    double b = gb(rng);
    x = std::max(kMinWeight, prior.scale * a / (a + b));
  }
  return WeightVector(std::move(w));
}

std::vector<TrainingSample> make_training_batch(const TrainConfig& config, std::uint64_t seed) {
  check_config(config);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(config.min_nodes, config.max_nodes);
  std::vector<TrainingSample> out;
  out.reserve(static_cast<std::size_t>(config.batch_size));
  for (int i = 0; i < config.batch_size; ++i) {
    Graph g;
    if (config.graph_pool.empty()) {
      g = sample_ba_topology(size(rng), config.attachment, rng());
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, config.graph_pool.size() - 1);
      g = config.graph_pool[pick(rng)];
    }
    WeightVector w = sample_weights_beta(g.edge_count(), config.prior, rng());
    PairQuery q = random_pair(g.node_count(), rng);
    out.push_back(labeled_sample(std::move(g), std::move(w), q));
  }
  return out;
}

std::vector<TrainingSample> make_validation_set(const std::vector<Graph>& topologies, int count,
                                                const WeightPrior& prior, std::uint64_t seed) {
  if (topologies.empty() || count < 1) throw Error(ErrorCode::kEmptyValidationSet, "no topologies or samples");
  std::mt19937_64 rng(seed);
  std::vector<TrainingSample> out;
  for (int i = 0; i < count; ++i) {
    const Graph& g = topologies[static_cast<std::size_t>(i) % topologies.size()];
    WeightVector w = sample_weights_beta(g.edge_count(), prior, rng());
    PairQuery q = random_pair(g.node_count(), rng);
    out.push_back(labeled_sample(g, std::move(w), q));
  }
  return out;
}

double batch_loss(const GnnModel& model, const std::vector<TrainingSample>& batch) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyValidationSet, "empty batch");
  LabeledBatch lb = assemble(batch);
  Tape tape;
  BoundModel bm(tape, model, false);
  return taped_loss(tape, bm, lb).scalar();
}

LossGradient batch_loss_gradient(const GnnModel& model, const std::vector<TrainingSample>& batch) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyValidationSet, "empty batch");
  return loss_gradient(assemble(batch), model);
}

double edge_accuracy(const GnnModel& model, const std::vector<TrainingSample>& samples) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyValidationSet, "no samples");
  long correct = 0;
  long total = 0;
  std::span<const TrainingSample> all(samples);
  for (std::size_t b = 0; b < samples.size(); b += kEvalChunk) {
    auto chunk = all.subspan(b, std::min<std::size_t>(kEvalChunk, samples.size() - b));
    LabeledBatch lb = assemble(chunk);
    Tape tape;
    BoundModel bm(tape, model, false);
    const Matrix& p = detail::forward_final(bm, lb.batch, tape.constant_ref(lb.batch.edge_features)).value();
    for (Eigen::Index k = 0; k < p.rows(); ++k) {
      double predicted = p(k, 0) >= 0.5 ? 1.0 : 0.0;
      correct += predicted == lb.labels(k, 0) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(GnnModel model, const TrainConfig& config, const std::vector<TrainingSample>& validation,
                  const TrainProgress& progress) {
  check_config(config);
  std::mt19937_64 seeds(config.seed);
  diff::AdamState adam;
  std::vector<Matrix*> params;
  for (auto& [name, p] : model.named_parameters()) params.push_back(p);

  TrainResult result;
  for (int step = 1; step <= config.steps; ++step) {
    LossGradient lg = loss_gradient(assemble(make_training_batch(config, seeds())), model);
    if (!std::isfinite(lg.loss)) {
      throw Error(ErrorCode::kDivergedLoss, "loss " + std::to_string(lg.loss) + " at step " + std::to_string(step));
    }
    diff::adam_step(adam, params, lg.gradients, config.learning_rate);

    MetricRow row{step, lg.loss, std::nullopt};
    if (!validation.empty() && (step % config.eval_every == 0 || step == config.steps)) {
      row.accuracy = edge_accuracy(model, validation);
    }
    result.history.push_back(row);
    if (progress) progress(row);
  }
  result.model = std::move(model);
  return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& history) {
  out << "step,loss,accuracy\n";
  char buf[64];
  for (const MetricRow& r : history) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    out << r.step << ',' << buf << ',';
    if (r.accuracy) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.accuracy);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace rbb
