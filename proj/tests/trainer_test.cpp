#include "rbb/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "rbb/errors.hpp"
#include "test_support.hpp"

namespace rbb {
namespace {

GnnConfig small_config() {
  GnnConfig c;
  c.hidden = 16;
  c.rounds = 3;
  return c;
}

TEST(BaTopology, EdgeCountFollowsGenerator) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Graph g = sample_ba_topology(10, 2, seed);
    EXPECT_EQ(g.node_count(), 10);
    EXPECT_EQ(g.edge_count(), 34);
  }
  EXPECT_EQ(sample_ba_topology(20, 3, 1).edge_count(), 2 * (6 + 3 * 16));
}

TEST(BaTopology, DeterministicAndSeedDependent) {
  Graph a = sample_ba_topology(15, 2, 7);
  Graph b = sample_ba_topology(15, 2, 7);
  Graph c = sample_ba_topology(15, 2, 8);
  auto triples = [](const Graph& g) {
    std::vector<std::pair<int, int>> out;
    for (const EdgeTriple& e : g.edges()) out.emplace_back(e.sender, e.receiver);
    return out;
  };
  EXPECT_EQ(triples(a), triples(b));
  EXPECT_NE(triples(a), triples(c));
}

TEST(BaTopology, RejectsBadParameters) {
  EXPECT_THROW(sample_ba_topology(3, 3, 0), Error);
  EXPECT_THROW(sample_ba_topology(5, 0, 0), Error);
  EXPECT_NO_THROW(sample_ba_topology(2, 1, 0));
}

TEST(BetaWeights, BoundsAndMoments) {
  WeightVector w = sample_weights_beta(100000, {}, 3);
  double sum = 0.0;
  for (double x : w.values) {
    ASSERT_GT(x, 0.0);
    ASSERT_LT(x, 2.0);
    ASSERT_GE(x, kMinWeight);
    sum += x;
  }
  double mean = sum / static_cast<double>(w.size());
  double var = 0.0;
  for (double x : w.values) var += (x - mean) * (x - mean);
  var /= static_cast<double>(w.size() - 1);
  const double a = 2.0, b = 2.0;
  double expected = 4.0 * a * b / ((a + b) * (a + b) * (a + b + 1.0));
  EXPECT_NEAR(expected, 0.2, 1e-15);
  EXPECT_NEAR(var, expected, 0.05 * expected);
  EXPECT_NEAR(mean, 1.0, 0.01);
}

TEST(TrainingBatch, SamplesAreValidAndOptimal) {
  TrainConfig config;
  auto batch = make_training_batch(config, 11);
  ASSERT_EQ(batch.size(), 32u);
  for (const TrainingSample& s : batch) {
    EXPECT_GE(s.graph.node_count(), 10);
    EXPECT_LE(s.graph.node_count(), 20);
    EXPECT_NE(s.query.source, s.query.destination);
    EXPECT_TRUE(is_simple_path(s.graph, s.label, s.query.source, s.query.destination));
  }
  // Brute-force optimality on graphs small enough to enumerate.
  config.min_nodes = 10;
  config.max_nodes = 12;
  config.batch_size = 8;
  for (const TrainingSample& s : make_training_batch(config, 12)) {
    double cost = testing::path_cost(s.label.edge_list(), s.weights);
    double best = testing::brute_force_distance(s.graph, s.weights, s.query.source, s.query.destination);
    EXPECT_NEAR(cost, best, 1e-12);
  }
}

TEST(TrainingBatch, DeterministicPerSeed) {
  TrainConfig config;
  config.batch_size = 4;
  auto a = make_training_batch(config, 5);
  auto b = make_training_batch(config, 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].weights, b[i].weights);
    EXPECT_EQ(a[i].label, b[i].label);
  }
}

TEST(TrainingLoss, UntrainedModelIsNearChance) {
  GnnModel model = GnnModel::initialize({}, 0);
  auto batch = make_training_batch(TrainConfig{}, 1);
  double loss = batch_loss(model, batch);
  double chance = std::log(2.0) * 8;
  EXPECT_NEAR(loss, chance, 0.2 * chance);
}

TEST(TrainingLoss, GradientMatchesFiniteDifferences) {
  TrainConfig config;
  config.batch_size = 3;
  auto batch = make_training_batch(config, 2);
  GnnModel model = GnnModel::initialize(small_config(), 4);
  LossGradient lg = batch_loss_gradient(model, batch);
  EXPECT_DOUBLE_EQ(lg.loss, batch_loss(model, batch));
  auto params = model.named_parameters();
  ASSERT_EQ(lg.gradients.size(), params.size());
  const double h = 1e-5;
  std::mt19937_64 rng(9);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].second;
    std::uniform_int_distribution<Eigen::Index> pick(0, p.size() - 1);
    for (int trial = 0; trial < 2; ++trial) {
      Eigen::Index k = pick(rng);
      double saved = p.data()[k];
      p.data()[k] = saved + h;
      double up = batch_loss(model, batch);
      p.data()[k] = saved - h;
      double down = batch_loss(model, batch);
      p.data()[k] = saved;
      double numeric = (up - down) / (2 * h);
      double analytic = lg.gradients[i].data()[k];
      // Entries whose gradient is tiny compared with the loss are dominated by
      // rounding in the difference quotient.
      double err = std::abs(analytic - numeric) / (std::abs(analytic) + 1e-6);
      worst = std::max(worst, err);
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Training, LossDecreasesAndHistoryIsDeterministic) {
  TrainConfig config;
  config.steps = 150;
  config.batch_size = 8;
  config.learning_rate = 3e-3;
  config.eval_every = 50;
  config.seed = 3;
  std::vector<Graph> topologies{sample_ba_topology(14, 2, 100), sample_ba_topology(16, 3, 101)};
  auto validation = make_validation_set(topologies, 40, config.prior, 77);

  GnnModel init = GnnModel::initialize(small_config(), 1);
  int calls = 0;
  TrainResult first = train(init, config, validation, [&](const MetricRow&) { ++calls; });
  EXPECT_EQ(calls, config.steps);
  ASSERT_EQ(first.history.size(), 150u);
  auto mean_loss = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += first.history[i].loss;
    return s / static_cast<double>(to - from);
  };
  EXPECT_LT(mean_loss(100, 150), mean_loss(0, 50));
  int evaluated = 0;
  for (const MetricRow& r : first.history) {
    if (r.accuracy) {
      ++evaluated;
      EXPECT_GE(*r.accuracy, 0.0);
      EXPECT_LE(*r.accuracy, 1.0);
    }
  }
  EXPECT_EQ(evaluated, 3);

  TrainResult second = train(init, config, validation);
  ASSERT_EQ(second.history.size(), first.history.size());
  for (std::size_t i = 0; i < first.history.size(); ++i) {
    EXPECT_EQ(first.history[i].loss, second.history[i].loss);
    EXPECT_EQ(first.history[i].accuracy, second.history[i].accuracy);
  }
  EXPECT_TRUE(first.model == second.model);

  std::ostringstream a, b;
  write_metrics_csv(a, first.history);
  write_metrics_csv(b, second.history);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, 19), "step,loss,accuracy\n");
}

TEST(EdgeAccuracy, ErrorsAndBounds) {
  GnnModel model = GnnModel::initialize(small_config(), 0);
  EXPECT_THROW(edge_accuracy(model, {}), Error);
  auto samples = make_validation_set({sample_ba_topology(12, 2, 4)}, 10, {}, 1);
  double acc = edge_accuracy(model, samples);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST(Training, RejectsInvalidConfig) {
  TrainConfig config;
  config.learning_rate = 0.0;
  EXPECT_THROW(train(GnnModel::initialize(small_config(), 0), config, {}), Error);
  config = {};
  config.steps = 0;
  EXPECT_THROW(train(GnnModel::initialize(small_config(), 0), config, {}), Error);
}

}  // namespace
}  // namespace rbb
