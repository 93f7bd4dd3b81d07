#include "rbb/localsearch.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <sstream>

#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"
#include "test_support.hpp"

namespace rbb {
namespace {

DemandVector random_demands(const Graph& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> d(static_cast<std::size_t>(g.pair_count()));
  for (double& x : d) x = u(rng);
  return DemandVector(std::move(d));
}

/// Four nodes on a bidirectional ring plus one bidirectional chord.
Graph small_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cap(0.5, 2.0);
  GraphSpec spec{"four", 4, {}};
  for (int i = 0; i < 4; ++i) spec.links.push_back({i, (i + 1) % 4, cap(rng), false});
  spec.links.push_back({0, 2, cap(rng), false});
  return build_graph(spec);
}

double exhaustive_optimum(const Graph& g, const DemandVector& d, int w_max) {
  const int n_e = g.edge_count();
  std::vector<double> w(static_cast<std::size_t>(n_e), 1.0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    best = std::min(best, exact_max_utilization(g, WeightVector(w), d));
    int k = 0;
    while (k < n_e && w[static_cast<std::size_t>(k)] == w_max) w[static_cast<std::size_t>(k++)] = 1.0;
    if (k == n_e) break;
    w[static_cast<std::size_t>(k)] += 1.0;
  }
  return best;
}

SearchConfig counted(long evaluations, std::uint64_t seed = 0) {
  SearchConfig c;
  c.mode = BudgetMode::kEvaluations;
  c.budget_evaluations = evaluations;
  c.seed = seed;
  return c;
}

TEST(QuantizeWeights, KeepsIntegersAndScalesReals) {
  EXPECT_EQ(quantize_weights(WeightVector({1, 5, 64}), 64), WeightVector({1, 5, 64}));
  EXPECT_EQ(quantize_weights(WeightVector({0.5, 1.0, 2.0}), 64), WeightVector({16, 32, 64}));
  EXPECT_EQ(quantize_weights(WeightVector({0.001, 2.0}), 64), WeightVector({1, 64}));
  EXPECT_EQ(quantize_weights(WeightVector({1, 70}), 64), WeightVector({1, 64}));
  EXPECT_THROW(quantize_weights(WeightVector({1.0}), 1), Error);
}

TEST(LocalSearch, FindsExhaustiveOptimumOnSmallInstances) {
  for (int seed = 0; seed < 8; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    Graph g = small_instance(rng);
    DemandVector d = random_demands(g, rng);
    double optimum = exhaustive_optimum(g, d, 3);
    SearchConfig config = counted(20000, static_cast<std::uint64_t>(seed));
    config.w_max = 3;
    SearchResult r = local_search(g, d, WeightVector(std::vector<double>(10, 1.0)), config);
    EXPECT_DOUBLE_EQ(r.max_util, optimum) << "seed " << seed;
    EXPECT_EQ(r.max_util, exact_max_utilization(g, r.weights, d));
  }
}

TEST(LocalSearch, ZeroBudgetReturnsInitialization) {
  std::mt19937_64 rng(3);
  Graph g = testing::random_graph(7, 0.3, rng);
  DemandVector d = random_demands(g, rng);
  WeightVector init = default_ospf_weights(g);
  for (SearchConfig config : {counted(0), SearchConfig{}}) {
    config.budget_ms = 0.0;
    SearchResult r = local_search(g, d, init, config);
    double init_util = exact_max_utilization(g, init, d);
    EXPECT_LE(r.max_util, init_util);
    WeightVector q = quantize_weights(init, config.w_max);
    EXPECT_TRUE(r.weights == init || r.weights == q);
    EXPECT_EQ(r.evaluations, 2);
  }
}

TEST(LocalSearch, NeverWorseThanInitAndTraceMonotone) {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(40 + seed));
    Graph g = testing::random_graph(8, 0.3, rng);
    DemandVector d = random_demands(g, rng);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    std::vector<double> w(static_cast<std::size_t>(g.edge_count()));
    for (double& x : w) x = u(rng);
    WeightVector init(w);
    SearchResult r = local_search(g, d, init, counted(500, static_cast<std::uint64_t>(seed)));
    EXPECT_LE(r.max_util, exact_max_utilization(g, init, d));
    EXPECT_EQ(r.max_util, exact_max_utilization(g, r.weights, d));
    ASSERT_FALSE(r.trace.empty());
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
      EXPECT_LT(r.trace[i].objective, r.trace[i - 1].objective);
      EXPECT_GE(r.trace[i].time_ms, r.trace[i - 1].time_ms);
    }
    EXPECT_EQ(r.trace.back().objective, r.max_util);
    EXPECT_GE(r.evaluations, 502);
  }
}

TEST(LocalSearch, LargerBudgetNeverWorse) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(70 + seed));
    Graph g = testing::random_graph(8, 0.25, rng);
    DemandVector d = random_demands(g, rng);
    WeightVector init = default_ospf_weights(g);
    SearchResult a = local_search(g, d, init, counted(200, static_cast<std::uint64_t>(seed)));
    SearchResult b = local_search(g, d, init, counted(400, static_cast<std::uint64_t>(seed)));
    EXPECT_LE(b.max_util, a.max_util);
  }
}

TEST(LocalSearch, DeterministicInEvaluationMode) {
  std::mt19937_64 rng(5);
  Graph g = testing::random_graph(9, 0.3, rng);
  DemandVector d = random_demands(g, rng);
  WeightVector init = default_ospf_weights(g);
  SearchResult a = local_search(g, d, init, counted(300, 9));
  SearchResult b = local_search(g, d, init, counted(300, 9));
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.max_util, b.max_util);
  EXPECT_EQ(a.evaluations, b.evaluations);
}

TEST(LocalSearch, WallClockBudgetIsRespected) {
  std::mt19937_64 rng(6);
  Graph g = testing::random_graph(10, 0.3, rng);
  DemandVector d = random_demands(g, rng);
  SearchConfig config;
  config.budget_ms = 50.0;
  auto start = std::chrono::steady_clock::now();
  SearchResult r = local_search(g, d, default_ospf_weights(g), config);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(ms, 250.0);
  EXPECT_GT(r.evaluations, 2);
}

TEST(LocalSearch, RejectsBadConfig) {
  std::mt19937_64 rng(6);
  Graph g = testing::random_graph(4, 0.3, rng);
  DemandVector d = random_demands(g, rng);
  SearchConfig config;
  config.w_max = 1;
  EXPECT_THROW(local_search(g, d, default_ospf_weights(g), config), Error);
}

TEST(SearchTraceCsv, Format) {
  SearchResult r;
  r.trace = {{0.0, 1.5}, {2.5, 1.25}};
  std::ostringstream out;
  write_search_trace_csv(out, r);
  EXPECT_EQ(out.str(), "time_ms,objective\n0,1.5\n2.5,1.25\n");
}

}  // namespace
}  // namespace rbb
