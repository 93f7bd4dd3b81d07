#include "rbb/netgraph.hpp"

#include <gtest/gtest.h>

#include <random>

#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"
#include "test_support.hpp"

namespace rbb {
namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected rbb::Error";
  return ErrorCode::kIo;
}

TEST(BuildGraph, UndirectedLinksExpandToTwoEdges) {
  Graph g = build_graph({"tri", 3, {{0, 1, 1.0, false}, {1, 2, 1.0, false}, {0, 2, 1.0, false}}});
  EXPECT_EQ(g.edge_count(), 6);
  for (double c : g.capacities()) EXPECT_EQ(c, 1.0);
  EXPECT_EQ(g.edge(0).sender, 0);
  EXPECT_EQ(g.edge(0).receiver, 1);
  EXPECT_EQ(g.edge(1).sender, 1);
  EXPECT_EQ(g.edge(1).receiver, 0);
  for (int k = 0; k < g.edge_count(); ++k) EXPECT_EQ(g.edge(k).edge_index, k);
}

TEST(BuildGraph, DirectedLinksPassThrough) {
  Graph g = testing::directed_triangle();
  EXPECT_EQ(g.edge_count(), 3);
  // Same links fail the default strong-connectivity requirement.
  EXPECT_EQ(code_of([] { build_graph({"t", 3, {{0, 1, 1, true}, {1, 2, 1, true}, {0, 2, 1, true}}}); }),
            ErrorCode::kNotStronglyConnected);
}

TEST(BuildGraph, RejectsInvalidTopologies) {
  EXPECT_EQ(code_of([] { build_graph({"two", 2, {}}); }), ErrorCode::kNotStronglyConnected);
  EXPECT_EQ(code_of([] { build_graph({"dup", 2, {{0, 1, 1, false}, {0, 1, 2, true}}}); }), ErrorCode::kDuplicateEdge);
  EXPECT_EQ(code_of([] { build_graph({"loop", 2, {{0, 1, 1, false}, {1, 1, 1, false}}}); }), ErrorCode::kSelfLoop);
  EXPECT_EQ(code_of([] { build_graph({"cap", 2, {{0, 1, 0.0, false}}}); }), ErrorCode::kNonPositiveCapacity);
  EXPECT_EQ(code_of([] { build_graph({"node", 2, {{0, 5, 1.0, false}}}); }), ErrorCode::kInvalidNode);
}

TEST(PairOrder, IsLexicographic) {
  Graph g = testing::ring(4);
  int i = 0;
  for (NodeId u = 0; u < 4; ++u)
    for (NodeId v = 0; v < 4; ++v) {
      if (u == v) continue;
      EXPECT_EQ(g.pair_index(u, v), i);
      EXPECT_EQ(g.pair_at(i), std::make_pair(u, v));
      ++i;
    }
  EXPECT_EQ(i, g.pair_count());
}

TEST(DefaultOspfWeights, InverseCapacity) {
  auto caps_graph = [](std::vector<double> caps) {
    GraphSpec spec{"c", static_cast<int>(caps.size()), {}};
    int n = spec.node_count;
    for (int i = 0; i < n; ++i) spec.links.push_back({i, (i + 1) % n, caps[static_cast<std::size_t>(i)], true});
    return build_graph(spec);
  };
  EXPECT_EQ(default_ospf_weights(caps_graph({1, 1, 1})).values, (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(default_ospf_weights(caps_graph({1, 2})).values, (std::vector<double>{2, 1}));
  EXPECT_EQ(default_ospf_weights(caps_graph({4, 2, 1})).values, (std::vector<double>{1, 2, 4}));
}

TEST(DefaultOspfWeights, InvariantToUniformCapacityScaling) {
  std::mt19937_64 rng(7);
  Graph g = testing::random_graph(6, 0.3, rng);
  EXPECT_EQ(default_ospf_weights(g), default_ospf_weights(g.with_scaled_capacity(8.0)));
}

TEST(Utilization, ZeroDemandGivesZero) {
  Graph g = testing::ring(4);
  auto P = routing_matrix(g, default_ospf_weights(g));
  auto rho = utilization(g, P, DemandVector(std::vector<double>(12, 0.0)));
  for (double r : rho.values) EXPECT_EQ(r, 0.0);
}

TEST(Utilization, TriangleExamples) {
  Graph g = testing::closed_triangle();
  WeightVector w({1, 1, 3, 100, 100, 100});
  auto P = routing_matrix(g, w);
  std::vector<double> d(6, 0.0);
  d[static_cast<std::size_t>(g.pair_index(0, 2))] = 0.5;
  auto rho = utilization(g, P, DemandVector(d));
  EXPECT_EQ(rho.values, (std::vector<double>{0.5, 0.5, 0, 0, 0, 0}));
  d[static_cast<std::size_t>(g.pair_index(0, 1))] = 0.3;
  rho = utilization(g, P, DemandVector(d));
  EXPECT_EQ(rho.values, (std::vector<double>{0.8, 0.5, 0, 0, 0, 0}));
}

TEST(Utilization, DimensionMismatch) {
  Graph g = testing::ring(3);
  auto P = routing_matrix(g, default_ospf_weights(g));
  EXPECT_EQ(code_of([&] { utilization(g, P, DemandVector({1.0})); }), ErrorCode::kDimensionMismatch);
}

TEST(MaxUtilization, Examples) {
  EXPECT_EQ(max_utilization(UtilizationVector({0.5, 0.5, 0})), 0.5);
  EXPECT_EQ(max_utilization(UtilizationVector({0, 0, 0})), 0.0);
  EXPECT_EQ(max_utilization(UtilizationVector({0.8, 0.5, 1.2})), 1.2);
  EXPECT_EQ(code_of([] { max_utilization(UtilizationVector()); }), ErrorCode::kEmptyVector);
}

TEST(UtilizationProperty, LinearInDemand) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g = testing::random_graph(5, 0.3, rng);
    auto P = routing_matrix(g, default_ospf_weights(g));
    std::vector<double> d1(static_cast<std::size_t>(g.pair_count())), d2(d1.size()), mix(d1.size());
    double a = u(rng), b = u(rng);
    for (std::size_t i = 0; i < d1.size(); ++i) {
      d1[i] = u(rng);
      d2[i] = u(rng);
      mix[i] = a * d1[i] + b * d2[i];
    }
    auto r1 = utilization(g, P, DemandVector(d1));
    auto r2 = utilization(g, P, DemandVector(d2));
    auto rm = utilization(g, P, DemandVector(mix));
    for (std::size_t k = 0; k < rm.size(); ++k) EXPECT_NEAR(rm[k], a * r1[k] + b * r2[k], 1e-12);
  }
}

TEST(UtilizationProperty, CapacityScalingDividesUtilization) {
  std::mt19937_64 rng(12);
  Graph g = testing::random_graph(6, 0.4, rng);
  Graph scaled = g.with_scaled_capacity(4.0);
  auto P = routing_matrix(g, default_ospf_weights(g));
  std::vector<double> d(static_cast<std::size_t>(g.pair_count()), 1.25);
  auto base = utilization(g, P, DemandVector(d));
  auto after = utilization(scaled, P, DemandVector(d));
  for (std::size_t k = 0; k < base.size(); ++k) EXPECT_DOUBLE_EQ(after[k], base[k] / 4.0);
}

TEST(UtilizationProperty, MatchesPerDemandWalk) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng() % 5);
    Graph g = testing::random_graph(n, 0.35, rng);
    std::vector<double> w(static_cast<std::size_t>(g.edge_count()));
    for (double& x : w) x = 0.1 + u(rng);
    auto P = routing_matrix(g, WeightVector(w));
    std::vector<std::vector<EdgeId>> paths;
    for (int i = 0; i < P.row_count(); ++i) paths.emplace_back(P.path(i).begin(), P.path(i).end());
    std::vector<double> d(static_cast<std::size_t>(g.pair_count()));
    for (double& x : d) x = u(rng);
    EXPECT_EQ(utilization(g, P, DemandVector(d)).values, testing::per_demand_utilization(g, paths, d));
  }
}

TEST(PathValidation, DetectsNonPaths) {
  Graph g = testing::ring(4);  // edges 0:0->1 1:1->0 2:1->2 3:2->1 4:2->3 5:3->2 6:3->0 7:0->3
  PathVector p{{1, 0, 1, 0, 0, 0, 0, 0}};
  EXPECT_TRUE(is_simple_path(g, p, 0, 2));
  EXPECT_FALSE(is_simple_path(g, p, 0, 3));
  PathVector extra{{1, 0, 1, 0, 0, 0, 0, 1}};
  EXPECT_FALSE(is_simple_path(g, extra, 0, 2));
}

}  // namespace
}  // namespace rbb
