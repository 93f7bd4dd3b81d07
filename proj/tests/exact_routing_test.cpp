#include "rbb/exact_routing.hpp"

#include <gtest/gtest.h>

#include <random>

#include "rbb/errors.hpp"
#include "test_support.hpp"

namespace rbb {
namespace {

TEST(ShortestPathTree, TriangleGoesThroughMiddleNode) {
  Graph g = testing::directed_triangle();
  WeightVector w({1, 1, 3});
  auto tree = shortest_path_tree(g, w, 0);
  EXPECT_EQ(tree.distance[0], 0.0);
  EXPECT_EQ(tree.distance[2], 2.0);
  EXPECT_EQ(tree.predecessor[2], 1);
  EXPECT_EQ(g.edge(tree.predecessor[2]).sender, 1);
}

TEST(ShortestPathTree, TwoNodes) {
  Graph g = build_graph({"pair", 2, {{0, 1, 1.0, true}}}, {.require_strongly_connected = false});
  auto tree = shortest_path_tree(g, WeightVector({5.0}), 0);
  EXPECT_EQ(tree.distance[1], 5.0);
  EXPECT_EQ(tree.predecessor[1], 0);
  EXPECT_EQ(path_vector(g, WeightVector({5.0}), 0, 1).membership, (std::vector<std::uint8_t>{1}));
}

TEST(ShortestPathTree, SourceDistanceIsZero) {
  std::mt19937_64 rng(3);
  Graph g = testing::random_graph(6, 0.3, rng);
  auto w = default_ospf_weights(g);
  for (NodeId u = 0; u < g.node_count(); ++u) EXPECT_EQ(shortest_path_tree(g, w, u).distance[static_cast<std::size_t>(u)], 0.0);
}

TEST(PathVector, TriangleAndErrors) {
  Graph g = testing::directed_triangle();
  WeightVector w({1, 1, 3});
  EXPECT_EQ(path_vector(g, w, 0, 2).membership, (std::vector<std::uint8_t>{1, 1, 0}));
  try {
    path_vector(g, w, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSameEndpoints);
  }
  try {
    path_vector(g, w, 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnreachable);
  }
}

TEST(PathVector, RingTieBreakPrefersLowerSender) {
  // 0->1->2 (via sender 1) and 0->3->2 (via sender 3) both cost 2.
  Graph g = testing::ring(4);
  WeightVector w(std::vector<double>(8, 1.0));
  auto p = path_vector(g, w, 0, 2);
  EXPECT_TRUE(is_simple_path(g, p, 0, 2));
  EXPECT_EQ(p.edge_list(), (std::vector<EdgeId>{0, 2}));
  EXPECT_EQ(path_vector(g, w, 0, 2), p);
  // From 2 to 0: via 1 (edge 1) or via 3 (edge 6); sender 1 < 3.
  EXPECT_EQ(path_vector(g, w, 2, 0).edge_list(), (std::vector<EdgeId>{1, 3}));
}

TEST(RoutingMatrix, RowsFollowPairOrder) {
  Graph g = testing::closed_triangle();
  WeightVector w({1, 1, 3, 100, 100, 100});
  auto P = routing_matrix(g, w);
  EXPECT_EQ(P.row_count(), 6);
  EXPECT_EQ(P.row(g.pair_index(0, 2)).membership, (std::vector<std::uint8_t>{1, 1, 0, 0, 0, 0}));
  EXPECT_EQ(P.row(g.pair_index(0, 1)).membership, (std::vector<std::uint8_t>{1, 0, 0, 0, 0, 0}));
}

TEST(RoutingMatrix, StarRoutesThroughHub) {
  GraphSpec spec{"star", 5, {}};
  for (int leaf = 1; leaf < 5; ++leaf) spec.links.push_back({0, leaf, 1.0, false});
  Graph g = build_graph(spec);
  auto P = routing_matrix(g, default_ospf_weights(g));
  EXPECT_EQ(P.row_count(), 20);
  for (int i = 0; i < P.row_count(); ++i) {
    auto [u, v] = g.pair_at(i);
    if (u != 0 && v != 0) {
      ASSERT_EQ(P.path(i).size(), 2u);
      EXPECT_EQ(g.edge(P.path(i)[0]).receiver, 0);
    }
  }
}

TEST(RoutingProperty, OptimalAgainstBruteForce) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int trial = 0; trial < 60; ++trial) {
    int n = 2 + static_cast<int>(rng() % 5);
    Graph g = testing::random_graph(n, 0.4, rng);
    std::vector<double> w(static_cast<std::size_t>(g.edge_count()));
    for (double& x : w) x = u(rng);
    WeightVector wv(w);
    auto P = routing_matrix(g, wv);
    for (int i = 0; i < P.row_count(); ++i) {
      auto [a, b] = g.pair_at(i);
      auto row = P.row(i);
      ASSERT_TRUE(is_simple_path(g, row, a, b));
      std::vector<EdgeId> path(P.path(i).begin(), P.path(i).end());
      EXPECT_LE(testing::path_cost(path, wv), testing::brute_force_distance(g, wv, a, b) + 1e-12);
      EXPECT_EQ(testing::path_cost(path, wv), shortest_path_tree(g, wv, a).distance[static_cast<std::size_t>(b)]);
    }
  }
}

TEST(RoutingProperty, ScaleInvariant) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    Graph g = testing::random_graph(6, 0.3, rng);
    // Small integers produce many ties; power-of-two scaling keeps sums exact.
    std::vector<double> w(static_cast<std::size_t>(g.edge_count())), w4(w.size()), w3(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] = static_cast<double>(1 + rng() % 3);
      w4[k] = 4.0 * w[k];
      w3[k] = 3.0 * w[k];
    }
    auto base = routing_matrix(g, WeightVector(w));
    EXPECT_EQ(routing_matrix(g, WeightVector(w4)), base);
    EXPECT_EQ(routing_matrix(g, WeightVector(w3)), base);
  }
}

TEST(RoutingProperty, SubpathPrefix) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    Graph g = testing::random_graph(6, 0.35, rng);
    std::vector<double> w(static_cast<std::size_t>(g.edge_count()));
    for (double& x : w) x = static_cast<double>(1 + rng() % 3);
    auto P = routing_matrix(g, WeightVector(w));
    for (int i = 0; i < P.row_count(); ++i) {
      auto [u, v] = g.pair_at(i);
      auto path = P.path(i);
      for (std::size_t j = 0; j + 1 < path.size(); ++j) {
        NodeId m = g.edge(path[j]).receiver;
        auto prefix = P.path(g.pair_index(u, m));
        ASSERT_EQ(prefix.size(), j + 1);
        EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), path.begin()));
      }
      (void)v;
    }
  }
}

}  // namespace
}  // namespace rbb
