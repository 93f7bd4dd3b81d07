#pragma once

#include <vector>

#include "rbb/netgraph.hpp"

namespace rbb {

struct ShortestPathTree {
  NodeId source = 0;
  std::vector<double> distance;
  /// Edge entering each node on its chosen shortest path; -1 at the source.
  std::vector<EdgeId> predecessor;
  /// Nodes in the order they were settled, i.e. by (distance, node index).
  std::vector<NodeId> settle_order;
};

/// Dijkstra from `source`. Ties between equal-cost predecessors keep the one
/// whose sender has the lower node index. Unreachable nodes keep infinite
/// distance and predecessor -1.
ShortestPathTree shortest_path_tree(const Graph& g, const WeightVector& w, NodeId source);

/// Edge sequence source -> target read off a tree.
std::vector<EdgeId> tree_path(const Graph& g, const ShortestPathTree& tree, NodeId target);

PathVector path_vector(const Graph& g, const WeightVector& w, NodeId u, NodeId v);

RoutingMatrix routing_matrix(const Graph& g, const WeightVector& w);

/// Exact max link utilization of `d` routed on shortest paths under `w`.
double exact_max_utilization(const Graph& g, const WeightVector& w, const DemandVector& d);

}  // namespace rbb
