#include "rbb/exact_routing.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <string>

#include "rbb/errors.hpp"

namespace rbb {

ShortestPathTree shortest_path_tree(const Graph& g, const WeightVector& w, NodeId source) {
  const int n = g.node_count();
  if (source < 0 || source >= n) throw Error(ErrorCode::kInvalidNode, "source " + std::to_string(source));
  if (w.size() != static_cast<std::size_t>(g.edge_count())) {
    throw Error(ErrorCode::kDimensionMismatch, "weight vector length " + std::to_string(w.size()));
  }

  ShortestPathTree tree;
  tree.source = source;
  tree.distance.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  tree.predecessor.assign(static_cast<std::size_t>(n), -1);
  tree.settle_order.reserve(static_cast<std::size_t>(n));
  std::vector<bool> settled(static_cast<std::size_t>(n), false);

  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  tree.distance[static_cast<std::size_t>(source)] = 0.0;
  queue.emplace(0.0, source);

  while (!queue.empty()) {
    auto [dist, at] = queue.top();
    queue.pop();
    auto ai = static_cast<std::size_t>(at);
    if (settled[ai] || dist > tree.distance[ai]) continue;
    settled[ai] = true;
    tree.settle_order.push_back(at);
    for (EdgeId k : g.out_edges(at)) {
      NodeId next = g.edge(k).receiver;
      auto ni = static_cast<std::size_t>(next);
      if (settled[ni]) continue;
      double cand = dist + w[static_cast<std::size_t>(k)];
      if (cand < tree.distance[ni]) {
        tree.distance[ni] = cand;
        tree.predecessor[ni] = k;
        queue.emplace(cand, next);
      } else if (cand == tree.distance[ni] && at < g.edge(tree.predecessor[ni]).sender) {
        tree.predecessor[ni] = k;
      }
    }
  }

  return tree;
}

std::vector<EdgeId> tree_path(const Graph& g, const ShortestPathTree& tree, NodeId target) {
  std::vector<EdgeId> path;
  NodeId at = target;
  while (at != tree.source) {
    EdgeId k = tree.predecessor[static_cast<std::size_t>(at)];
    if (k < 0) throw Error(ErrorCode::kUnreachable, "node " + std::to_string(target));
    path.push_back(k);
    at = g.edge(k).sender;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

PathVector path_vector(const Graph& g, const WeightVector& w, NodeId u, NodeId v) {
  if (u == v) throw Error(ErrorCode::kSameEndpoints, "u = v = " + std::to_string(u));
  if (v < 0 || v >= g.node_count()) throw Error(ErrorCode::kInvalidNode, "target " + std::to_string(v));
  auto tree = shortest_path_tree(g, w, u);
  PathVector p;
  p.membership.assign(static_cast<std::size_t>(g.edge_count()), 0);
  for (EdgeId k : tree_path(g, tree, v)) p.membership[static_cast<std::size_t>(k)] = 1;
  return p;
}

RoutingMatrix routing_matrix(const Graph& g, const WeightVector& w) {
  const int n = g.node_count();
  std::vector<int> offsets{0};
  offsets.reserve(static_cast<std::size_t>(g.pair_count()) + 1);
  std::vector<EdgeId> edges;
  std::vector<EdgeId> scratch;
  for (NodeId u = 0; u < n; ++u) {
    auto tree = shortest_path_tree(g, w, u);
    for (NodeId v = 0; v < n; ++v) {
      if (v == u) continue;
      scratch.clear();
      for (NodeId at = v; at != u;) {
        EdgeId k = tree.predecessor[static_cast<std::size_t>(at)];
        if (k < 0) throw Error(ErrorCode::kUnreachable, "no path " + std::to_string(u) + " -> " + std::to_string(v));
        scratch.push_back(k);
        at = g.edge(k).sender;
      }
      edges.insert(edges.end(), scratch.rbegin(), scratch.rend());
      offsets.push_back(static_cast<int>(edges.size()));
    }
  }
  return RoutingMatrix(g.edge_count(), std::move(offsets), std::move(edges));
}

double exact_max_utilization(const Graph& g, const WeightVector& w, const DemandVector& d) {
  return max_utilization(utilization(g, routing_matrix(g, w), d));
}

}  // namespace rbb
