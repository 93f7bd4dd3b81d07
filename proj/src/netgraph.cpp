#include "rbb/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "rbb/errors.hpp"

namespace rbb {

namespace {

// Nodes reachable from node 0 following edges forward (or backward).
std::vector<bool> reach_from_zero(const Graph& g, bool forward) {
  std::vector<bool> seen(static_cast<std::size_t>(g.node_count()), false);
  std::vector<NodeId> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    NodeId n = stack.back();
    stack.pop_back();
    for (EdgeId k : forward ? g.out_edges(n) : g.in_edges(n)) {
      const EdgeTriple& e = g.edge(k);
      NodeId next = forward ? e.receiver : e.sender;
      if (!seen[static_cast<std::size_t>(next)]) {
        seen[static_cast<std::size_t>(next)] = true;
        stack.push_back(next);
      }
    }
  }
  return seen;
}

void build_csr(int nodes, const std::vector<EdgeTriple>& edges, bool by_sender,
               std::vector<int>& offsets, std::vector<EdgeId>& list) {
  offsets.assign(static_cast<std::size_t>(nodes) + 1, 0);
  for (const auto& e : edges) ++offsets[static_cast<std::size_t>(by_sender ? e.sender : e.receiver) + 1];
  for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
  list.assign(edges.size(), 0);
  std::vector<int> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& e : edges) {
    NodeId key = by_sender ? e.sender : e.receiver;
    list[static_cast<std::size_t>(cursor[static_cast<std::size_t>(key)]++)] = e.edge_index;
  }
}

}  // namespace

std::span<const EdgeId> Graph::out_edges(NodeId node) const {
  auto b = static_cast<std::size_t>(out_offsets_.at(static_cast<std::size_t>(node)));
  auto e = static_cast<std::size_t>(out_offsets_.at(static_cast<std::size_t>(node) + 1));
  return std::span<const EdgeId>(out_list_).subspan(b, e - b);
}

std::span<const EdgeId> Graph::in_edges(NodeId node) const {
  auto b = static_cast<std::size_t>(in_offsets_.at(static_cast<std::size_t>(node)));
  auto e = static_cast<std::size_t>(in_offsets_.at(static_cast<std::size_t>(node) + 1));
  return std::span<const EdgeId>(in_list_).subspan(b, e - b);
}

int Graph::pair_index(NodeId u, NodeId v) const {
  if (u < 0 || v < 0 || u >= node_count_ || v >= node_count_) {
    throw Error(ErrorCode::kInvalidNode, "pair (" + std::to_string(u) + ", " + std::to_string(v) + ")");
  }
  if (u == v) throw Error(ErrorCode::kSameEndpoints, "pair (" + std::to_string(u) + ", " + std::to_string(v) + ")");
  return u * (node_count_ - 1) + (v < u ? v : v - 1);
}

std::pair<NodeId, NodeId> Graph::pair_at(int index) const {
  if (index < 0 || index >= pair_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "pair index " + std::to_string(index));
  }
  NodeId u = index / (node_count_ - 1);
  NodeId v = index % (node_count_ - 1);
  if (v >= u) ++v;
  return {u, v};
}

Graph Graph::with_uniform_capacity(double capacity) const {
  if (!(capacity > 0.0) || !std::isfinite(capacity)) {
    throw Error(ErrorCode::kNonPositiveCapacity, "uniform capacity " + std::to_string(capacity));
  }
  Graph copy = *this;
  std::fill(copy.capacities_.begin(), copy.capacities_.end(), capacity);
  return copy;
}

Graph Graph::with_scaled_capacity(double factor) const {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw Error(ErrorCode::kNonPositiveCapacity, "capacity factor " + std::to_string(factor));
  }
  Graph copy = *this;
  for (double& c : copy.capacities_) c *= factor;
  return copy;
}

void Graph::index_adjacency() {
  build_csr(node_count_, edges_, true, out_offsets_, out_list_);
  build_csr(node_count_, edges_, false, in_offsets_, in_list_);
}

Graph build_graph(const GraphSpec& spec, const BuildOptions& options) {
  if (spec.node_count < 1) {
    throw Error(ErrorCode::kInvalidParameters, "node count must be positive");
  }
  Graph g;
  g.name_ = spec.name;
  g.node_count_ = spec.node_count;

  std::set<std::pair<NodeId, NodeId>> seen;  // (sender, receiver)
  auto add = [&](NodeId sender, NodeId receiver, double capacity) {
    if (seen.count({sender, receiver}) != 0) {
      throw Error(ErrorCode::kDuplicateEdge,
                  "edge " + std::to_string(sender) + "->" + std::to_string(receiver) + " appears twice");
    }
    seen.insert({sender, receiver});
    auto k = static_cast<EdgeId>(g.edges_.size());
    g.edges_.push_back(EdgeTriple{k, receiver, sender});
    g.capacities_.push_back(capacity);
  };

  for (const LinkSpec& link : spec.links) {
    for (NodeId n : {link.from, link.to}) {
      if (n < 0 || n >= spec.node_count) {
        throw Error(ErrorCode::kInvalidNode, "link endpoint " + std::to_string(n) + " outside [0, " +
                                                 std::to_string(spec.node_count) + ")");
      }
    }
    if (link.from == link.to) {
      throw Error(ErrorCode::kSelfLoop, "link on node " + std::to_string(link.from));
    }
    if (!(link.capacity > 0.0) || !std::isfinite(link.capacity)) {
      throw Error(ErrorCode::kNonPositiveCapacity, "link " + std::to_string(link.from) + "-" +
                                                       std::to_string(link.to) + " capacity " +
                                                       std::to_string(link.capacity));
    }
    add(link.from, link.to, link.capacity);
    if (!link.directed) add(link.to, link.from, link.capacity);
  }

  g.index_adjacency();
  if (options.require_strongly_connected && g.node_count_ > 1) {
    auto fwd = reach_from_zero(g, true);
    auto bwd = reach_from_zero(g, false);
    bool all = std::all_of(fwd.begin(), fwd.end(), [](bool b) { return b; }) &&
               std::all_of(bwd.begin(), bwd.end(), [](bool b) { return b; });
    if (!all) throw Error(ErrorCode::kNotStronglyConnected, "graph '" + spec.name + "'");
  }
  return g;
}

void validate_weights(const Graph& g, const WeightVector& w) {
  if (w.size() != static_cast<std::size_t>(g.edge_count())) {
    throw Error(ErrorCode::kDimensionMismatch, "weights have " + std::to_string(w.size()) +
                                                   " entries, graph has " + std::to_string(g.edge_count()) +
                                                   " edges");
  }
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!std::isfinite(w[k]) || w[k] < kMinWeight) {
      throw Error(ErrorCode::kInvalidParameters,
                  "weight " + std::to_string(k) + " = " + std::to_string(w[k]) + " below floor");
    }
  }
}

void validate_demands(const Graph& g, const DemandVector& d) {
  if (d.size() != static_cast<std::size_t>(g.pair_count())) {
    throw Error(ErrorCode::kDimensionMismatch, "demands have " + std::to_string(d.size()) +
                                                   " entries, graph has " + std::to_string(g.pair_count()) +
                                                   " pairs");
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i]) || d[i] < 0.0) {
      throw Error(ErrorCode::kInvalidParameters, "demand " + std::to_string(i) + " is negative or non-finite");
    }
  }
}

std::vector<EdgeId> PathVector::edge_list() const {
  std::vector<EdgeId> out;
  for (std::size_t k = 0; k < membership.size(); ++k) {
    if (membership[k] != 0) out.push_back(static_cast<EdgeId>(k));
  }
  return out;
}

bool is_simple_path(const Graph& g, const PathVector& p, NodeId u, NodeId v) {
  if (p.membership.size() != static_cast<std::size_t>(g.edge_count()) || u == v) return false;
  std::size_t marked = 0;
  for (auto m : p.membership) {
    if (m > 1) return false;
    marked += m;
  }
  // Walk from u along the unique marked outgoing edge until v.
  std::vector<bool> visited(static_cast<std::size_t>(g.node_count()), false);
  NodeId at = u;
  std::size_t walked = 0;
  visited[static_cast<std::size_t>(u)] = true;
  while (at != v) {
    EdgeId next = -1;
    for (EdgeId k : g.out_edges(at)) {
      if (p.membership[static_cast<std::size_t>(k)] != 0) {
        if (next != -1) return false;
        next = k;
      }
    }
    if (next == -1) return false;
    at = g.edge(next).receiver;
    if (visited[static_cast<std::size_t>(at)]) return false;
    visited[static_cast<std::size_t>(at)] = true;
    ++walked;
  }
  return walked == marked;
}

PathVector RoutingMatrix::row(int index) const {
  PathVector p;
  p.membership.assign(static_cast<std::size_t>(edge_count_), 0);
  for (EdgeId k : path(index)) p.membership[static_cast<std::size_t>(k)] = 1;
  return p;
}

WeightVector default_ospf_weights(const Graph& g) {
  auto caps = g.capacities();
  double ref = *std::max_element(caps.begin(), caps.end());
  std::vector<double> w(caps.size());
  for (std::size_t k = 0; k < caps.size(); ++k) w[k] = ref / caps[k];
  return WeightVector(std::move(w));
}

UtilizationVector utilization(const Graph& g, const RoutingMatrix& routing, const DemandVector& d) {
  if (routing.row_count() != g.pair_count() || routing.edge_count() != g.edge_count() ||
      d.size() != static_cast<std::size_t>(g.pair_count())) {
    throw Error(ErrorCode::kDimensionMismatch, "routing matrix, demands and graph disagree");
  }
  std::vector<double> load(static_cast<std::size_t>(g.edge_count()), 0.0);
  for (int i = 0; i < routing.row_count(); ++i) {
    double di = d[static_cast<std::size_t>(i)];
    for (EdgeId k : routing.path(i)) load[static_cast<std::size_t>(k)] += di;
  }
  auto caps = g.capacities();
  for (std::size_t k = 0; k < load.size(); ++k) load[k] /= caps[k];
  return UtilizationVector(std::move(load));
}

double max_utilization(const UtilizationVector& rho) {
  if (rho.values.empty()) throw Error(ErrorCode::kEmptyVector, "utilization vector is empty");
  return *std::max_element(rho.values.begin(), rho.values.end());
}

}  // namespace rbb
