#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rbb {

using NodeId = std::int32_t;
using EdgeId = std::int32_t;

/// Lower bound on every link weight; keeps gradient updates strictly positive.
inline constexpr double kMinWeight = 1e-3;

struct EdgeTriple {
  EdgeId edge_index = 0;
  NodeId receiver = 0;
  NodeId sender = 0;
};

/// One link of a topology description. For directed links traffic flows from
/// `from` to `to`; undirected links expand into both directions.
struct LinkSpec {
  NodeId from = 0;
  NodeId to = 0;
  double capacity = 1.0;
  bool directed = false;
};

struct GraphSpec {
  std::string name;
  int node_count = 0;
  std::vector<LinkSpec> links;
};

struct BuildOptions {
  /// Partial topologies (e.g. hand-built fixtures) may skip the check; routing
  /// then fails with Unreachable for pairs without a path.
  bool require_strongly_connected = true;
};

/// Directed, strongly connected network with per-edge capacities.
/// Immutable after construction.
class Graph {
 public:
  Graph() = default;

  int node_count() const noexcept { return node_count_; }
  int edge_count() const noexcept { return static_cast<int>(edges_.size()); }
  /// Number of ordered (u, v) pairs with u != v.
  int pair_count() const noexcept { return node_count_ * (node_count_ - 1); }
  const std::string& name() const noexcept { return name_; }

  std::span<const EdgeTriple> edges() const noexcept { return edges_; }
  const EdgeTriple& edge(EdgeId k) const { return edges_.at(static_cast<std::size_t>(k)); }
  std::span<const double> capacities() const noexcept { return capacities_; }

  /// Edges whose sender is `node`, ascending by edge index.
  std::span<const EdgeId> out_edges(NodeId node) const;
  /// Edges whose receiver is `node`, ascending by edge index.
  std::span<const EdgeId> in_edges(NodeId node) const;

  /// Position of (u, v) in the lexicographic pair order.
  int pair_index(NodeId u, NodeId v) const;
  std::pair<NodeId, NodeId> pair_at(int index) const;

  /// Same topology with every capacity replaced by `capacity`.
  Graph with_uniform_capacity(double capacity) const;
  /// Same topology with every capacity multiplied by `factor`.
  Graph with_scaled_capacity(double factor) const;

 private:
  friend Graph build_graph(const GraphSpec& spec, const BuildOptions& options);
  void index_adjacency();

  std::string name_;
  int node_count_ = 0;
  std::vector<EdgeTriple> edges_;
  std::vector<double> capacities_;
  std::vector<int> out_offsets_, in_offsets_;
  std::vector<EdgeId> out_list_, in_list_;
};

/// Validates `spec` and expands undirected links into two directed edges
/// (from->to first). Throws rbb::Error on any invariant violation.
Graph build_graph(const GraphSpec& spec, const BuildOptions& options = {});

/// Real-valued per-edge or per-pair vector tagged by meaning.
template <class Tag>
struct RealVector {
  std::vector<double> values;

  RealVector() = default;
  explicit RealVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool operator==(const RealVector&) const = default;
};

struct WeightTag {};
struct DemandTag {};
struct UtilizationTag {};

using WeightVector = RealVector<WeightTag>;
using DemandVector = RealVector<DemandTag>;
using UtilizationVector = RealVector<UtilizationTag>;

/// Throws unless `w` has one entry per edge and every entry is finite and >= kMinWeight.
void validate_weights(const Graph& g, const WeightVector& w);
/// Throws unless `d` has one entry per ordered pair and every entry is finite and >= 0.
void validate_demands(const Graph& g, const DemandVector& d);

/// Binary edge-membership vector of one routed path.
struct PathVector {
  std::vector<std::uint8_t> membership;

  std::vector<EdgeId> edge_list() const;
  bool operator==(const PathVector&) const = default;
};

/// True when the marked edges form exactly one simple directed path u -> v.
bool is_simple_path(const Graph& g, const PathVector& p, NodeId u, NodeId v);

/// All-pairs routing: row i holds the path of pair_at(i), stored as the ordered
/// edge sequence from source to destination (flat row storage).
class RoutingMatrix {
 public:
  RoutingMatrix() = default;
  RoutingMatrix(int edge_count, std::vector<int> offsets, std::vector<EdgeId> edges)
      : edge_count_(edge_count), offsets_(std::move(offsets)), edges_(std::move(edges)) {}

  int row_count() const noexcept { return offsets_.empty() ? 0 : static_cast<int>(offsets_.size()) - 1; }
  int edge_count() const noexcept { return edge_count_; }
  std::span<const EdgeId> path(int row) const {
    auto b = static_cast<std::size_t>(offsets_.at(static_cast<std::size_t>(row)));
    auto e = static_cast<std::size_t>(offsets_.at(static_cast<std::size_t>(row) + 1));
    return std::span<const EdgeId>(edges_).subspan(b, e - b);
  }
  PathVector row(int index) const;
  bool operator==(const RoutingMatrix&) const = default;

 private:
  int edge_count_ = 0;
  std::vector<int> offsets_;
  std::vector<EdgeId> edges_;
};

/// Weights inversely proportional to capacity, normalized so the largest
/// capacity gets weight 1.
WeightVector default_ospf_weights(const Graph& g);

/// Per-edge load divided by capacity for demands routed along `routing`.
UtilizationVector utilization(const Graph& g, const RoutingMatrix& routing, const DemandVector& d);

double max_utilization(const UtilizationVector& rho);

}  // namespace rbb
