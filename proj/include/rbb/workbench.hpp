#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rbb/gnn.hpp"
#include "rbb/localsearch.hpp"
#include "rbb/netgraph.hpp"
#include "rbb/optimizer.hpp"

namespace rbb {

// --- topologies --------------------------------------------------------------

struct TopologyNode {
  int id = 0;
  std::string label;
  bool operator==(const TopologyNode&) const = default;
};

struct TopologyLink {
  int from = 0;  // node ids, not positions
  int to = 0;
  double capacity = 1.0;
  bool directed = false;
  std::optional<double> weight;
  bool operator==(const TopologyLink&) const = default;
};

struct TopologySpec {
  std::string name;
  std::vector<TopologyNode> nodes;
  std::vector<TopologyLink> links;
  bool operator==(const TopologySpec&) const = default;
};

/// {"name": ..., "nodes": [{"id", "label"?}], "links": [{"from", "to",
/// "capacity"?, "directed"?, "weight"?}]}. Capacity defaults to 1 and
/// directed to false.
TopologySpec parse_topology_json(const std::string& document);
std::string serialize_topology_json(const TopologySpec& spec);

/// NODES and LINKS sections of the SNDlib native format. A link's capacity is
/// its first module capacity, or its pre-installed capacity when it has no
/// modules. META, DEMANDS and ADMISSIBLE_PATHS are skipped.
TopologySpec parse_sndlib_native(const std::string& text);

/// Reads a topology file: JSON when the first non-blank character is '{',
/// SNDlib native otherwise.
TopologySpec load_topology(const std::string& path);

/// Graph with nodes numbered in spec order. A positive `uniform_capacity`
/// replaces every link capacity.
Graph to_graph(const TopologySpec& spec, double uniform_capacity = 0.0);

/// Per-edge preset weights in to_graph's edge order, when every link has one.
std::optional<WeightVector> preset_weights(const TopologySpec& spec);

// --- traffic -----------------------------------------------------------------

/// Each ordered pair's demand is uniform on (0, n-1) times `scale`.
DemandVector generate_traffic_matrix(const Graph& g, std::uint64_t seed, double scale = 1.0);

struct CalibrationConfig {
  int samples = 500;
  double quantile = 0.5;
  double target = 1.1;
  std::uint64_t seed = 0;
};

/// Scale factor for which the `quantile` of per-sample max utilization under
/// default OSPF weights equals `target`, found by bisection.
double calibrate_scaling(const Graph& g, const CalibrationConfig& config);

/// Linear-interpolation quantile of unsorted values.
double quantile(std::vector<double> values, double q);

/// Columns src,dst,demand_mbps with node positions; one row per ordered pair.
void write_traffic_csv(std::ostream& out, const Graph& g, const DemandVector& d);
DemandVector read_traffic_csv(std::istream& in, const Graph& g);

/// Independent stream seed for (base, a, b).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// --- experiments -------------------------------------------------------------

enum class Method { kDefaultOspf, kRbb, kLocalSearch, kRbbLocalSearch };

std::string to_string(Method m);
Method parse_method(const std::string& name);

struct SuiteConfig {
  std::vector<std::string> topologies;  // file paths
  int samples = 200;
  std::vector<Method> methods{Method::kDefaultOspf, Method::kRbb, Method::kLocalSearch, Method::kRbbLocalSearch};
  std::string model_path;
  RbbConfig rbb;
  SearchConfig search;
  CalibrationConfig calibration;
  /// Replace every file capacity by 1 (Mbps), matching the demand units.
  bool unit_capacity = true;
  std::uint64_t seed = 0;
};

/// Suite file: {"topologies": [...], "samples", "methods", "model", "rbb":
/// {"tau", "alpha", "steps"}, "search": {"budget_ms" | "budget_evaluations",
/// "w_max"}, "calibration": {"samples", "quantile", "target"}, "unit_capacity",
/// "seed"}. Relative paths resolve against `base_dir`.
SuiteConfig parse_suite_json(const std::string& document, const std::string& base_dir = ".");

struct ExperimentRecord {
  std::string topology;
  int sample = 0;
  Method method = Method::kDefaultOspf;
  double initial = 0.0;  // default OSPF max utilization
  double final = 0.0;
  std::string budget;    // "3 steps", "1000 ms", ...
  double wall_ms = 0.0;
  double step_ms = 0.0;  // mean time of one RBB step, RBB methods only
  std::string error;     // non-empty when the sample failed
};

struct SummaryRow {
  std::string topology;
  Method method = Method::kDefaultOspf;
  int samples = 0;  // successful ones
  int failed = 0;
  double mean_relative_improvement = 0.0;
  double fraction_improved = 0.0;    // final < initial
  double fraction_below_one = 0.0;   // final < 1
  double median_step_ms = 0.0;       // median of step_ms, RBB methods only
  double scale = 0.0;
  double quantile = 0.0;
  double target = 0.0;
};

struct ExperimentResult {
  std::vector<ExperimentRecord> records;
  std::vector<SummaryRow> summary;
};

using ExperimentProgress = std::function<void(const ExperimentRecord&)>;

ExperimentResult run_experiment(const SuiteConfig& suite, const GnnModel& model,
                                const ExperimentProgress& progress = {});

/// Summary statistics from records alone (per topology and method, in first
/// appearance order). Scale columns are left at zero.
std::vector<SummaryRow> summarize(const std::vector<ExperimentRecord>& records);

/// Columns topology,sample,method,initial,final,budget,wall_ms,step_ms,error.
void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& summary);

}  // namespace rbb
