#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rbb/gnn.hpp"
#include "rbb/netgraph.hpp"

namespace rbb {

struct RbbConfig {
  double tau = 0.1;
  /// Constant step size, used unless `schedule` is set.
  double alpha = 0.02;
  int steps = 3;
  double weight_floor = kMinWeight;
  /// Optional step size per step index (0-based); overrides alpha.
  std::function<double(int)> schedule;
  AllPairsEngine engine = AllPairsEngine::kSparseSingle;
};

/// d (as a row) times the soft routing matrix, divided by capacity.
UtilizationVector soft_utilization(const Graph& g, const Matrix& soft_routing, const DemandVector& d);
UtilizationVector soft_utilization(const GnnModel& model, const Graph& g, const WeightVector& w,
                                   const DemandVector& d, AllPairsEngine engine = AllPairsEngine::kSparse);

/// Taped form, differentiable with respect to the soft routing matrix.
Var soft_utilization(Var soft_routing, const Graph& g, const DemandVector& d);

struct SoftObjective {
  double value = 0.0;  // soft maximum of the soft utilization
  UtilizationVector utilization;
  std::vector<double> gradient;  // d(value)/dw
};

SoftObjective soft_objective(const GnnModel& model, const Graph& g, const WeightVector& w, const DemandVector& d,
                             double tau, AllPairsEngine engine);

struct RbbStep {
  WeightVector next;
  SoftObjective objective;  // at the input weights
};

/// One projected gradient step w - alpha * grad, clamped to the weight floor.
RbbStep rbb_step(const GnnModel& model, const Graph& g, const WeightVector& w, const DemandVector& d,
                 const RbbConfig& config, int step_index = 0);

struct TrajectoryPoint {
  WeightVector weights;
  double soft_objective = 0.0;
  double exact_max_util = 0.0;
  /// Time spent producing these weights from the previous iterate; 0 for the
  /// initialization. Exact re-evaluation is not included.
  double wall_ms = 0.0;
};

struct RbbResult {
  std::vector<TrajectoryPoint> trajectory;  // steps + 1 points, [0] is the initialization
  int best = 0;                             // index of the lowest exact max utilization
  const WeightVector& recommended() const { return trajectory.at(static_cast<std::size_t>(best)).weights; }
  double recommended_max_util() const { return trajectory.at(static_cast<std::size_t>(best)).exact_max_util; }
};

RbbResult rbb_optimize(const GnnModel& model, const Graph& g, const WeightVector& w0, const DemandVector& d,
                       const RbbConfig& config = {});

/// Columns edge_index,sender,receiver,weight.
void write_weights_csv(std::ostream& out, const Graph& g, const WeightVector& w);
/// Reads the format above; rows may come in any order but must cover every
/// edge once and agree with the graph's endpoints.
WeightVector read_weights_csv(std::istream& in, const Graph& g);

/// Columns step,soft_objective,exact_max_util,wall_ms.
void write_trajectory_csv(std::ostream& out, const RbbResult& result);

}  // namespace rbb
