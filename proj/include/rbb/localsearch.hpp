#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "rbb/netgraph.hpp"

namespace rbb {

enum class BudgetMode {
  kWallClock,
  /// Counts candidate evaluations instead of time; reproducible across machines.
  kEvaluations,
};

struct SearchConfig {
  BudgetMode mode = BudgetMode::kWallClock;
  double budget_ms = 1000.0;
  long budget_evaluations = 10000;
  /// Integer weights range over [1, w_max].
  int w_max = 64;
  std::uint64_t seed = 0;
  /// Tabu tenure in proposals, as a multiple of the edge count.
  double tabu_factor = 2.0;
  /// Proposals without an accepted move before restarting, as a multiple of
  /// the edge count.
  double stall_factor = 4.0;
  /// Share of weights redrawn when restarting from the best point.
  double restart_fraction = 0.1;
};

struct TracePoint {
  double time_ms = 0.0;
  double objective = 0.0;
};

struct SearchResult {
  WeightVector weights;
  double max_util = 0.0;
  /// Exact evaluations, including the two of the initialization.
  long evaluations = 0;
  /// Best objective so far, one point per improvement; starts with the
  /// initialization.
  std::vector<TracePoint> trace;
};

/// Maps w into the integer domain. Vectors already made of integers in
/// [1, w_max] are kept; anything else is scaled so its largest entry becomes
/// w_max, then rounded and clamped.
WeightVector quantize_weights(const WeightVector& w, int w_max);

/// Hill climbing on single-link weight changes with a tabu list and restarts
/// around the best point. Moves are ranked by max utilization, then by the sum
/// of squared utilizations. The result is never worse than `init`.
SearchResult local_search(const Graph& g, const DemandVector& d, const WeightVector& init,
                          const SearchConfig& config = {});

/// Columns time_ms,objective.
void write_search_trace_csv(std::ostream& out, const SearchResult& result);

}  // namespace rbb
