#include "rbb/localsearch.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"

namespace rbb {

namespace {

struct Score {
  double max_util = 0.0;
  double squares = 0.0;

  bool operator<(const Score& o) const {
    return max_util < o.max_util || (max_util == o.max_util && squares < o.squares);
  }
};

struct Evaluation {
  Score score;
  std::vector<EdgeId> hottest;  // edges at the maximum
};

Evaluation evaluate(const Graph& g, const WeightVector& w, const DemandVector& d) {
  UtilizationVector rho = utilization(g, routing_matrix(g, w), d);
  Evaluation e;
  e.score.max_util = max_utilization(rho);
  for (std::size_t k = 0; k < rho.size(); ++k) {
    e.score.squares += rho[k] * rho[k];
    if (rho[k] == e.score.max_util) e.hottest.push_back(static_cast<EdgeId>(k));
  }
  return e;
}

void check_config(const SearchConfig& c) {
  if (c.w_max < 2 || !(c.budget_ms >= 0.0) || c.budget_evaluations < 0 || !(c.tabu_factor >= 0.0) ||
      !(c.stall_factor > 0.0) || !(c.restart_fraction > 0.0 && c.restart_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidParameters, "local search configuration");
  }
}

class Search {
 public:
  Search(const Graph& g, const DemandVector& d, const SearchConfig& config)
      : g_(g),
        d_(d),
        config_(config),
        rng_(config.seed),
        start_(Clock::now()),
        tabu_(static_cast<std::size_t>(g.edge_count()) * static_cast<std::size_t>(config.w_max + 1), -1),
        tenure_(static_cast<long>(std::ceil(config.tabu_factor * g.edge_count()))),
        stall_limit_(std::max(1L, static_cast<long>(std::ceil(config.stall_factor * g.edge_count())))) {}

  double elapsed_ms() const { return std::chrono::duration<double, std::milli>(Clock::now() - start_).count(); }

  bool exhausted() const {
    if (config_.mode == BudgetMode::kEvaluations) return search_evaluations_ >= config_.budget_evaluations;
    return elapsed_ms() >= config_.budget_ms;
  }

  Evaluation count(const WeightVector& w) {
    ++evaluations_;
    return evaluate(g_, w, d_);
  }

  /// Climbs from the quantized start until the budget is spent.
  void run(WeightVector start, Evaluation start_eval, SearchResult& result) {
    current_ = std::move(start);
    current_eval_ = std::move(start_eval);
    best_ = current_;
    best_score_ = current_eval_.score;
    const int n_e = g_.edge_count();
    std::bernoulli_distribution guided(0.5);
    std::uniform_int_distribution<int> any_edge(0, n_e - 1);
    std::uniform_int_distribution<int> other_value(1, config_.w_max - 1);
    long stall = 0;
    long blocked = 0;
    while (!exhausted()) {
      EdgeId edge = 0;
      if (guided(rng_) && !current_eval_.hottest.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, current_eval_.hottest.size() - 1);
        edge = current_eval_.hottest[pick(rng_)];
      } else {
        edge = any_edge(rng_);
      }
      auto k = static_cast<std::size_t>(edge);
      int value = other_value(rng_);
      if (value >= static_cast<int>(current_[k])) ++value;
      std::size_t slot = k * static_cast<std::size_t>(config_.w_max + 1) + static_cast<std::size_t>(value);
      ++proposals_;
      if (tabu_[slot] >= proposals_) {
        if (++blocked > 10 * stall_limit_) {
          restart(result);
          blocked = 0;
          stall = 0;
        }
        continue;
      }
      blocked = 0;
      tabu_[slot] = proposals_ + tenure_;

      WeightVector candidate = current_;
      candidate[k] = value;
      ++search_evaluations_;
      Evaluation e = count(candidate);
      if (e.score < current_eval_.score) {
        current_ = std::move(candidate);
        current_eval_ = std::move(e);
        stall = 0;
        note_current(result);
      } else if (++stall >= stall_limit_) {
        restart(result);
        stall = 0;
      }
    }
  }

  const WeightVector& best() const { return best_; }
  const Score& best_score() const { return best_score_; }
  long evaluations() const { return evaluations_; }

 private:
  using Clock = std::chrono::steady_clock;

  void note_current(SearchResult& result) {
    if (!(current_eval_.score < best_score_)) return;
    best_ = current_;
    best_score_ = current_eval_.score;
    if (best_score_.max_util < result.trace.back().objective) {
      result.trace.push_back({elapsed_ms(), best_score_.max_util});
    }
  }

  void restart(SearchResult& result) {
    if (exhausted()) return;
    const int n_e = g_.edge_count();
    int changes = std::max(1, static_cast<int>(std::lround(config_.restart_fraction * n_e)));
    current_ = best_;
    std::uniform_int_distribution<int> any_edge(0, n_e - 1);
    std::uniform_int_distribution<int> any_value(1, config_.w_max);
    for (int i = 0; i < changes; ++i) current_[static_cast<std::size_t>(any_edge(rng_))] = any_value(rng_);
    ++search_evaluations_;
    current_eval_ = count(current_);
    note_current(result);
  }

  const Graph& g_;
  const DemandVector& d_;
  const SearchConfig& config_;
  std::mt19937_64 rng_;
  Clock::time_point start_;
  std::vector<long> tabu_;  // proposal index until which (edge, value) is tabu
  long tenure_;
  long stall_limit_;
  long proposals_ = 0;
  long evaluations_ = 0;
  long search_evaluations_ = 0;
  WeightVector current_, best_;
  Evaluation current_eval_;
  Score best_score_;
};

}  // namespace

WeightVector quantize_weights(const WeightVector& w, int w_max) {
  if (w_max < 2) throw Error(ErrorCode::kInvalidParameters, "w_max must be at least 2");
  if (w.size() == 0) return w;
  bool integral = std::all_of(w.values.begin(), w.values.end(),
                              [&](double x) { return x >= 1.0 && x <= w_max && std::floor(x) == x; });
  if (integral) return w;
  double top = *std::max_element(w.values.begin(), w.values.end());
  if (!(top > 0.0) || !std::isfinite(top)) throw Error(ErrorCode::kInvalidParameters, "weights must be positive");
  double scale = w_max / top;
  WeightVector out = w;
  for (double& x : out.values) x = std::clamp(std::round(x * scale), 1.0, static_cast<double>(w_max));
  return out;
}

SearchResult local_search(const Graph& g, const DemandVector& d, const WeightVector& init, const SearchConfig& config) {
  check_config(config);
  validate_weights(g, init);
  validate_demands(g, d);
  Search search(g, d, config);
  Evaluation raw = search.count(init);
  WeightVector start = quantize_weights(init, config.w_max);
  Evaluation quantized = search.count(start);

  SearchResult result;
  result.trace.push_back({0.0, std::min(raw.score.max_util, quantized.score.max_util)});
  search.run(std::move(start), std::move(quantized), result);

  // Only a strictly lower maximum replaces the caller's own weights.
  if (search.best_score().max_util < raw.score.max_util) {
    result.weights = search.best();
    result.max_util = search.best_score().max_util;
  } else {
    result.weights = init;
    result.max_util = raw.score.max_util;
  }
  result.evaluations = search.evaluations();
  return result;
}

void write_search_trace_csv(std::ostream& out, const SearchResult& result) {
  out << "time_ms,objective\n";
  char buf[64];
  for (const TracePoint& p : result.trace) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.time_ms, p.objective);
    out << buf;
  }
}

}  // namespace rbb
