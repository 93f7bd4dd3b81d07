#include "rbb/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"

namespace rbb {

namespace {

void check_dimensions(const Graph& g, const Matrix& soft_routing, const DemandVector& d) {
  if (soft_routing.rows() != g.pair_count() || soft_routing.cols() != g.edge_count() ||
      static_cast<int>(d.size()) != g.pair_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "soft routing " + std::to_string(soft_routing.rows()) + "x" +
                                                   std::to_string(soft_routing.cols()) + ", demands " +
                                                   std::to_string(d.size()) + ", graph pairs " +
                                                   std::to_string(g.pair_count()));
  }
}

Matrix demand_row(const DemandVector& d) {
  return Eigen::Map<const Matrix>(d.values.data(), 1, static_cast<Eigen::Index>(d.size()));
}

Matrix inverse_capacity_row(const Graph& g) {
  Matrix row(1, g.edge_count());
  for (int k = 0; k < g.edge_count(); ++k) row(0, k) = 1.0 / g.capacities()[static_cast<std::size_t>(k)];
  return row;
}

void check_config(const RbbConfig& c) {
  if (!(c.tau > 0.0)) throw Error(ErrorCode::kNonPositiveTemperature, "tau = " + std::to_string(c.tau));
  if (!(c.alpha > 0.0) || c.steps < 1 || !(c.weight_floor >= kMinWeight)) {
    throw Error(ErrorCode::kInvalidParameters, "RBB configuration");
  }
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

UtilizationVector soft_utilization(const Graph& g, const Matrix& soft_routing, const DemandVector& d) {
  check_dimensions(g, soft_routing, d);
  Matrix rho = (demand_row(d) * soft_routing).cwiseProduct(inverse_capacity_row(g));
  return UtilizationVector(std::vector<double>(rho.data(), rho.data() + rho.size()));
}

UtilizationVector soft_utilization(const GnnModel& model, const Graph& g, const WeightVector& w,
                                   const DemandVector& d, AllPairsEngine engine) {
  AllPairsOptions opts;
  opts.engine = engine;
  return soft_utilization(g, predict_all_pairs(model, g, w, opts), d);
}

Var soft_utilization(Var soft_routing, const Graph& g, const DemandVector& d) {
  check_dimensions(g, soft_routing.value(), d);
  Tape& tape = *soft_routing.tape();
  Var load = diff::matmul(tape.constant(demand_row(d)), soft_routing);
  return diff::multiply_row(load, tape.constant(inverse_capacity_row(g)));
}

SoftObjective soft_objective(const GnnModel& model, const Graph& g, const WeightVector& w, const DemandVector& d,
                             double tau, AllPairsEngine engine) {
  validate_demands(g, d);
  SoftObjective out;
  auto seed = [&](const Matrix& p) {
    Tape tape;
    Var routing = tape.variable(p);
    Var rho = soft_utilization(routing, g, d);
    Var f = diff::soft_maximum(rho, tau);
    out.value = f.scalar();
    out.utilization = UtilizationVector(std::vector<double>(rho.value().data(), rho.value().data() + rho.value().size()));
    tape.backward(f);
    return tape.grad(routing);
  };
  AllPairsOptions opts;
  opts.engine = engine;
  out.gradient = all_pairs_vjp(model, g, w, seed, opts).weight_gradient;
  return out;
}

RbbStep rbb_step(const GnnModel& model, const Graph& g, const WeightVector& w, const DemandVector& d,
                 const RbbConfig& config, int step_index) {
  check_config(config);
  validate_weights(g, w);
  RbbStep out{w, soft_objective(model, g, w, d, config.tau, config.engine)};
  const double alpha = config.schedule ? config.schedule(step_index) : config.alpha;
  for (std::size_t k = 0; k < w.size(); ++k) {
    double grad = out.objective.gradient[k];
    if (!std::isfinite(grad)) {
      throw Error(ErrorCode::kNonFiniteGradient, "d objective / d w[" + std::to_string(k) + "] = " + fmt(grad));
    }
    out.next[k] = std::max(config.weight_floor, w[k] - alpha * grad);
  }
  return out;
}

RbbResult rbb_optimize(const GnnModel& model, const Graph& g, const WeightVector& w0, const DemandVector& d,
                       const RbbConfig& config) {
  check_config(config);
  validate_weights(g, w0);
  validate_demands(g, d);
  using Clock = std::chrono::steady_clock;
  RbbResult result;
  result.trajectory.push_back({w0, 0.0, exact_max_utilization(g, w0, d), 0.0});
  for (int t = 0; t < config.steps; ++t) {
    auto start = Clock::now();
    RbbStep step = rbb_step(model, g, result.trajectory.back().weights, d, config, t);
    double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    result.trajectory.back().soft_objective = step.objective.value;
    double exact = exact_max_utilization(g, step.next, d);
    result.trajectory.push_back({std::move(step.next), 0.0, exact, ms});
  }
  // The final iterate has no step of its own, so its soft objective needs a
  // separate forward pass.
  TrajectoryPoint& last = result.trajectory.back();
  last.soft_objective = diff::soft_maximum_value(
      soft_utilization(model, g, last.weights, d, config.engine).values, config.tau);

  for (std::size_t t = 1; t < result.trajectory.size(); ++t) {
    if (result.trajectory[t].exact_max_util < result.trajectory[static_cast<std::size_t>(result.best)].exact_max_util) {
      result.best = static_cast<int>(t);
    }
  }
  return result;
}

void write_weights_csv(std::ostream& out, const Graph& g, const WeightVector& w) {
  validate_weights(g, w);
  out << "edge_index,sender,receiver,weight\n";
  for (const EdgeTriple& e : g.edges()) {
    out << e.edge_index << ',' << e.sender << ',' << e.receiver << ',' << fmt(w[static_cast<std::size_t>(e.edge_index)])
        << '\n';
  }
}

WeightVector read_weights_csv(std::istream& in, const Graph& g) {
  std::string line;
  if (!std::getline(in, line) || line != "edge_index,sender,receiver,weight") {
    throw Error(ErrorCode::kSyntax, "weights CSV must start with 'edge_index,sender,receiver,weight'");
  }
  std::vector<double> w(static_cast<std::size_t>(g.edge_count()), 0.0);
  std::vector<bool> seen(w.size(), false);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    long index = 0, sender = 0, receiver = 0;
    double weight = 0.0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> index >> c1 >> sender >> c2 >> receiver >> c3 >> weight) || c1 != ',' || c2 != ',' || c3 != ',' ||
        !(row >> std::ws).eof()) {
      throw Error(ErrorCode::kSyntax, "weights CSV line " + std::to_string(line_no) + ": '" + line + "'");
    }
    if (index < 0 || index >= g.edge_count() || seen[static_cast<std::size_t>(index)]) {
      throw Error(ErrorCode::kDimensionMismatch, "weights CSV line " + std::to_string(line_no) + ": edge index " +
                                                     std::to_string(index) + " out of range or repeated");
    }
    const EdgeTriple& e = g.edge(static_cast<EdgeId>(index));
    if (e.sender != sender || e.receiver != receiver) {
      throw Error(ErrorCode::kBadReference, "weights CSV line " + std::to_string(line_no) + ": edge " +
                                                std::to_string(index) + " is not " + std::to_string(sender) + "->" +
                                                std::to_string(receiver));
    }
    seen[static_cast<std::size_t>(index)] = true;
    w[static_cast<std::size_t>(index)] = weight;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(ErrorCode::kDimensionMismatch, "weights CSV does not cover every edge");
  }
  WeightVector out(std::move(w));
  validate_weights(g, out);
  return out;
}

void write_trajectory_csv(std::ostream& out, const RbbResult& result) {
  out << "step,soft_objective,exact_max_util,wall_ms\n";
  for (std::size_t t = 0; t < result.trajectory.size(); ++t) {
    const TrajectoryPoint& p = result.trajectory[t];
    out << t << ',' << fmt(p.soft_objective) << ',' << fmt(p.exact_max_util) << ',' << fmt(p.wall_ms) << '\n';
  }
}

}  // namespace rbb
