#include "rbb/optimizer.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"
#include "test_support.hpp"

namespace rbb {
namespace {

using testing::random_graph;

WeightVector random_weights(const Graph& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<double> w(static_cast<std::size_t>(g.edge_count()));
  for (double& x : w) x = u(rng);
  return WeightVector(std::move(w));
}

/// Random demands scaled so that utilizations are O(1).
DemandVector random_demands(const Graph& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> d(static_cast<std::size_t>(g.pair_count()));
  for (double& x : d) x = u(rng);
  double total = std::accumulate(d.begin(), d.end(), 0.0);
  double cmin = *std::min_element(g.capacities().begin(), g.capacities().end());
  for (double& x : d) x *= 2.0 * cmin / total;
  return DemandVector(std::move(d));
}

GnnModel small_model(std::uint64_t seed) { return GnnModel::initialize(GnnConfig{8, 3, false}, seed); }

TEST(SoftUtilization, ZeroDemandGivesZero) {
  std::mt19937_64 rng(1);
  Graph g = random_graph(5, 0.3, rng);
  DemandVector d(std::vector<double>(static_cast<std::size_t>(g.pair_count()), 0.0));
  UtilizationVector rho = soft_utilization(small_model(0), g, random_weights(g, rng), d);
  for (double x : rho.values) EXPECT_EQ(x, 0.0);
}

TEST(SoftUtilization, HardRoutingMatchesExactUtilization) {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    Graph g = random_graph(6, 0.4, rng);
    WeightVector w = random_weights(g, rng);
    DemandVector d = random_demands(g, rng);
    RoutingMatrix routing = routing_matrix(g, w);
    Matrix hard = Matrix::Zero(g.pair_count(), g.edge_count());
    for (int p = 0; p < g.pair_count(); ++p)
      for (EdgeId k : routing.path(p)) hard(p, k) = 1.0;
    UtilizationVector soft = soft_utilization(g, hard, d);
    UtilizationVector exact = utilization(g, routing, d);
    for (std::size_t k = 0; k < soft.size(); ++k) EXPECT_NEAR(soft[k], exact[k], 1e-12);
  }
}

TEST(SoftUtilization, TapedFormGradient) {
  std::mt19937_64 rng(4);
  Graph g = random_graph(5, 0.3, rng);
  DemandVector d = random_demands(g, rng);
  Matrix p = Matrix::Random(g.pair_count(), g.edge_count()).cwiseAbs();
  diff::ScalarFunction f = [&](Tape&, Var x) { return diff::soft_maximum(soft_utilization(x, g, d), 0.1); };
  EXPECT_LT(diff::finite_difference_check(f, p), 1e-4);
  Tape tape;
  EXPECT_EQ(soft_utilization(tape.variable(p), g, d).value(),
            Eigen::Map<const Matrix>(soft_utilization(g, p, d).values.data(), 1, g.edge_count()));
}

TEST(SoftUtilization, DimensionMismatch) {
  std::mt19937_64 rng(2);
  Graph g = random_graph(4, 0.3, rng);
  DemandVector d(std::vector<double>(3, 1.0));
  EXPECT_THROW(soft_utilization(g, Matrix::Zero(g.pair_count(), g.edge_count()), d), Error);
  try {
    soft_utilization(g, Matrix::Zero(2, 2), random_demands(g, rng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(RbbStep, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(500 + seed));
    Graph g = random_graph(4 + seed % 3, 0.3, rng);
    WeightVector w = random_weights(g, rng);
    DemandVector d = random_demands(g, rng);
    GnnModel m = small_model(static_cast<std::uint64_t>(seed));
    RbbConfig config;
    config.engine = AllPairsEngine::kSparse;
    RbbStep step = rbb_step(m, g, w, d, config);

    auto objective = [&](const WeightVector& x) {
      return diff::soft_maximum_value(soft_utilization(m, g, x, d).values, config.tau);
    };
    EXPECT_NEAR(step.objective.value, objective(w), 1e-12);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      WeightVector up = w, down = w;
      up[k] += h;
      down[k] -= h;
      double numeric = (objective(up) - objective(down)) / (2 * h);
      double analytic = step.objective.gradient[k];
      worst = std::max(worst, std::abs(analytic - numeric) / (std::abs(analytic) + 1e-12));
      EXPECT_DOUBLE_EQ(step.next[k], std::max(kMinWeight, w[k] - config.alpha * analytic));
    }
    EXPECT_LT(worst, 1e-3) << "seed " << seed;
  }
}

TEST(RbbStep, SingleEngineAgreesWithDouble) {
  std::mt19937_64 rng(8);
  Graph g = random_graph(7, 0.3, rng);
  WeightVector w = random_weights(g, rng);
  DemandVector d = random_demands(g, rng);
  GnnModel m = GnnModel::initialize(GnnConfig{32, 4, false}, 3);
  SoftObjective a = soft_objective(m, g, w, d, 0.1, AllPairsEngine::kSparse);
  SoftObjective b = soft_objective(m, g, w, d, 0.1, AllPairsEngine::kSparseSingle);
  double scale = 0.0;
  for (double x : a.gradient) scale = std::max(scale, std::abs(x));
  EXPECT_NEAR(a.value, b.value, 1e-5);
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_NEAR(a.gradient[k], b.gradient[k], 1e-3 * scale);
}

TEST(RbbStep, ZeroGradientLeavesWeightsUnchanged) {
  std::mt19937_64 rng(3);
  Graph g = random_graph(5, 0.3, rng);
  WeightVector w = random_weights(g, rng);
  DemandVector zero(std::vector<double>(static_cast<std::size_t>(g.pair_count()), 0.0));
  RbbStep step = rbb_step(small_model(1), g, w, zero, {});
  EXPECT_EQ(step.next, w);
}

TEST(RbbStep, ProjectsOntoWeightFloor) {
  std::mt19937_64 rng(5);
  Graph g = random_graph(5, 0.5, rng);
  WeightVector w = random_weights(g, rng);
  DemandVector d = random_demands(g, rng);
  RbbConfig config;
  config.alpha = 1e6;
  config.engine = AllPairsEngine::kSparse;
  RbbStep step = rbb_step(small_model(2), g, w, d, config);
  int clamped = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    EXPECT_GE(step.next[k], kMinWeight);
    if (step.objective.gradient[k] > 0.0) {
      EXPECT_EQ(step.next[k], kMinWeight);
      ++clamped;
    }
  }
  EXPECT_GT(clamped, 0);
}

TEST(RbbStep, ScheduleOverridesAlpha) {
  std::mt19937_64 rng(6);
  Graph g = random_graph(5, 0.3, rng);
  WeightVector w = random_weights(g, rng);
  DemandVector d = random_demands(g, rng);
  RbbConfig config;
  config.engine = AllPairsEngine::kSparse;
  config.schedule = [](int t) { return 0.01 * (t + 1); };
  RbbStep step = rbb_step(small_model(0), g, w, d, config, 2);
  for (std::size_t k = 0; k < w.size(); ++k) {
    EXPECT_DOUBLE_EQ(step.next[k], std::max(kMinWeight, w[k] - 0.03 * step.objective.gradient[k]));
  }
}

TEST(RbbStep, RejectsBadConfig) {
  std::mt19937_64 rng(6);
  Graph g = random_graph(4, 0.3, rng);
  WeightVector w = random_weights(g, rng);
  DemandVector d = random_demands(g, rng);
  RbbConfig config;
  config.tau = 0.0;
  EXPECT_THROW(rbb_step(small_model(0), g, w, d, config), Error);
  config = {};
  config.alpha = -1.0;
  EXPECT_THROW(rbb_step(small_model(0), g, w, d, config), Error);
}

TEST(RbbOptimize, NeverWorseThanInitializationAndDeterministic) {
  for (int seed = 0; seed < 15; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(900 + seed));
    Graph g = random_graph(6, 0.3, rng);
    WeightVector w0 = random_weights(g, rng);
    DemandVector d = random_demands(g, rng);
    GnnModel m = small_model(static_cast<std::uint64_t>(seed));
    RbbConfig config;
    config.alpha = 0.5;
    RbbResult r = rbb_optimize(m, g, w0, d, config);
    ASSERT_EQ(r.trajectory.size(), 4u);
    EXPECT_EQ(r.trajectory[0].weights, w0);
    EXPECT_EQ(r.trajectory[0].wall_ms, 0.0);
    EXPECT_EQ(r.trajectory[0].exact_max_util, exact_max_utilization(g, w0, d));
    EXPECT_LE(r.recommended_max_util(), r.trajectory[0].exact_max_util);
    for (const TrajectoryPoint& p : r.trajectory) {
      EXPECT_GE(p.exact_max_util, r.recommended_max_util());
      EXPECT_EQ(p.exact_max_util, exact_max_utilization(g, p.weights, d));
      for (double x : p.weights.values) EXPECT_GE(x, kMinWeight);
    }
    RbbResult again = rbb_optimize(m, g, w0, d, config);
    EXPECT_EQ(again.best, r.best);
    for (std::size_t t = 0; t < r.trajectory.size(); ++t) {
      EXPECT_EQ(again.trajectory[t].weights, r.trajectory[t].weights);
      EXPECT_EQ(again.trajectory[t].soft_objective, r.trajectory[t].soft_objective);
    }
  }
}

TEST(RbbOptimize, SoftObjectiveOfFinalIterate) {
  std::mt19937_64 rng(12);
  Graph g = random_graph(5, 0.3, rng);
  WeightVector w0 = random_weights(g, rng);
  DemandVector d = random_demands(g, rng);
  GnnModel m = small_model(5);
  RbbConfig config;
  config.engine = AllPairsEngine::kSparse;
  config.steps = 2;
  RbbResult r = rbb_optimize(m, g, w0, d, config);
  for (const TrajectoryPoint& p : r.trajectory) {
    EXPECT_NEAR(p.soft_objective, diff::soft_maximum_value(soft_utilization(m, g, p.weights, d).values, 0.1), 1e-12);
  }
}

TEST(WeightsCsv, RoundTripIsExact) {
  std::mt19937_64 rng(7);
  Graph g = random_graph(6, 0.3, rng);
  WeightVector w = random_weights(g, rng);
  std::stringstream s;
  write_weights_csv(s, g, w);
  EXPECT_EQ(read_weights_csv(s, g), w);
}

TEST(WeightsCsv, RejectsMalformedInput) {
  Graph g = testing::closed_triangle();
  auto parse = [&](const std::string& text) {
    std::istringstream in(text);
    return read_weights_csv(in, g);
  };
  const std::string header = "edge_index,sender,receiver,weight\n";
  std::string rows;
  for (const EdgeTriple& e : g.edges()) {
    rows += std::to_string(e.edge_index) + "," + std::to_string(e.sender) + "," + std::to_string(e.receiver) + ",1\n";
  }
  EXPECT_NO_THROW(parse(header + rows));
  auto code_of = [&](const std::string& text) {
    try {
      parse(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;
  };
  EXPECT_EQ(code_of("weight\n" + rows), ErrorCode::kSyntax);
  EXPECT_EQ(code_of(header + "0,0,1,x\n"), ErrorCode::kSyntax);
  EXPECT_EQ(code_of(header + "0,0,1,1\n"), ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of(header + rows + "0,0,1,1\n"), ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of(header + "0,1,0,1\n"), ErrorCode::kBadReference);
  std::string zero = rows;
  zero.back() = '\n';
  zero[zero.size() - 2] = '0';
  EXPECT_EQ(code_of(header + zero), ErrorCode::kInvalidParameters);
}

TEST(TrajectoryCsv, Format) {
  RbbResult r;
  r.trajectory.push_back({WeightVector({1.0}), 0.5, 0.75, 0.0});
  r.trajectory.push_back({WeightVector({1.0}), 0.25, 0.5, 12.5});
  std::ostringstream out;
  write_trajectory_csv(out, r);
  EXPECT_EQ(out.str(), "step,soft_objective,exact_max_util,wall_ms\n0,0.5,0.75,0\n1,0.25,0.5,12.5\n");
}

}  // namespace
}  // namespace rbb
