#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"
#include "rbb/workbench.hpp"

namespace rbb {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr int kBisectionLimit = 60;

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ b);
}

DemandVector generate_traffic_matrix(const Graph& g, std::uint64_t seed, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::kInvalidParameters, "traffic scale must be positive");
  }
  std::mt19937_64 rng(seed);
  const double hi = g.node_count() - 1;
  std::uniform_real_distribution<double> u(std::nextafter(0.0, 1.0), hi);
  std::vector<double> d(static_cast<std::size_t>(g.pair_count()));
  for (double& x : d) x = u(rng) * scale;
  return DemandVector(std::move(d));
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kEmptyVector, "quantile of no values");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorCode::kInvalidParameters, "quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  double pos = q * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, values.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double calibrate_scaling(const Graph& g, const CalibrationConfig& config) {
  if (config.samples < 100 || !(config.quantile > 0.0 && config.quantile < 1.0) || !(config.target > 0.0)) {
    throw Error(ErrorCode::kInvalidParameters, "calibration needs >= 100 samples, q in (0,1), target > 0");
  }
  RoutingMatrix routing = routing_matrix(g, default_ospf_weights(g));
  std::vector<double> peaks;
  for (int i = 0; i < config.samples; ++i) {
    DemandVector d = generate_traffic_matrix(g, derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    peaks.push_back(max_utilization(utilization(g, routing, d)));
  }
  auto statistic = [&](double scale) {
    std::vector<double> scaled(peaks);
    for (double& p : scaled) p *= scale;
    return quantile(std::move(scaled), config.quantile);
  };
  double lo = 0.0, hi = 1.0;
  for (int i = 0; statistic(hi) < config.target; ++i) {
    if (i == kBisectionLimit) throw Error(ErrorCode::kNoConvergence, "no scale reaches the calibration target");
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < kBisectionLimit; ++i) {
    double mid = 0.5 * (lo + hi);
    double s = statistic(mid);
    if (std::abs(s - config.target) <= 1e-12 * config.target) return mid;
    (s < config.target ? lo : hi) = mid;
  }
  double mid = 0.5 * (lo + hi);
  if (std::abs(statistic(mid) - config.target) > 0.01 * config.target) {
    throw Error(ErrorCode::kNoConvergence, "calibration did not converge");
  }
  return mid;
}

void write_traffic_csv(std::ostream& out, const Graph& g, const DemandVector& d) {
  validate_demands(g, d);
  out << "src,dst,demand_mbps\n";
  char buf[32];
  for (int p = 0; p < g.pair_count(); ++p) {
    auto [u, v] = g.pair_at(p);
    std::snprintf(buf, sizeof buf, "%.17g", d[static_cast<std::size_t>(p)]);
    out << u << ',' << v << ',' << buf << '\n';
  }
}

DemandVector read_traffic_csv(std::istream& in, const Graph& g) {
  std::string line;
  if (!std::getline(in, line) || line != "src,dst,demand_mbps") {
    throw Error(ErrorCode::kSyntax, "traffic CSV must start with 'src,dst,demand_mbps'");
  }
  std::vector<double> d(static_cast<std::size_t>(g.pair_count()), 0.0);
  std::vector<bool> seen(d.size(), false);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    int u = 0, v = 0;
    double demand = 0.0;
    char c1 = 0, c2 = 0;
    if (!(row >> u >> c1 >> v >> c2 >> demand) || c1 != ',' || c2 != ',' || !(row >> std::ws).eof()) {
      throw Error(ErrorCode::kSyntax, "traffic CSV line " + std::to_string(line_no) + ": '" + line + "'");
    }
    if (u < 0 || v < 0 || u >= g.node_count() || v >= g.node_count() || u == v) {
      throw Error(ErrorCode::kBadReference, "traffic CSV line " + std::to_string(line_no) + ": pair " +
                                                std::to_string(u) + "," + std::to_string(v));
    }
    auto p = static_cast<std::size_t>(g.pair_index(u, v));
    if (seen[p]) {
      throw Error(ErrorCode::kDimensionMismatch, "traffic CSV line " + std::to_string(line_no) + ": repeated pair");
    }
    seen[p] = true;
    d[p] = demand;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(ErrorCode::kDimensionMismatch, "traffic CSV does not list every ordered pair");
  }
  DemandVector out(std::move(d));
  validate_demands(g, out);
  return out;
}

}  // namespace rbb
