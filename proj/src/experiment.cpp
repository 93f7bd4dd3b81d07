#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include <nlohmann/json.hpp>

#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"
#include "rbb/workbench.hpp"

namespace rbb {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::kSyntax, where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw Error(ErrorCode::kUnknownField, where + " field '" + key + "'");
    }
  }
}

template <class T>
void read_number(const json& obj, const char* name, T& out) {
  auto it = obj.find(name);
  if (it == obj.end()) return;
  if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw Error(ErrorCode::kSyntax, std::string("'") + name + "' must be an integer");
  } else {
    if (!it->is_number()) throw Error(ErrorCode::kSyntax, std::string("'") + name + "' must be a number");
  }
  out = it->get<T>();
}

std::string search_budget(const SearchConfig& s) {
  return s.mode == BudgetMode::kEvaluations ? std::to_string(s.budget_evaluations) + " evals"
                                            : num(s.budget_ms) + " ms";
}

bool uses_rbb(Method m) { return m == Method::kRbb || m == Method::kRbbLocalSearch; }

struct RbbOutcome {
  RbbResult result;
  double wall_ms = 0.0;
  double step_ms = 0.0;
};

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kDefaultOspf: return "default_ospf";
    case Method::kRbb: return "rbb";
    case Method::kLocalSearch: return "ls";
    case Method::kRbbLocalSearch: return "rbb+ls";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kDefaultOspf, Method::kRbb, Method::kLocalSearch, Method::kRbbLocalSearch}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorCode::kSyntax, "unknown method '" + name + "' (default_ospf, rbb, ls, rbb+ls)");
}

SuiteConfig parse_suite_json(const std::string& document, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSyntax, std::string("suite: ") + e.what());
  }
  reject_unknown(doc, {"topologies", "samples", "methods", "model", "rbb", "search", "calibration", "unit_capacity", "seed"},
                 "suite");
  namespace fs = std::filesystem;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? p : (fs::path(base_dir) / path).lexically_normal().string();
  };
  SuiteConfig suite;
  auto topologies = doc.find("topologies");
  if (topologies == doc.end()) throw Error(ErrorCode::kMissingField, "suite field 'topologies'");
  if (!topologies->is_array() || topologies->empty()) {
    throw Error(ErrorCode::kSyntax, "'topologies' must be a non-empty array of paths");
  }
  for (const json& t : *topologies) {
    if (!t.is_string()) throw Error(ErrorCode::kSyntax, "topology paths must be strings");
    suite.topologies.push_back(resolve(t.get<std::string>()));
  }
  read_number(doc, "samples", suite.samples);
  if (suite.samples < 1) throw Error(ErrorCode::kInvalidParameters, "'samples' must be positive");
  if (auto it = doc.find("methods"); it != doc.end()) {
    if (!it->is_array() || it->empty()) throw Error(ErrorCode::kSyntax, "'methods' must be a non-empty array");
    suite.methods.clear();
    for (const json& m : *it) {
      if (!m.is_string()) throw Error(ErrorCode::kSyntax, "methods must be strings");
      suite.methods.push_back(parse_method(m.get<std::string>()));
    }
  }
  if (auto it = doc.find("model"); it != doc.end()) {
    if (!it->is_string()) throw Error(ErrorCode::kSyntax, "'model' must be a path");
    suite.model_path = resolve(it->get<std::string>());
  }
  if (auto it = doc.find("rbb"); it != doc.end()) {
    reject_unknown(*it, {"tau", "alpha", "steps"}, "rbb");
    read_number(*it, "tau", suite.rbb.tau);
    read_number(*it, "alpha", suite.rbb.alpha);
    read_number(*it, "steps", suite.rbb.steps);
  }
  if (auto it = doc.find("search"); it != doc.end()) {
    reject_unknown(*it, {"budget_ms", "budget_evaluations", "w_max"}, "search");
    if (it->contains("budget_ms") && it->contains("budget_evaluations")) {
      throw Error(ErrorCode::kInvalidParameters, "give either 'budget_ms' or 'budget_evaluations'");
    }
    read_number(*it, "budget_ms", suite.search.budget_ms);
    if (it->contains("budget_evaluations")) {
      suite.search.mode = BudgetMode::kEvaluations;
      read_number(*it, "budget_evaluations", suite.search.budget_evaluations);
    }
    read_number(*it, "w_max", suite.search.w_max);
  }
  if (auto it = doc.find("calibration"); it != doc.end()) {
    reject_unknown(*it, {"samples", "quantile", "target"}, "calibration");
    read_number(*it, "samples", suite.calibration.samples);
    read_number(*it, "quantile", suite.calibration.quantile);
    read_number(*it, "target", suite.calibration.target);
  }
  if (auto it = doc.find("unit_capacity"); it != doc.end()) {
    if (!it->is_boolean()) throw Error(ErrorCode::kSyntax, "'unit_capacity' must be a boolean");
    suite.unit_capacity = it->get<bool>();
  }
  read_number(doc, "seed", suite.seed);
  return suite;
}

ExperimentResult run_experiment(const SuiteConfig& suite, const GnnModel& model, const ExperimentProgress& progress) {
  ExperimentResult out;
  std::vector<std::pair<std::string, CalibrationConfig>> calibrations;
  std::vector<double> scales;
  const bool need_rbb = std::any_of(suite.methods.begin(), suite.methods.end(), uses_rbb);

  for (std::size_t ti = 0; ti < suite.topologies.size(); ++ti) {
    TopologySpec spec = load_topology(suite.topologies[ti]);
    Graph g = to_graph(spec, suite.unit_capacity ? 1.0 : 0.0);
    CalibrationConfig calibration = suite.calibration;
    calibration.seed = derive_seed(suite.seed, ti, 0xca11b);
    double scale = calibrate_scaling(g, calibration);
    calibrations.emplace_back(spec.name, calibration);
    scales.push_back(scale);
    const WeightVector ospf_weights = default_ospf_weights(g);

    for (int i = 0; i < suite.samples; ++i) {
      const auto si = static_cast<std::uint64_t>(i);
      DemandVector d = generate_traffic_matrix(g, derive_seed(suite.seed, ti + 1, si), scale);
      const double ospf = exact_max_utilization(g, ospf_weights, d);
      SearchConfig search = suite.search;
      search.seed = derive_seed(suite.seed ^ 0x5ea7c4ULL, ti, si);

      std::optional<RbbOutcome> rbb;
      std::string rbb_error;
      if (need_rbb) {
        try {
          auto start = Clock::now();
          RbbOutcome o{rbb_optimize(model, g, ospf_weights, d, suite.rbb), 0.0, 0.0};
          o.wall_ms = ms_since(start);
          double steps_ms = 0.0;
          for (const TrajectoryPoint& p : o.result.trajectory) steps_ms += p.wall_ms;
          o.step_ms = steps_ms / suite.rbb.steps;
          rbb = std::move(o);
        } catch (const std::exception& e) {
          rbb_error = e.what();
        }
      }

      for (Method m : suite.methods) {
        ExperimentRecord r{spec.name, i, m, ospf, ospf, "", 0.0, 0.0, ""};
        try {
          switch (m) {
            case Method::kDefaultOspf:
              r.budget = "0";
              break;
            case Method::kRbb:
              r.budget = std::to_string(suite.rbb.steps) + " steps";
              if (!rbb) throw Error(ErrorCode::kInvalidParameters, rbb_error);
              r.final = rbb->result.recommended_max_util();
              r.wall_ms = rbb->wall_ms;
              r.step_ms = rbb->step_ms;
              break;
            case Method::kLocalSearch: {
              r.budget = search_budget(search);
              auto start = Clock::now();
              r.final = local_search(g, d, ospf_weights, search).max_util;
              r.wall_ms = ms_since(start);
              break;
            }
            case Method::kRbbLocalSearch: {
              r.budget = std::to_string(suite.rbb.steps) + " steps + " + search_budget(search);
              if (!rbb) throw Error(ErrorCode::kInvalidParameters, rbb_error);
              auto start = Clock::now();
              r.final = local_search(g, d, rbb->result.recommended(), search).max_util;
              r.wall_ms = rbb->wall_ms + ms_since(start);
              r.step_ms = rbb->step_ms;
              break;
            }
          }
        } catch (const std::exception& e) {
          r.final = r.initial;
          r.error = e.what();
          if (r.error.empty()) r.error = "failed";
        }
        out.records.push_back(r);
        if (progress) progress(r);
      }
    }
  }

  out.summary = summarize(out.records);
  for (SummaryRow& row : out.summary) {
    for (std::size_t ti = 0; ti < calibrations.size(); ++ti) {
      if (calibrations[ti].first != row.topology) continue;
      row.scale = scales[ti];
      row.quantile = calibrations[ti].second.quantile;
      row.target = calibrations[ti].second.target;
    }
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<ExperimentRecord>& records) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<double>> step_times;
  for (const ExperimentRecord& r : records) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const SummaryRow& s) { return s.topology == r.topology && s.method == r.method; });
    if (it == rows.end()) {
      rows.push_back(SummaryRow{r.topology, r.method});
      step_times.emplace_back();
      it = rows.end() - 1;
    }
    if (!r.error.empty()) {
      ++it->failed;
      continue;
    }
    ++it->samples;
    // Sums for now; divided below.
    it->mean_relative_improvement += (r.initial - r.final) / r.initial;
    it->fraction_improved += r.final < r.initial ? 1.0 : 0.0;
    it->fraction_below_one += r.final < 1.0 ? 1.0 : 0.0;
    if (uses_rbb(r.method)) step_times[static_cast<std::size_t>(it - rows.begin())].push_back(r.step_ms);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SummaryRow& s = rows[i];
    if (s.samples == 0) continue;
    s.mean_relative_improvement /= s.samples;
    s.fraction_improved /= s.samples;
    s.fraction_below_one /= s.samples;
    if (!step_times[i].empty()) s.median_step_ms = quantile(step_times[i], 0.5);
  }
  return rows;
}

void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  out << "topology,sample,method,initial,final,budget,wall_ms,step_ms,error\n";
  for (const ExperimentRecord& r : records) {
    out << csv_field(r.topology) << ',' << r.sample << ',' << to_string(r.method) << ',' << num(r.initial) << ','
        << num(r.final) << ',' << csv_field(r.budget) << ',' << num(r.wall_ms) << ',' << num(r.step_ms) << ','
        << csv_field(r.error) << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& summary) {
  out << "topology,method,samples,failed,mean_relative_improvement,fraction_improved,fraction_below_one,"
         "median_step_ms,scale,quantile,target\n";
  for (const SummaryRow& s : summary) {
    out << csv_field(s.topology) << ',' << to_string(s.method) << ',' << s.samples << ',' << s.failed << ','
        << num(s.mean_relative_improvement) << ',' << num(s.fraction_improved) << ',' << num(s.fraction_below_one)
        << ',' << num(s.median_step_ms) << ',' << num(s.scale) << ',' << num(s.quantile) << ',' << num(s.target)
        << '\n';
  }
}

}  // namespace rbb
