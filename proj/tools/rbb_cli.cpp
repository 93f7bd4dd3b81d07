// rbb: command line front end for topology generation, training, traffic
// generation, optimization, evaluation, local search and experiments.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"
#include "rbb/gnn.hpp"
#include "rbb/localsearch.hpp"
#include "rbb/optimizer.hpp"
#include "rbb/trainer.hpp"
#include "rbb/workbench.hpp"

namespace fs = std::filesystem;
using namespace rbb;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Writes through a callback to `path`, or stdout for "-".
template <class F>
void write_output(const std::string& path, F&& emit) {
  if (path == "-") {
    emit(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  emit(out);
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path + "'");
}

std::vector<std::string> topology_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "'" + dir + "' is not a directory");
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".json" || ext == ".txt")) out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorCode::kIo, "no .json or .txt topologies in '" + dir + "'");
  return out;
}

struct TopoOptions {
  std::string path;
  bool file_capacity = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--topo", path, "Topology file (JSON or SNDlib native)")->required();
    cmd->add_flag("--file-capacity", file_capacity, "Keep file capacities instead of setting every link to 1");
  }
  Graph load() const { return to_graph(load_topology(path), file_capacity ? 0.0 : 1.0); }
};

DemandVector load_traffic(const std::string& path, const Graph& g) {
  std::istringstream in(read_text(path));
  return read_traffic_csv(in, g);
}

WeightVector load_weights(const std::string& path, const Graph& g) {
  std::istringstream in(read_text(path));
  return read_weights_csv(in, g);
}

std::pair<int, int> parse_range(const std::string& text) {
  int lo = 0, hi = 0;
  char colon = 0;
  std::istringstream in(text);
  if (in >> lo >> colon >> hi && colon == ':' && (in >> std::ws).eof() && lo <= hi) return {lo, hi};
  in.clear();
  in.str(text);
  if (in >> lo && (in >> std::ws).eof()) return {lo, lo};
  throw UsageError("--nodes expects N or LO:HI, got '" + text + "'");
}

CalibrationConfig parse_calibration(const std::string& text) {
  CalibrationConfig c;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--calibrate expects key=value pairs, got '" + item + "'");
    std::string key = item.substr(0, eq);
    std::string value = item.substr(eq + 1);
    try {
      if (key == "q") {
        c.quantile = std::stod(value);
      } else if (key == "target") {
        c.target = std::stod(value);
      } else if (key == "samples") {
        c.samples = std::stoi(value);
      } else {
        throw UsageError("--calibrate key '" + key + "' (use q, target, samples)");
      }
    } catch (const std::invalid_argument&) {
      throw UsageError("--calibrate value '" + value + "' is not a number");
    }
  }
  return c;
}

AllPairsEngine parse_engine(const std::string& name) {
  if (name == "single") return AllPairsEngine::kSparseSingle;
  if (name == "sparse") return AllPairsEngine::kSparse;
  if (name == "dense") return AllPairsEngine::kDense;
  throw UsageError("--engine must be single, sparse or dense");
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kNotScalarOutput:
    case ErrorCode::kInputNotOnTape:
    case ErrorCode::kNonFiniteGradient:
    case ErrorCode::kDivergedLoss:
    case ErrorCode::kNoConvergence:
      return kExitInternal;
    default:
      return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Routing By Backprop: GNN-surrogate link weight optimization"};
  app.require_subcommand(1);

  // gen-topo
  auto* gen_topo = app.add_subcommand("gen-topo", "Write random Barabasi-Albert topologies as JSON");
  std::string topo_model = "ba", topo_nodes = "10:20", topo_out;
  int topo_attach = 2, topo_count = 1;
  std::uint64_t topo_seed = 0;
  gen_topo->add_option("--model", topo_model, "Generator (only 'ba')")->check(CLI::IsMember({"ba"}));
  gen_topo->add_option("--nodes", topo_nodes, "Node count N or range LO:HI");
  gen_topo->add_option("--attach", topo_attach, "Links per new node");
  gen_topo->add_option("--count", topo_count, "Number of graphs")->check(CLI::PositiveNumber);
  gen_topo->add_option("--seed", topo_seed);
  gen_topo->add_option("--out", topo_out, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the path-prediction GNN");
  std::string train_data, train_val, train_out, train_metrics;
  bool train_online = false;
  TrainConfig train_cfg;
  GnnConfig gnn_cfg;
  int val_samples = 500;
  auto* data_opt = train_cmd->add_option("--data", train_data, "Directory of training topologies");
  auto* online_opt = train_cmd->add_flag("--online", train_online, "Sample fresh BA graphs every step (default)");
  data_opt->excludes(online_opt);
  train_cmd->add_option("--steps", train_cfg.steps)->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", train_cfg.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train_cfg.learning_rate)->check(CLI::PositiveNumber);
  train_cmd->add_option("--hidden", gnn_cfg.hidden)->check(CLI::PositiveNumber);
  train_cmd->add_option("--rounds", gnn_cfg.rounds)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train_cfg.seed);
  train_cmd->add_option("--eval-every", train_cfg.eval_every)->check(CLI::PositiveNumber);
  train_cmd->add_option("--val", train_val, "Directory of validation topologies");
  train_cmd->add_option("--val-samples", val_samples)->check(CLI::PositiveNumber);
  train_cmd->add_option("--metrics", train_metrics, "Metric history CSV");
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();

  // gen-tm
  auto* gen_tm = app.add_subcommand("gen-tm", "Generate a traffic matrix");
  TopoOptions tm_topo;
  tm_topo.add(gen_tm);
  std::uint64_t tm_seed = 0;
  double tm_scale = 0.0;
  std::string tm_calibrate, tm_out;
  gen_tm->add_option("--seed", tm_seed);
  auto* scale_opt = gen_tm->add_option("--scale", tm_scale, "Fixed scale factor")->check(CLI::PositiveNumber);
  auto* cal_opt = gen_tm->add_option("--calibrate", tm_calibrate, "Calibrate the scale: q=0.5,target=1.1,samples=500")
                      ->expected(0, 1)
                      ->default_str("q=0.5,target=1.1,samples=500");
  scale_opt->excludes(cal_opt);
  gen_tm->add_option("--out", tm_out, "Traffic CSV (- for stdout)")->required();

  // optimize
  auto* optimize_cmd = app.add_subcommand("optimize", "Run RBB on one traffic matrix");
  TopoOptions opt_topo;
  opt_topo.add(optimize_cmd);
  std::string opt_model, opt_tm, opt_out, opt_trace, opt_init, opt_engine = "single";
  RbbConfig rbb_cfg;
  optimize_cmd->add_option("--model", opt_model, "Checkpoint")->required();
  optimize_cmd->add_option("--tm", opt_tm, "Traffic CSV")->required();
  optimize_cmd->add_option("--init", opt_init, "Initial weights CSV (default OSPF otherwise)");
  optimize_cmd->add_option("--steps", rbb_cfg.steps)->check(CLI::PositiveNumber);
  optimize_cmd->add_option("--tau", rbb_cfg.tau)->check(CLI::PositiveNumber);
  optimize_cmd->add_option("--alpha", rbb_cfg.alpha)->check(CLI::PositiveNumber);
  optimize_cmd->add_option("--engine", opt_engine, "single (32-bit), sparse or dense");
  optimize_cmd->add_option("--out", opt_out, "Recommended weights CSV")->required();
  optimize_cmd->add_option("--trace", opt_trace, "Trajectory CSV");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Print the exact max utilization of a weight setting");
  TopoOptions eval_topo;
  eval_topo.add(evaluate_cmd);
  std::string eval_tm, eval_weights;
  evaluate_cmd->add_option("--tm", eval_tm, "Traffic CSV")->required();
  evaluate_cmd->add_option("--weights", eval_weights, "Weights CSV (default OSPF otherwise)");

  // localsearch
  auto* ls_cmd = app.add_subcommand("localsearch", "Anytime local search on integer weights");
  TopoOptions ls_topo;
  ls_topo.add(ls_cmd);
  std::string ls_tm, ls_init, ls_out, ls_trace;
  SearchConfig search_cfg;
  long ls_evals = 0;
  ls_cmd->add_option("--tm", ls_tm, "Traffic CSV")->required();
  ls_cmd->add_option("--init", ls_init, "Initial weights CSV (default OSPF otherwise)");
  auto* ms_opt = ls_cmd->add_option("--budget-ms", search_cfg.budget_ms, "Wall-clock budget")->check(CLI::NonNegativeNumber);
  auto* ev_opt = ls_cmd->add_option("--budget-evals", ls_evals, "Evaluation budget (reproducible)")
                     ->check(CLI::NonNegativeNumber);
  ms_opt->excludes(ev_opt);
  ls_cmd->add_option("--w-max", search_cfg.w_max)->check(CLI::Range(2, 1 << 20));
  ls_cmd->add_option("--seed", search_cfg.seed);
  ls_cmd->add_option("--out", ls_out, "Best weights CSV")->required();
  ls_cmd->add_option("--trace", ls_trace, "Improvement trace CSV");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run a comparison suite");
  std::string exp_suite, exp_out, exp_summary, exp_model;
  exp_cmd->add_option("--suite", exp_suite, "Suite JSON")->required();
  exp_cmd->add_option("--out", exp_out, "Records CSV")->required();
  exp_cmd->add_option("--summary", exp_summary, "Summary CSV")->required();
  exp_cmd->add_option("--model", exp_model, "Checkpoint (overrides the suite's)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_topo) {
      auto [lo, hi] = parse_range(topo_nodes);
      fs::create_directories(topo_out);
      std::mt19937_64 rng(topo_seed);
      std::uniform_int_distribution<int> size(lo, hi);
      for (int i = 0; i < topo_count; ++i) {
        int n = size(rng);
        Graph g = sample_ba_topology(n, topo_attach, rng());
        TopologySpec spec{g.name(), {}, {}};
        for (int v = 0; v < n; ++v) spec.nodes.push_back({v, ""});
        // Undirected BA links come out as consecutive edge pairs.
        for (int k = 0; k < g.edge_count(); k += 2) {
          spec.links.push_back({g.edge(k).sender, g.edge(k).receiver, 1.0, false, std::nullopt});
        }
        char name[32];
        std::snprintf(name, sizeof name, "ba-%04d.json", i);
        write_output((fs::path(topo_out) / name).string(), [&](std::ostream& o) { o << serialize_topology_json(spec); });
      }
      std::fprintf(stderr, "wrote %d topologies to %s\n", topo_count, topo_out.c_str());
    } else if (*train_cmd) {
      if (!train_data.empty()) {
        for (const std::string& f : topology_files(train_data)) train_cfg.graph_pool.push_back(to_graph(load_topology(f)));
      }
      std::vector<TrainingSample> validation;
      if (!train_val.empty()) {
        std::vector<Graph> topologies;
        for (const std::string& f : topology_files(train_val)) topologies.push_back(to_graph(load_topology(f)));
        validation = make_validation_set(topologies, val_samples, train_cfg.prior, derive_seed(train_cfg.seed, 0x7a1));
      }
      GnnModel model = GnnModel::initialize(gnn_cfg, train_cfg.seed);
      std::fprintf(stderr, "training %zu parameters for %d steps\n", model.parameter_count(), train_cfg.steps);
      TrainResult result = train(std::move(model), train_cfg, validation, [&](const MetricRow& r) {
        if (r.accuracy) {
          std::fprintf(stderr, "step %d loss %.5f accuracy %.5f\n", r.step, r.loss, *r.accuracy);
        } else if (r.step % 50 == 0) {
          std::fprintf(stderr, "step %d loss %.5f\n", r.step, r.loss);
        }
      });
      save_model(result.model, train_out);
      if (!train_metrics.empty()) {
        write_output(train_metrics, [&](std::ostream& o) { write_metrics_csv(o, result.history); });
      }
    } else if (*gen_tm) {
      Graph g = tm_topo.load();
      double scale = tm_scale > 0.0 ? tm_scale : 1.0;
      if (*cal_opt) {
        CalibrationConfig c = parse_calibration(tm_calibrate.empty() ? "q=0.5" : tm_calibrate);
        c.seed = derive_seed(tm_seed, 0xca11b);
        scale = calibrate_scaling(g, c);
        std::fprintf(stderr, "calibrated scale %.17g (q=%g, target=%g, %d samples)\n", scale, c.quantile, c.target,
                     c.samples);
      }
      DemandVector d = generate_traffic_matrix(g, tm_seed, scale);
      write_output(tm_out, [&](std::ostream& o) { write_traffic_csv(o, g, d); });
    } else if (*optimize_cmd) {
      Graph g = opt_topo.load();
      DemandVector d = load_traffic(opt_tm, g);
      WeightVector w0 = opt_init.empty() ? default_ospf_weights(g) : load_weights(opt_init, g);
      rbb_cfg.engine = parse_engine(opt_engine);
      GnnModel model = load_model(opt_model);
      RbbResult r = rbb_optimize(model, g, w0, d, rbb_cfg);
      write_output(opt_out, [&](std::ostream& o) { write_weights_csv(o, g, r.recommended()); });
      if (!opt_trace.empty()) write_output(opt_trace, [&](std::ostream& o) { write_trajectory_csv(o, r); });
      std::printf("initial %.17g\nrecommended %.17g (step %d)\n", r.trajectory[0].exact_max_util,
                  r.recommended_max_util(), r.best);
    } else if (*evaluate_cmd) {
      Graph g = eval_topo.load();
      DemandVector d = load_traffic(eval_tm, g);
      WeightVector w = eval_weights.empty() ? default_ospf_weights(g) : load_weights(eval_weights, g);
      std::printf("%.17g\n", exact_max_utilization(g, w, d));
    } else if (*ls_cmd) {
      Graph g = ls_topo.load();
      DemandVector d = load_traffic(ls_tm, g);
      WeightVector w0 = ls_init.empty() ? default_ospf_weights(g) : load_weights(ls_init, g);
      if (*ev_opt) {
        search_cfg.mode = BudgetMode::kEvaluations;
        search_cfg.budget_evaluations = ls_evals;
      }
      SearchResult r = local_search(g, d, w0, search_cfg);
      write_output(ls_out, [&](std::ostream& o) { write_weights_csv(o, g, r.weights); });
      if (!ls_trace.empty()) write_output(ls_trace, [&](std::ostream& o) { write_search_trace_csv(o, r); });
      std::printf("initial %.17g\nbest %.17g (%ld evaluations)\n", exact_max_utilization(g, w0, d), r.max_util,
                  r.evaluations);
    } else if (*exp_cmd) {
      SuiteConfig suite = parse_suite_json(read_text(exp_suite), fs::path(exp_suite).parent_path().string());
      if (!exp_model.empty()) suite.model_path = exp_model;
      if (suite.model_path.empty()) throw UsageError("no model: set 'model' in the suite or pass --model");
      GnnModel model = load_model(suite.model_path);
      ExperimentResult result = run_experiment(suite, model, [](const ExperimentRecord& r) {
        if (!r.error.empty()) {
          std::fprintf(stderr, "%s #%d %s failed: %s\n", r.topology.c_str(), r.sample, to_string(r.method).c_str(),
                       r.error.c_str());
        } else if (r.method == Method::kDefaultOspf) {
          std::fprintf(stderr, "%s #%d default %.4f\n", r.topology.c_str(), r.sample, r.initial);
        } else {
          std::fprintf(stderr, "%s #%d %s %.4f\n", r.topology.c_str(), r.sample, to_string(r.method).c_str(), r.final);
        }
      });
      write_output(exp_out, [&](std::ostream& o) { write_records_csv(o, result.records); });
      write_output(exp_summary, [&](std::ostream& o) { write_summary_csv(o, result.summary); });
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
  return 0;
}
