#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "rbb/errors.hpp"
#include "rbb/exact_routing.hpp"
#include "rbb/gnn.hpp"
#include "rbb/localsearch.hpp"
#include "rbb/optimizer.hpp"
#include "rbb/trainer.hpp"
#include "rbb/workbench.hpp"

namespace py = pybind11;
using namespace rbb;

namespace {

WeightVector weights_or_default(const Graph& g, const std::optional<std::vector<double>>& w) {
  return w ? WeightVector(*w) : default_ospf_weights(g);
}

py::dict record_dict(const ExperimentRecord& r) {
  py::dict d;
  d["topology"] = r.topology;
  d["sample"] = r.sample;
  d["method"] = to_string(r.method);
  d["initial"] = r.initial;
  d["final"] = r.final;
  d["budget"] = r.budget;
  d["wall_ms"] = r.wall_ms;
  d["step_ms"] = r.step_ms;
  d["error"] = r.error;
  return d;
}

py::dict summary_dict(const SummaryRow& s) {
  py::dict d;
  d["topology"] = s.topology;
  d["method"] = to_string(s.method);
  d["samples"] = s.samples;
  d["failed"] = s.failed;
  d["mean_relative_improvement"] = s.mean_relative_improvement;
  d["fraction_improved"] = s.fraction_improved;
  d["fraction_below_one"] = s.fraction_below_one;
  d["median_step_ms"] = s.median_step_ms;
  d["scale"] = s.scale;
  d["quantile"] = s.quantile;
  d["target"] = s.target;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Link weight optimization through a differentiable GNN routing surrogate";

  static py::exception<Error> error(m, "Error", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::class_<Graph>(m, "Graph")
      .def_property_readonly("name", &Graph::name)
      .def_property_readonly("node_count", &Graph::node_count)
      .def_property_readonly("edge_count", &Graph::edge_count)
      .def_property_readonly("pair_count", &Graph::pair_count)
      .def_property_readonly("edges",
                             [](const Graph& g) {
                               std::vector<std::pair<int, int>> out;
                               for (const EdgeTriple& e : g.edges()) out.emplace_back(e.sender, e.receiver);
                               return out;
                             },
                             "(sender, receiver) per edge")
      .def_property_readonly("capacities",
                             [](const Graph& g) { return std::vector<double>(g.capacities().begin(), g.capacities().end()); })
      .def("pair_index", &Graph::pair_index)
      .def("pair_at", &Graph::pair_at)
      .def("__repr__", [](const Graph& g) {
        return "<Graph " + g.name() + ": " + std::to_string(g.node_count()) + " nodes, " +
               std::to_string(g.edge_count()) + " edges>";
      });

  m.def(
      "make_graph",
      [](int nodes, const std::vector<std::tuple<int, int, double, bool>>& links, const std::string& name) {
        GraphSpec spec{name, nodes, {}};
        for (auto [a, b, c, directed] : links) spec.links.push_back({a, b, c, directed});
        return build_graph(spec);
      },
      py::arg("nodes"), py::arg("links"), py::arg("name") = "graph",
      "Graph from (from, to, capacity, directed) links; undirected links become two edges.");
  m.def(
      "load_topology",
      [](const std::string& path, bool file_capacity) {
        return to_graph(load_topology(path), file_capacity ? 0.0 : 1.0);
      },
      py::arg("path"), py::arg("file_capacity") = false);
  m.def(
      "sample_ba_topology", &sample_ba_topology, py::arg("nodes"), py::arg("attachment") = 2, py::arg("seed") = 0);

  m.def("default_ospf_weights", [](const Graph& g) { return default_ospf_weights(g).values; });
  m.def(
      "shortest_path",
      [](const Graph& g, const std::vector<double>& w, int u, int v) {
        return path_vector(g, WeightVector(w), u, v).edge_list();
      },
      py::arg("graph"), py::arg("weights"), py::arg("source"), py::arg("destination"), "Edge indices of the path.");
  m.def(
      "utilization",
      [](const Graph& g, const std::optional<std::vector<double>>& w, const std::vector<double>& d) {
        WeightVector wv = weights_or_default(g, w);
        return utilization(g, routing_matrix(g, wv), DemandVector(d)).values;
      },
      py::arg("graph"), py::arg("weights"), py::arg("demands"));
  m.def(
      "max_utilization",
      [](const Graph& g, const std::optional<std::vector<double>>& w, const std::vector<double>& d) {
        return exact_max_utilization(g, weights_or_default(g, w), DemandVector(d));
      },
      py::arg("graph"), py::arg("weights"), py::arg("demands"));
  m.def("soft_maximum", [](const std::vector<double>& x, double tau) { return diff::soft_maximum_value(x, tau); },
        py::arg("values"), py::arg("tau"));

  m.def(
      "generate_traffic",
      [](const Graph& g, std::uint64_t seed, double scale) { return generate_traffic_matrix(g, seed, scale).values; },
      py::arg("graph"), py::arg("seed") = 0, py::arg("scale") = 1.0);
  m.def(
      "calibrate_scaling",
      [](const Graph& g, int samples, double quantile, double target, std::uint64_t seed) {
        return calibrate_scaling(g, CalibrationConfig{samples, quantile, target, seed});
      },
      py::arg("graph"), py::arg("samples") = 500, py::arg("quantile") = 0.5, py::arg("target") = 1.1,
      py::arg("seed") = 0);

  py::class_<GnnModel>(m, "Model")
      .def_static(
          "initialize",
          [](int hidden, int rounds, std::uint64_t seed) { return GnnModel::initialize(GnnConfig{hidden, rounds, false}, seed); },
          py::arg("hidden") = 128, py::arg("rounds") = 8, py::arg("seed") = 0)
      .def_static("load", &load_model)
      .def("save", [](const GnnModel& model, const std::string& path) { save_model(model, path); })
      .def_property_readonly("hidden", [](const GnnModel& model) { return model.config().hidden; })
      .def_property_readonly("rounds", [](const GnnModel& model) { return model.config().rounds; })
      .def_property_readonly("parameter_count", &GnnModel::parameter_count)
      .def(
          "predict_path",
          [](const GnnModel& model, const Graph& g, const std::vector<double>& w, int u, int v) {
            return predict_path(model, g, WeightVector(w), {u, v}).probabilities;
          },
          py::arg("graph"), py::arg("weights"), py::arg("source"), py::arg("destination"))
      .def(
          "predict_all_pairs",
          [](const GnnModel& model, const Graph& g, const std::vector<double>& w) {
            return predict_all_pairs(model, g, WeightVector(w));
          },
          py::arg("graph"), py::arg("weights"), "pair_count x edge_count soft routing matrix")
      .def(
          "soft_utilization",
          [](const GnnModel& model, const Graph& g, const std::vector<double>& w, const std::vector<double>& d) {
            return soft_utilization(model, g, WeightVector(w), DemandVector(d)).values;
          },
          py::arg("graph"), py::arg("weights"), py::arg("demands"));

  m.def(
      "train",
      [](int steps, int batch_size, double learning_rate, int hidden, int rounds, std::uint64_t seed,
         const std::vector<Graph>& validation_topologies, int validation_samples, int eval_every) {
        TrainConfig config;
        config.steps = steps;
        config.batch_size = batch_size;
        config.learning_rate = learning_rate;
        config.seed = seed;
        config.eval_every = eval_every;
        std::vector<TrainingSample> validation;
        if (!validation_topologies.empty()) {
          validation = make_validation_set(validation_topologies, validation_samples, config.prior,
                                           derive_seed(seed, 0x7a1));
        }
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(GnnModel::initialize(GnnConfig{hidden, rounds, false}, seed), config, validation);
        }
        py::list history;
        for (const MetricRow& row : r.history) {
          py::dict d;
          d["step"] = row.step;
          d["loss"] = row.loss;
          d["accuracy"] = row.accuracy ? py::cast(*row.accuracy) : py::none();
          history.append(d);
        }
        return py::make_tuple(std::move(r.model), history);
      },
      py::arg("steps") = 4000, py::arg("batch_size") = 32, py::arg("learning_rate") = 1e-3, py::arg("hidden") = 128,
      py::arg("rounds") = 8, py::arg("seed") = 0, py::arg("validation_topologies") = std::vector<Graph>{},
      py::arg("validation_samples") = 500, py::arg("eval_every") = 250, "Returns (model, history).");

  m.def(
      "optimize",
      [](const GnnModel& model, const Graph& g, const std::vector<double>& d,
         const std::optional<std::vector<double>>& init, int steps, double tau, double alpha) {
        RbbConfig config;
        config.steps = steps;
        config.tau = tau;
        config.alpha = alpha;
        WeightVector w0 = weights_or_default(g, init);
        RbbResult r;
        {
          py::gil_scoped_release release;
          r = rbb_optimize(model, g, w0, DemandVector(d), config);
        }
        py::list trajectory;
        for (const TrajectoryPoint& p : r.trajectory) {
          py::dict t;
          t["weights"] = p.weights.values;
          t["soft_objective"] = p.soft_objective;
          t["exact_max_util"] = p.exact_max_util;
          t["wall_ms"] = p.wall_ms;
          trajectory.append(t);
        }
        py::dict out;
        out["weights"] = r.recommended().values;
        out["max_util"] = r.recommended_max_util();
        out["best_step"] = r.best;
        out["trajectory"] = trajectory;
        return out;
      },
      py::arg("model"), py::arg("graph"), py::arg("demands"), py::arg("init") = py::none(), py::arg("steps") = 3,
      py::arg("tau") = 0.1, py::arg("alpha") = 0.02);

  m.def(
      "local_search",
      [](const Graph& g, const std::vector<double>& d, const std::optional<std::vector<double>>& init,
         std::optional<double> budget_ms, std::optional<long> budget_evaluations, std::uint64_t seed, int w_max) {
        SearchConfig config;
        config.seed = seed;
        config.w_max = w_max;
        if (budget_evaluations) {
          if (budget_ms) throw Error(ErrorCode::kInvalidParameters, "give budget_ms or budget_evaluations, not both");
          config.mode = BudgetMode::kEvaluations;
          config.budget_evaluations = *budget_evaluations;
        } else if (budget_ms) {
          config.budget_ms = *budget_ms;
        }
        WeightVector w0 = weights_or_default(g, init);
        SearchResult r;
        {
          py::gil_scoped_release release;
          r = local_search(g, DemandVector(d), w0, config);
        }
        py::dict out;
        out["weights"] = r.weights.values;
        out["max_util"] = r.max_util;
        out["evaluations"] = r.evaluations;
        std::vector<std::pair<double, double>> trace;
        for (const TracePoint& t : r.trace) trace.emplace_back(t.time_ms, t.objective);
        out["trace"] = trace;
        return out;
      },
      py::arg("graph"), py::arg("demands"), py::arg("init") = py::none(), py::arg("budget_ms") = py::none(),
      py::arg("budget_evaluations") = py::none(), py::arg("seed") = 0, py::arg("w_max") = 64,
      "Defaults to a 1000 ms wall-clock budget.");

  m.def(
      "run_experiment",
      [](const std::string& suite_path, const std::optional<std::string>& model_path) {
        std::ifstream in(suite_path);
        if (!in) throw Error(ErrorCode::kIo, "cannot read '" + suite_path + "'");
        std::stringstream text;
        text << in.rdbuf();
        std::string base = suite_path.find('/') == std::string::npos ? "." : suite_path.substr(0, suite_path.rfind('/'));
        SuiteConfig suite = parse_suite_json(text.str(), base);
        if (model_path) suite.model_path = *model_path;
        GnnModel model = load_model(suite.model_path);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(suite, model);
        }
        py::list records, summary;
        for (const ExperimentRecord& rec : r.records) records.append(record_dict(rec));
        for (const SummaryRow& s : r.summary) summary.append(summary_dict(s));
        return py::make_tuple(records, summary);
      },
      py::arg("suite"), py::arg("model") = py::none(), "Returns (records, summary) as lists of dicts.");
}
