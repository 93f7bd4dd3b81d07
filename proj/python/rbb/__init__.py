"""Link weight optimization through a differentiable GNN routing surrogate."""

from ._core import (
    Error,
    Graph,
    Model,
    calibrate_scaling,
    default_ospf_weights,
    generate_traffic,
    load_topology,
    local_search,
    make_graph,
    max_utilization,
    optimize,
    run_experiment,
    sample_ba_topology,
    shortest_path,
    soft_maximum,
    train,
    utilization,
)

__all__ = [
    "Error",
    "Graph",
    "Model",
    "calibrate_scaling",
    "default_ospf_weights",
    "generate_traffic",
    "load_topology",
    "local_search",
    "make_graph",
    "max_utilization",
    "optimize",
    "run_experiment",
    "sample_ba_topology",
    "shortest_path",
    "soft_maximum",
    "train",
    "utilization",
]
