import itertools
import json
import pathlib

import numpy as np
import pytest

import rbb

DATA = pathlib.Path(__file__).resolve().parents[2] / "data" / "topologies"


@pytest.fixture
def triangle():
    # Forward triangle plus reverse edges so every pair routes.
    links = [(0, 1, 1.0, True), (1, 2, 1.0, True), (0, 2, 1.0, True),
             (1, 0, 1.0, True), (2, 1, 1.0, True), (2, 0, 1.0, True)]
    return rbb.make_graph(3, links, "triangle")


@pytest.fixture(scope="module")
def tiny_model():
    model, history = rbb.train(steps=3, batch_size=4, hidden=8, rounds=2, seed=1, eval_every=2)
    assert [h["step"] for h in history] == [1, 2, 3]
    return model


def test_triangle_routing(triangle):
    w = [1, 1, 3, 1, 1, 1]
    assert rbb.shortest_path(triangle, w, 0, 2) == [0, 1]
    d = [0.0] * triangle.pair_count
    d[triangle.pair_index(0, 2)] = 0.5
    assert rbb.utilization(triangle, w, d) == [0.5, 0.5, 0.0, 0.0, 0.0, 0.0]
    assert rbb.max_utilization(triangle, w, d) == 0.5


def test_pair_order_is_lexicographic(triangle):
    pairs = [triangle.pair_at(i) for i in range(triangle.pair_count)]
    assert pairs == [(u, v) for u, v in itertools.product(range(3), repeat=2) if u != v]


def test_soft_maximum():
    assert rbb.soft_maximum([0.7, 0.7, 0.7], 0.05) == 0.7
    assert rbb.soft_maximum([0.0, 1.0], 0.1) == pytest.approx(np.exp(10) / (1 + np.exp(10)))


def test_errors_are_python_exceptions(triangle):
    with pytest.raises(rbb.Error, match="Io"):
        rbb.load_topology("/does/not/exist.txt")
    with pytest.raises(rbb.Error):
        rbb.utilization(triangle, None, [1.0])


def test_traffic_generation():
    g = rbb.load_topology(str(DATA / "nobel-germany.txt"))
    assert (g.node_count, g.edge_count) == (17, 52)
    assert set(g.capacities) == {1.0}
    d1 = np.array(rbb.generate_traffic(g, seed=4, scale=1.0))
    d2 = np.array(rbb.generate_traffic(g, seed=4, scale=0.5))
    assert d1.shape == (g.pair_count,)
    assert np.all((d1 > 0) & (d1 < g.node_count - 1))
    np.testing.assert_array_equal(d2, d1 * 0.5)
    scale = rbb.calibrate_scaling(g, samples=200, seed=2)
    assert scale > 0


def test_model_prediction_and_checkpoint(tmp_path, triangle, tiny_model):
    w = [1, 1, 3, 1, 1, 1]
    p = np.array(tiny_model.predict_path(triangle, w, 0, 2))
    assert p.shape == (6,) and np.all((p > 0) & (p < 1))
    P = tiny_model.predict_all_pairs(triangle, w)
    assert P.shape == (6, 6)
    np.testing.assert_allclose(P[triangle.pair_index(0, 2)], p, rtol=1e-12)
    path = tmp_path / "m.ckpt"
    tiny_model.save(str(path))
    again = rbb.Model.load(str(path))
    again.save(str(tmp_path / "m2.ckpt"))
    assert path.read_bytes() == (tmp_path / "m2.ckpt").read_bytes()


def test_optimize_and_local_search_never_worse(tiny_model):
    g = rbb.load_topology(str(DATA / "nobel-germany.txt"))
    d = rbb.generate_traffic(g, seed=1, scale=rbb.calibrate_scaling(g, samples=100))
    base = rbb.max_utilization(g, None, d)
    result = rbb.optimize(tiny_model, g, d, steps=2)
    assert len(result["trajectory"]) == 3
    assert result["max_util"] <= base
    assert result["max_util"] == rbb.max_utilization(g, result["weights"], d)
    ls = rbb.local_search(g, d, init=result["weights"], budget_evaluations=300, seed=3)
    assert ls["max_util"] <= result["max_util"]
    # The budget counts proposals; the initialization adds two evaluations.
    assert ls["evaluations"] <= 300 + 2
    zero = rbb.local_search(g, d, budget_evaluations=0)
    assert zero["weights"] == rbb.default_ospf_weights(g)


def test_run_experiment(tmp_path, tiny_model):
    tiny_model.save(str(tmp_path / "m.ckpt"))
    suite = {
        "topologies": [str(DATA / "nobel-germany.txt")],
        "samples": 2,
        "methods": ["default_ospf", "rbb", "ls"],
        "model": "m.ckpt",
        "rbb": {"steps": 1},
        "search": {"budget_evaluations": 100},
        "calibration": {"samples": 100},
    }
    (tmp_path / "suite.json").write_text(json.dumps(suite))
    records, summary = rbb.run_experiment(str(tmp_path / "suite.json"))
    assert len(records) == 2 * 3
    assert all(r["final"] <= r["initial"] for r in records)
    assert {s["method"] for s in summary} == {"default_ospf", "rbb", "ls"}
