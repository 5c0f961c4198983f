import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sync_lab.errors import InvalidConfig, OutputUnwritable
from sync_lab.graph import Digraph, has_spanning_tree, node_decomposition, strongly_connected_components
from sync_lab.harness import (
    Scenario,
    SweepSpec,
    max_workers,
    random_spanning_tree_digraph,
    random_strongly_connected_digraph,
    run_scenario,
    run_sweep,
)

PAIR = {"n": 2, "arcs": [[1, 2], [2, 1]]}


def test_generator_single_vertex():
    g = random_spanning_tree_digraph(1, 0.5, 0)
    assert g.n == 1 and not g.arcs and has_spanning_tree(g)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 8), st.floats(0, 1), st.integers(0, 2**32))
def test_generator_always_has_spanning_tree(n, p, seed):
    g = random_spanning_tree_digraph(n, p, seed)
    assert has_spanning_tree(g)
    assert g == random_spanning_tree_digraph(n, p, seed)
    h = random_strongly_connected_digraph(n, p, seed)
    assert len(strongly_connected_components(h)) == 1


def test_full_extra_arcs_give_complete_graph():
    g = random_spanning_tree_digraph(5, 1.0, 7)
    assert g == Digraph.complete(5)
    assert node_decomposition(g).d == 0


def test_generator_rejects_bad_input():
    with pytest.raises(InvalidConfig):
        random_spanning_tree_digraph(0, 0.5, 1)
    with pytest.raises(InvalidConfig):
        random_spanning_tree_digraph(3, 1.5, 1)


def test_scenario_validation():
    with pytest.raises(InvalidConfig):
        Scenario(graph=PAIR)
    with pytest.raises(InvalidConfig):
        Scenario(graph=PAIR, t_end=1.0, tau_end=1.0)
    with pytest.raises(InvalidConfig):
        Scenario.from_dict({"graph": PAIR, "t_end": 1.0, "colour": "red"})
    with pytest.raises(InvalidConfig):
        Scenario.from_dict({"t_end": 1.0})


def test_zero_coupling_flags_unmet_preconditions():
    s = Scenario(graph=PAIR, omega={"identical": 0.3}, alpha=0.0, K=0.0, t_end=2.0,
                 solver={"n_samples": 11})
    res = run_scenario(s)
    assert res.status == "PRECONDITION_UNMET"
    assert not res.report["K_admissible"].passed
    np.testing.assert_allclose(res.trajectory.theta[-1] - res.trajectory.theta[0], 0.6)


def test_auto_coupling_on_pair_passes():
    s = Scenario(graph=PAIR, K="auto", safety=1.0, alpha="auto", tau_end=60.0, seed=3,
                 solver={"n_samples": 1025})
    res = run_scenario(s)
    assert res.status == "PASS", [c for c in res.report.checks if not c.passed]


def test_same_seed_gives_identical_csv(tmp_path):
    s = Scenario(graph={"random": {"n": 4, "p": 0.3, "seed": 5}}, tau_end=40.0, seed=11,
                 solver={"n_samples": 65})
    a, b = run_scenario(s, tmp_path / "a"), run_scenario(s, tmp_path / "b")
    assert (tmp_path / "a" / "run.csv").read_bytes() == (tmp_path / "b" / "run.csv").read_bytes()
    assert a.csv() == b.csv()
    other = run_scenario(Scenario(**{**s.__dict__, "seed": 12}))
    assert other.csv() != a.csv()


def test_missing_spanning_tree_still_simulates():
    s = Scenario(graph={"n": 2, "arcs": []}, alpha=0.0, K=1.0, t_end=1.0, solver={"n_samples": 5})
    res = run_scenario(s)
    assert res.status == "PRECONDITION_UNMET"
    assert "NoSpanningTree" in res.report.info["preconditions_unmet"][0]
    assert len(res.trajectory) == 5


def test_one_cell_sweep_matches_single_run(tmp_path):
    base = {"graph": PAIR, "tau_end": 30.0, "seed": 2, "solver": {"n_samples": 129}}
    rows = run_sweep(SweepSpec(base, {"seed": [2]}, tmp_path, workers=1))
    single = run_scenario(Scenario.from_dict(base))
    assert len(rows) == 1 and rows[0]["status"] == single.status
    assert rows[0]["t_star"] == single.report.info["t_star"]
    assert (tmp_path / "runs" / f"{rows[0]['hash']}.csv").read_text() == single.csv()
    assert (tmp_path / "summary.csv").exists()


def test_sweep_across_alpha_max_never_crashes(tmp_path):
    base = {"graph": PAIR, "omega": [0.2, -0.2], "theta0": [0.0, 1.0], "t_end": 1e-3,
            "K": 1e5, "solver": {"n_samples": 65}}
    s = run_scenario(Scenario.from_dict({**base, "alpha": 0.0}))
    amax = s.report.info["region"]["alpha_max"]
    rows = run_sweep(SweepSpec(base, {"alpha": [0.0, 0.5 * amax, 2 * amax, 0.5]}, None, workers=1))
    status = {r["params"]["alpha"]: r["status"] for r in rows}
    assert status[0.0] == "PASS" and status[0.5 * amax] == "PASS"
    assert status[2 * amax] == "PRECONDITION_UNMET" and status[0.5] == "PRECONDITION_UNMET"


def test_sweep_isolates_failures():
    base = {"graph": PAIR, "alpha": 0.0, "K": 1.0, "t_end": 1.0, "solver": {"n_samples": 5}}
    rows = run_sweep(SweepSpec(base, {"theta0": [[0.0, 0.5], [0.0, math.inf]]}, None, workers=1))
    by = {json_key(r["params"]["theta0"]): r for r in rows}
    assert by["[0.0, inf]"]["status"] == "FAILED" and "NonFinite" in by["[0.0, inf]"]["error"]
    assert by["[0.0, 0.5]"]["status"] in ("PASS", "FAIL", "PRECONDITION_UNMET")


def json_key(v):
    return "[" + ", ".join(repr(float(x)) for x in v) + "]"


def test_sweep_is_order_and_parallelism_independent(tmp_path, monkeypatch):
    base = {"graph": {"random": {"n": 3, "p": 0.2, "seed": 1}}, "tau_end": 30.0, "solver": {"n_samples": 65}}
    axes = {"seed": [3, 1, 2], "safety": [1.5, 1.1]}
    monkeypatch.setenv("SYNC_LAB_THREADS", "1")
    serial = run_sweep(SweepSpec(base, axes, tmp_path / "s", workers=4))
    monkeypatch.setenv("SYNC_LAB_THREADS", "3")
    parallel = run_sweep(SweepSpec(base, axes, tmp_path / "p", workers=3))
    assert serial == parallel
    assert [r["params"] for r in serial] == sorted((r["params"] for r in serial),
                                                   key=lambda p: (p["safety"], p["seed"]))
    assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "p" / "summary.csv").read_bytes()
    rows = list(csv.reader(io.StringIO((tmp_path / "s" / "summary.csv").read_text())))
    assert rows[0][:4] == ["safety", "seed", "hash", "status"] and len(rows) == 7


def test_sweep_guard():
    with pytest.raises(InvalidConfig):
        SweepSpec({"graph": PAIR, "t_end": 1.0}, {"seed": list(range(400)), "safety": list(range(300))}).cells()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    s = Scenario(graph=PAIR, alpha=0.0, K=1.0, t_end=0.1, solver={"n_samples": 3})
    with pytest.raises(OutputUnwritable):
        run_scenario(s, blocker / "sub")


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("SYNC_LAB_THREADS", "2")
    assert max_workers(8) == 2
    assert max_workers(1) == 1
    monkeypatch.setenv("SYNC_LAB_THREADS", "lots")
    with pytest.raises(InvalidConfig):
        max_workers(4)
