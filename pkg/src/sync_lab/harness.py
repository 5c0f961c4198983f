"""Scenario runner, random instances and parameter sweeps."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .combo import q_trace
from .dynamics import SolverConfig, SystemParams, Trajectory, integrate, trajectory_csv
from .errors import (
    DegenerateData,
    InsufficientSamples,
    InvalidConfig,
    OutputUnwritable,
    PreconditionViolated,
    SyncLabError,
)
from .framework import (
    Report,
    admissible_region,
    derive_params,
    fit_frequency_decay,
    growth_bound_check,
    monitor_q_inequality,
    sandwich_check,
    tol_fd,
    verify_theorem,
)
from .graph import Digraph, has_spanning_tree, node_decomposition

__all__ = [
    "Scenario",
    "ScenarioResult",
    "SweepSpec",
    "random_spanning_tree_digraph",
    "random_strongly_connected_digraph",
    "run_scenario",
    "run_sweep",
    "max_workers",
]

MAX_SWEEP_RUNS = 100_000
DEFAULT_ARC_WIDTH = 0.9 * math.pi


def random_spanning_tree_digraph(n: int, extra_arc_prob: float, seed: int) -> Digraph:
    """Random arborescence grown from a random root, plus independent extra arcs."""
    if n < 1:
        raise InvalidConfig("n must be >= 1")
    if not 0.0 <= extra_arc_prob <= 1.0:
        raise InvalidConfig("extra_arc_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    arcs = set()
    for pos in range(1, n):
        parent = int(order[rng.integers(pos)])
        arcs.add((parent, int(order[pos])))
    extra = rng.random((n, n)) < extra_arc_prob
    arcs.update((j, i) for j in range(n) for i in range(n) if i != j and extra[j, i])
    g = Digraph(n, frozenset(arcs))
    assert has_spanning_tree(g)
    return g


def random_strongly_connected_digraph(n: int, extra_arc_prob: float, seed: int) -> Digraph:
    """A random Hamiltonian cycle plus independent extra arcs."""
    rng = np.random.default_rng(seed)
    order = [int(v) for v in rng.permutation(n)]
    arcs = {(order[k], order[(k + 1) % n]) for k in range(n)} if n > 1 else set()
    extra = rng.random((n, n)) < extra_arc_prob
    arcs.update((j, i) for j in range(n) for i in range(n) if i != j and extra[j, i])
    return Digraph(n, frozenset(arcs))


def _resolve_graph(spec) -> Digraph:
    if isinstance(spec, Digraph):
        return spec
    if isinstance(spec, (str, Path)):
        return Digraph.from_json(spec)
    if isinstance(spec, dict) and "random" in spec:
        r = spec["random"]
        return random_spanning_tree_digraph(int(r["n"]), float(r.get("p", 0.3)), int(r.get("seed", 0)))
    if isinstance(spec, dict):
        return Digraph.from_json(spec)
    raise InvalidConfig(f"cannot interpret graph spec {spec!r}")


@dataclass(frozen=True)
class Scenario:
    """One run.  ``omega``/``theta0`` are vectors or generator dicts:

    omega:  ``{"uniform": [lo, hi]}`` or ``{"identical": v}``
    theta0: ``{"arc_width": w}`` (uniform in an arc of width w < pi)
    ``alpha``/``K`` accept ``"auto"``.  Give the horizon either as ``t_end`` or
    as ``tau_end`` in coupling time units (t_end = tau_end / K).
    """

    graph: Any
    omega: Any = field(default_factory=lambda: {"uniform": [-0.5, 0.5]})
    theta0: Any = field(default_factory=lambda: {"arc_width": DEFAULT_ARC_WIDTH})
    alpha: Any = "auto"
    K: Any = "auto"
    t_end: float | None = None
    tau_end: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    safety: float = 1.1
    alpha_fraction: float = 0.5
    dinf: float | None = None
    zeta: float | None = None
    gamma: float | None = None
    eta: float | None = None
    verify: bool = True

    def __post_init__(self) -> None:
        if (self.t_end is None) == (self.tau_end is None):
            raise InvalidConfig("give exactly one of t_end and tau_end")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")
        if isinstance(self.solver, dict):
            object.__setattr__(self, "solver", SolverConfig.from_dict(self.solver))

    @classmethod
    def from_dict(cls, obj: dict) -> "Scenario":
        obj = dict(obj)
        unknown = set(obj) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InvalidConfig(f"unknown scenario fields {sorted(unknown)}")
        if "graph" not in obj:
            raise InvalidConfig("scenario needs a graph")
        return cls(**obj)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["solver"] = dataclasses.asdict(self.solver)
        if isinstance(self.graph, Digraph):
            out["graph"] = self.graph.to_json()
        elif isinstance(self.graph, Path):
            out["graph"] = str(self.graph)
        for key in ("omega", "theta0"):
            if isinstance(out[key], np.ndarray):
                out[key] = out[key].tolist()
        return out


def _generate(s: Scenario, n: int) -> tuple[np.ndarray, np.ndarray]:
    seq_omega, seq_theta = np.random.SeedSequence(int(s.seed)).spawn(2)
    om = s.omega
    if isinstance(om, dict):
        if "identical" in om:
            omega = np.full(n, float(om["identical"]))
        elif "uniform" in om:
            lo, hi = map(float, om["uniform"])
            omega = np.random.default_rng(seq_omega).uniform(lo, hi, n)
        else:
            raise InvalidConfig(f"unknown omega generator {om!r}")
    else:
        omega = np.asarray(om, dtype=np.float64)
    th = s.theta0
    if isinstance(th, dict):
        if "arc_width" not in th:
            raise InvalidConfig(f"unknown theta0 generator {th!r}")
        w = float(th["arc_width"])
        theta0 = np.random.default_rng(seq_theta).uniform(0.0, w, n)
    else:
        theta0 = np.asarray(th, dtype=np.float64)
    if omega.shape != (n,) or theta0.shape != (n,):
        raise InvalidConfig(f"omega/theta0 must have length {n}")
    return omega, theta0


@dataclass
class ScenarioResult:
    trajectory: Trajectory
    report: Report
    status: str
    Q: np.ndarray | None
    params: SystemParams

    def csv(self) -> str:
        return trajectory_csv(self.trajectory, self.Q)

    def report_json(self) -> dict:
        return {"status": self.status, **self.report.to_json()}


def run_scenario(s: Scenario, out_dir: str | Path | None = None, stem: str = "run") -> ScenarioResult:
    g = _resolve_graph(s.graph)
    omega, theta0 = _generate(s, g.n)
    rep = Report()
    rep.info["scenario"] = s.to_dict()
    domega = float(np.ptp(omega))
    D0 = float(np.ptp(theta0))

    decomp = fp = region = None
    unmet: list[str] = []
    try:
        decomp = node_decomposition(g)
        rep.info["decomposition"] = decomp.to_json()
        fp = derive_params(D0, g.n, decomp.d, domega, s.zeta, s.gamma, s.eta, s.dinf, len(decomp.layers[0]))
        region = admissible_region(fp)
    except SyncLabError as exc:
        unmet.append(f"{type(exc).__name__}: {exc}")

    if s.alpha == "auto":
        if region is None:
            raise PreconditionViolated("alpha='auto' needs an admissible region: " + "; ".join(unmet))
        alpha = s.alpha_fraction * region.alpha_max
    else:
        alpha = float(s.alpha)
    if s.K == "auto":
        if region is None:
            raise PreconditionViolated("K='auto' needs an admissible region: " + "; ".join(unmet))
        kmin = region.k_min(alpha)
        if not math.isfinite(kmin):
            raise PreconditionViolated(f"alpha={alpha} leaves no admissible coupling")
        K = s.safety * kmin if kmin > 0 else 1.0
    else:
        K = float(s.K)
    p = SystemParams(omega, K, alpha)
    t_end = s.t_end if s.t_end is not None else s.tau_end / (K if K > 0 else 1.0)

    traj = integrate(g, p, theta0, t_end, s.solver, decomp)
    Q = None
    if region is not None:
        rep.info["framework"] = fp.to_json()
        rep.info["region"] = region.to_json(K, alpha)
        qt = q_trace(traj.theta_rel, decomp, fp.eta)
        Q = qt.Q
        rep.checks.append(sandwich_check(qt, traj.Dk, fp.beta))
        h = float(np.diff(traj.t).max())
        rep.checks.append(growth_bound_check(traj, fp, p, tol_fd(K, g.n, domega, h)))

        if s.verify:
            ok_alpha = 0 <= alpha < region.alpha_max
            ok_K = K > 0 and K >= region.k_min(alpha) * (1 - 1e-12)
            rep.add("alpha_admissible", ok_alpha, alpha, region.alpha_max)
            rep.add("K_admissible", ok_K, K, region.k_min(alpha))
            if not (ok_alpha and ok_K):
                unmet.append("(K, alpha) outside the admissible region")
            else:
                rep.extend(verify_theorem(fp, region, traj, decomp, p, qt))
                for k in range(decomp.d + 1):
                    rep.checks.append(monitor_q_inequality(traj, decomp, fp, p, k, qt).check())
                rep.checks.append(monitor_q_inequality(traj, decomp, fp, p, 0, form="root").check())
                t_star = rep.info.get("t_star")
                if t_star is not None:
                    try:
                        fit = fit_frequency_decay(traj, t_star)
                        rep.info["decay"] = dataclasses.asdict(fit)
                        rep.add("frequency_decay", fit.passed, fit.C2, None, note=f"r2={fit.r2:.6f}")
                    except DegenerateData as exc:
                        rep.add("frequency_decay", True, None, None, note=f"already synchronised: {exc}")
                    except InsufficientSamples as exc:
                        rep.add("frequency_decay", False, None, None, note=str(exc))
    elif s.verify:
        rep.add("preconditions", False, None, None, note="; ".join(unmet))

    rep.info["preconditions_unmet"] = unmet
    rep.info["K"], rep.info["alpha"], rep.info["t_end"] = K, alpha, t_end
    if unmet and s.verify:
        status = "PRECONDITION_UNMET"
    else:
        status = "PASS" if rep.passed else "FAIL"
    result = ScenarioResult(traj, rep, status, Q, p)
    if out_dir is not None:
        _write_outputs(result, Path(out_dir), stem)
    return result


def _write_outputs(result: ScenarioResult, out_dir: Path, stem: str) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.csv").write_text(result.csv())
        (out_dir / f"{stem}.json").write_text(json.dumps(result.report_json(), indent=2, default=_jsonable))
    except OSError as exc:
        raise OutputUnwritable(f"cannot write to {out_dir}: {exc}") from exc


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def max_workers(requested: int | None = None) -> int:
    """Worker count, capped by the SYNC_LAB_THREADS environment variable."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("SYNC_LAB_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise InvalidConfig(f"SYNC_LAB_THREADS must be an integer, got {cap!r}") from exc
    return max(1, n)


@dataclass(frozen=True)
class SweepSpec:
    base: dict
    axes: dict[str, list]
    out_dir: str | Path | None = None
    workers: int | None = None

    @classmethod
    def from_dict(cls, obj: dict) -> "SweepSpec":
        try:
            return cls(dict(obj["base"]), dict(obj.get("axes", {})), obj.get("out_dir"), obj.get("workers"))
        except (KeyError, TypeError) as exc:
            raise InvalidConfig(f"malformed sweep spec: {exc}") from exc

    def cells(self) -> list[dict]:
        names = sorted(self.axes)
        total = math.prod(len(self.axes[k]) for k in names)
        if total > MAX_SWEEP_RUNS:
            raise InvalidConfig(f"sweep has {total} runs, limit is {MAX_SWEEP_RUNS}")
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.axes[k] for k in names))]


def _param_key(params: dict) -> str:
    return json.dumps(params, sort_keys=True, default=str)


def _run_cell(base: dict, params: dict, out_dir: str | None) -> dict:
    digest = hashlib.sha256(_param_key(params).encode()).hexdigest()[:12]
    row: dict[str, Any] = {"params": params, "hash": digest}
    try:
        scenario = Scenario.from_dict({**base, **params})
        res = run_scenario(scenario, Path(out_dir) / "runs" if out_dir else None, digest)
        row["status"] = res.status
        row["t_star"] = res.report.info.get("t_star")
        row["C2"] = res.report.info.get("decay", {}).get("C2")
        row["checks"] = {c.name: c.passed for c in res.report.checks}
    except PreconditionViolated as exc:
        row.update(status="PRECONDITION_UNMET", error=str(exc), checks={})
    except OutputUnwritable:
        raise
    except Exception as exc:  # crash isolation: one bad cell must not sink the sweep
        row.update(status="FAILED", error=f"{type(exc).__name__}: {exc}", checks={})
    return row


def _sort_key(row: dict):
    return tuple((k, json.dumps(row["params"][k], sort_keys=True)) for k in sorted(row["params"]))


def run_sweep(spec: SweepSpec) -> list[dict]:
    cells = spec.cells()
    out_dir = str(spec.out_dir) if spec.out_dir is not None else None
    workers = min(max_workers(spec.workers), max(1, len(cells)))
    if workers == 1:
        rows = [_run_cell(spec.base, c, out_dir) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, itertools.repeat(spec.base), cells, itertools.repeat(out_dir)))
    rows.sort(key=_sort_key)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "summary.csv").write_text(summary_csv(rows))
        except OSError as exc:
            raise OutputUnwritable(f"cannot write sweep summary to {out_dir}: {exc}") from exc
    return rows


def summary_csv(rows: list[dict]) -> str:
    axes = sorted({k for r in rows for k in r["params"]})
    checks = sorted({k for r in rows for k in r.get("checks", {})})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*axes, "hash", "status", "t_star", "C2", *checks])
    for r in rows:
        fmt = lambda v: "" if v is None else ("%.17g" % v if isinstance(v, float) else v)  # noqa: E731
        w.writerow(
            [json.dumps(r["params"].get(a)) for a in axes]
            + [r["hash"], r["status"], fmt(r.get("t_star")), fmt(r.get("C2"))]
            + [{True: "PASS", False: "FAIL", None: ""}[r.get("checks", {}).get(c)] for c in checks]
        )
    return buf.getvalue()
