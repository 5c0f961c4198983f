"""Command-line entry point: ``sync-lab <subcommand>``.

Exit status is 0 iff every requested check passes, 1 if a check fails and
2 on invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .combo import sine_chain_violations
from .errors import SyncLabError
from .framework import admissible_region, derive_params
from .graph import Digraph, maximum_nodes, node_decomposition
from .harness import (
    Scenario,
    SweepSpec,
    _jsonable,
    random_strongly_connected_digraph,
    run_scenario,
    run_sweep,
)


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SyncLabError(f"cannot read JSON from {path}: {exc}") from exc


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=_jsonable))


def cmd_simulate(args) -> int:
    cfg = _load_json(args.config)
    if args.graph:
        cfg["graph"] = args.graph
    if args.seed is not None:
        cfg["seed"] = args.seed
    res = run_scenario(Scenario.from_dict(cfg))
    if args.csv:
        Path(args.csv).write_text(res.csv())
    report = res.report_json()
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2, default=_jsonable))
    _emit({"status": res.status, "pass": res.status == "PASS", "checks": report["checks"]})
    return 0 if res.status == "PASS" else 1


def cmd_decompose(args) -> int:
    g = Digraph.from_json(args.graph)
    try:
        _emit(node_decomposition(g).to_json())
        return 0
    except SyncLabError as exc:
        nodes = [[v + 1 for v in sorted(c)] for c in maximum_nodes(g)]
        _emit({"error": str(exc), "maximum_nodes": nodes})
        return 1


def _omega_vector(path: str) -> np.ndarray:
    obj = _load_json(path)
    if isinstance(obj, dict):
        obj = obj.get("omega")
    return np.asarray(obj, dtype=np.float64)


def cmd_check_conditions(args) -> int:
    g = Digraph.from_json(args.graph)
    omega = _omega_vector(args.omega)
    if omega.shape != (g.n,):
        raise SyncLabError(f"omega must have {g.n} entries")
    dec = node_decomposition(g)
    fp = derive_params(args.d0, g.n, dec.d, float(np.ptp(omega)), dinf=args.dinf, n0=len(dec.layers[0]))
    region = admissible_region(fp)
    alpha = region.alpha_max / 2 if args.alpha == "auto" else float(args.alpha)
    kmin = region.k_min(alpha)
    verdict = {"alpha": alpha, "alpha_admissible": 0 <= alpha < region.alpha_max, "K_min": kmin}
    ok = verdict["alpha_admissible"]
    if args.K is not None:
        verdict["K"] = args.K
        verdict["admissible"] = region.is_admissible(args.K, alpha)
        verdict["lines"] = region.lines(args.K, alpha)
        ok = verdict["admissible"]
    K_for_bounds = args.K if args.K is not None else (kmin if math.isfinite(kmin) else None)
    _emit({
        "framework": fp.to_json(),
        "region": region.to_json(K_for_bounds, alpha),
        "verdict": verdict,
        "pass": ok,
    })
    return 0 if ok else 1


def cmd_check_lemma31(args) -> int:
    gamma = args.gamma
    eta = args.eta if args.eta is not None else 1.01 * max(1 / math.sin(gamma), 2.0)
    if not eta > 1 / math.sin(gamma):
        raise SyncLabError(f"eta={eta} must exceed 1/sin(gamma)={1 / math.sin(gamma):.6g}")
    rng = np.random.default_rng(args.seed)
    total_bad, worst, done, batch = 0, -math.inf, 0, 0
    while done < args.samples:
        m = min(args.batch, args.samples - done)
        if args.graph:
            g = Digraph.from_json(args.graph)
        else:
            g = random_strongly_connected_digraph(args.n, float(rng.uniform(0, 1)), int(rng.integers(2**63)))
        width = rng.uniform(0, gamma, (m, 1))
        thetas = width * rng.uniform(0, 1, (m, g.n))
        bad, w = sine_chain_violations(thetas, g.adjacency, eta, args.tol)
        total_bad += bad
        worst = max(worst, w)
        done += m
        batch += 1
    _emit({"samples": done, "batches": batch, "n": args.n, "eta": eta, "gamma": gamma,
           "violations": total_bad, "worst_margin": worst, "tol": args.tol, "pass": total_bad == 0})
    return 0 if total_bad == 0 else 1


def cmd_sweep(args) -> int:
    spec = _load_json(args.spec)
    if args.out:
        spec["out_dir"] = args.out
    if args.workers:
        spec["workers"] = args.workers
    rows = run_sweep(SweepSpec.from_dict(spec))
    ok = all(r["status"] == "PASS" for r in rows)
    _emit({"runs": len(rows), "pass": ok, "rows": rows})
    return 0 if ok else 1


def cmd_report(args) -> int:
    rep = _load_json(args.input)
    checks = rep.get("checks", [])
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']:<28} value={c.get('value')} bound={c.get('bound')}")
    ok = bool(checks) and all(c["pass"] for c in checks)
    print(f"overall: {'PASS' if ok else 'FAIL'} ({rep.get('status', '-')})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sync-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario and verify it")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--graph", help="graph JSON, overrides the scenario's graph")
    p.add_argument("--seed", type=int)
    p.add_argument("--csv", help="trajectory CSV output path")
    p.add_argument("--report", help="report JSON output path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decompose", help="print the layer hierarchy of a graph")
    p.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("check-conditions", help="evaluate the coupling/frustration constraints")
    p.add_argument("--graph", required=True)
    p.add_argument("--omega", required=True, help="JSON list of natural frequencies")
    p.add_argument("--alpha", default="auto", help="frustration in radians, or 'auto'")
    p.add_argument("--K", type=float)
    p.add_argument("--dinf", type=float)
    p.add_argument("--d0", type=float, default=0.9 * math.pi, help="initial phase diameter")
    p.set_defaults(func=cmd_check_conditions)

    p = sub.add_parser("check-lemma31", help="randomised falsification of the sine-chain inequality")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float, default=math.pi / 2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--batch", type=int, default=2000)
    p.add_argument("--graph", help="fixed strongly connected layer instead of random ones")
    p.set_defaults(func=cmd_check_lemma31)

    p = sub.add_parser("sweep", help="cartesian parameter sweep")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarise a saved report JSON")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SyncLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
