import itertools
import math

import numpy as np
import pytest

from sync_lab.graph import Digraph

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


# ---- brute-force graph oracles -------------------------------------------

def reach_matrix(g: Digraph) -> np.ndarray:
    """R[a, b] = True iff b is reachable from a (reflexive), Floyd-Warshall style."""
    R = np.eye(g.n, dtype=bool)
    for j, i in g.arcs:
        R[j, i] = True
    for m in range(g.n):
        R |= R[:, m:m + 1] & R[m:m + 1, :]
    return R


def oracle_sccs(g: Digraph) -> set[frozenset[int]]:
    R = reach_matrix(g)
    mutual = R & R.T
    return {frozenset(np.nonzero(mutual[v])[0].tolist()) for v in range(g.n)}


def oracle_sources(g: Digraph) -> set[frozenset[int]]:
    out = set()
    for comp in oracle_sccs(g):
        if not any(i in comp and j not in comp for j, i in g.arcs):
            out.add(comp)
    return out


def oracle_spanning_tree(g: Digraph) -> bool:
    return bool(reach_matrix(g).all(axis=1).any())


def all_digraphs(n: int):
    pairs = [(j, i) for j in range(n) for i in range(n) if i != j]
    for mask in itertools.product((0, 1), repeat=len(pairs)):
        yield Digraph(n, frozenset(p for p, b in zip(pairs, mask) if b))


def random_digraph(rng: np.random.Generator, n: int, p: float) -> Digraph:
    m = rng.random((n, n)) < p
    np.fill_diagonal(m, False)
    return Digraph.from_adjacency(m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_oscillator_lock(domega: float, K: float, alpha: float) -> float:
    """Locked difference delta* with 2 K cos(a) sin(delta*) = domega, by bisection."""
    target = domega / (2 * K * math.cos(alpha))
    lo, hi = 0.0, math.pi / 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.sin(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
