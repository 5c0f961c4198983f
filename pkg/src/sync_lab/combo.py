"""Ordered convex combinations of a layer's phases and the functionals Q^k.

For each layer the phases are sorted ascending and two chains of convex
combinations are built:

* downward: ``top_l = (abar_l * top_{l+1} + theta_l) / (abar_l + 1)`` starting
  from the largest phase, ending at ``top_1`` (the layer's upper barycentre);
* upward: ``bot_{l+1} = (aunder_{l+1} * bot_l + theta_{l+1}) / (aunder_{l+1} + 1)``
  starting from the smallest phase, ending at ``bot_{N_k}``.

The weights grow like ``eta**j * n!/(n-j)!``, so both barycentres hug the
layer's extremes and ``Q^k = max_{i<=k} top_i - min_{i<=k} bot_i`` is squeezed
between ``(1 - 2/eta) * D_k`` and ``D_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, NonFinite, PreconditionViolated
from .graph import Digraph, NodeDecomposition

__all__ = [
    "ComboCoefficients",
    "QTrace",
    "falling_factorial",
    "coefficients",
    "closed_form_coefficients",
    "layer_coefficients",
    "order_layer",
    "barycenters",
    "q_quantity",
    "q_trace",
    "classify_case",
    "sine_chain_check",
    "layer_sine_chain_check",
    "sine_chain_violations",
]

Mode = Literal["strongly_connected_N0", "general_N"]

# exact cross-check is skipped beyond this size (big rationals get slow)
_EXACT_CHECK_MAX = 64


def falling_factorial(n: int, j: int) -> int:
    """A(n, j) = n!/(n-j)!, exact."""
    if j < 0 or n < 0 or j > n:
        raise ValueError(f"need 0 <= j <= n, got n={n}, j={j}")
    return math.perm(n, j)


@dataclass(frozen=True)
class ComboCoefficients:
    """``abar[l-1]`` and ``aunder[l-1]`` hold the weights for position l = 1..N_k."""

    size: int
    n_total: int
    eta: float
    mode: str
    abar: np.ndarray
    aunder: np.ndarray

    @property
    def top_weight_sum(self) -> float:
        return float(self.abar[0])


def _effective_n(N: int, N_k: int, mode: str) -> int:
    if mode == "strongly_connected_N0":
        return N_k
    if mode == "general_N":
        return N
    raise InvalidConfig(f"unknown coefficient mode {mode!r}")


def _recursion(n: int, size: int, eta):
    one = eta ** 0
    abar = [0 * one] * size
    for l in range(size, 1, -1):
        abar[l - 2] = eta * (2 * n - l + 2) * (abar[l - 1] + 1)
    aunder = [0 * one] * size
    for l in range(1, size):
        aunder[l] = eta * (l + 1 + 2 * n - size) * (aunder[l - 1] + 1)
    return abar, aunder


def closed_form_coefficients(N: int, N_k: int, eta, mode: Mode = "general_N"):
    """Falling-factorial sums; exact when ``eta`` is an int or Fraction."""
    n = _effective_n(N, N_k, mode)
    abar = [0 * eta] * N_k
    aunder = [0 * eta] * N_k
    for l in range(2, N_k + 1):
        abar[l - 2] = sum(eta**j * falling_factorial(2 * n - l + 2, j) for j in range(1, N_k - l + 2))
    for l in range(1, N_k):
        aunder[l] = sum(eta**j * falling_factorial(l + 1 + 2 * n - N_k, j) for j in range(1, l + 1))
    return abar, aunder


def coefficients(N: int, N_k: int, eta: float, mode: Mode = "general_N") -> ComboCoefficients:
    if not eta > 1:
        raise InvalidConfig(f"eta must exceed 1, got {eta}")
    if not 1 <= N_k <= N:
        raise InvalidConfig(f"need 1 <= N_k <= N, got N_k={N_k}, N={N}")
    n = _effective_n(N, N_k, mode)
    abar, aunder = _recursion(n, N_k, float(eta))
    abar, aunder = np.array(abar, dtype=np.float64), np.array(aunder, dtype=np.float64)
    if not (np.all(np.isfinite(abar)) and np.all(np.isfinite(aunder))):
        raise NonFinite(f"coefficients overflow for N={N}, N_k={N_k}, eta={eta}")
    if n <= _EXACT_CHECK_MAX:
        q = Fraction(eta)
        exact_bar, exact_under = _recursion(n, N_k, q)
        closed_bar, closed_under = closed_form_coefficients(N, N_k, q, mode)
        if exact_bar != closed_bar or exact_under != closed_under:
            raise AssertionError("coefficient recursion disagrees with its closed form")
        for got, want in zip(abar, exact_bar):
            if abs(Fraction(float(got)) - want) > 8 * Fraction(math.ulp(float(want) or 1.0)):
                raise AssertionError("floating coefficient drifted from exact value")
    abar.setflags(write=False)
    aunder.setflags(write=False)
    return ComboCoefficients(N_k, N, float(eta), mode, abar, aunder)


def layer_coefficients(
    decomp: NodeDecomposition, eta: float, mode: Mode = "general_N"
) -> list[ComboCoefficients]:
    return [coefficients(decomp.n, size, eta, mode) for size in decomp.sizes]


def order_layer(theta, layer: Sequence[int]) -> tuple[int, ...]:
    """Layer vertices by ascending phase; equal phases keep ascending vertex index."""
    theta = np.asarray(theta, dtype=np.float64)
    return tuple(sorted(layer, key=lambda v: (theta[v], v)))


def barycenters(coeffs: ComboCoefficients, theta_sorted) -> tuple[np.ndarray, np.ndarray]:
    """Downward and upward convex-combination chains over ascending phases.

    Works on the last axis, so a (samples, N_k) block is handled at once.
    Returns ``(top, bot)`` with ``top[..., l-1]`` the combination of positions
    l..N_k and ``bot[..., l-1]`` that of positions 1..l.
    """
    th = np.asarray(theta_sorted, dtype=np.float64)
    if th.shape[-1] != coeffs.size:
        raise DimensionMismatch(f"expected {coeffs.size} phases, got {th.shape[-1]}")
    top = np.empty_like(th)
    bot = np.empty_like(th)
    m = coeffs.size
    top[..., m - 1] = th[..., m - 1]
    for i in range(m - 2, -1, -1):
        a = coeffs.abar[i]
        top[..., i] = (a * top[..., i + 1] + th[..., i]) / (a + 1.0)
    bot[..., 0] = th[..., 0]
    for i in range(1, m):
        a = coeffs.aunder[i]
        bot[..., i] = (a * bot[..., i - 1] + th[..., i]) / (a + 1.0)
    return top, bot


@dataclass(frozen=True)
class QValues:
    Q: np.ndarray
    top: np.ndarray
    bottom: np.ndarray


def q_quantity(decomp: NodeDecomposition, coeffs: Sequence[ComboCoefficients], theta) -> QValues:
    """Q^k for k = 0..d together with each layer's barycentres.

    ``theta`` may be a single phase vector or a (samples, N) block.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-1] != decomp.n:
        raise DimensionMismatch(f"expected {decomp.n} phases, got {theta.shape[-1]}")
    if len(coeffs) != len(decomp.layers):
        raise DimensionMismatch("one coefficient set per layer required")
    tops, bots = [], []
    for layer, cf in zip(decomp.layers, coeffs):
        if cf.size != len(layer):
            raise DimensionMismatch(f"coefficients sized {cf.size} for a layer of {len(layer)}")
        # barycentres depend on the sorted values only, not on tie labels
        top, bot = barycenters(cf, np.sort(theta[..., list(layer)], axis=-1))
        tops.append(top[..., 0])
        bots.append(bot[..., -1])
    top = np.stack(tops, axis=-1)
    bottom = np.stack(bots, axis=-1)
    Q = np.maximum.accumulate(top, axis=-1) - np.minimum.accumulate(bottom, axis=-1)
    return QValues(Q, top, bottom)


def classify_case(top, bottom, k: int):
    """Relative position of layer k+1 against the union of layers 0..k.

    1: neither running extreme comes from layer k+1
    2: both the running max of ``top`` and the running min of ``bottom`` do
    3: only the max does
    4: only the min does
    Equalities admit several labels; the lowest admissible label wins.
    """
    top = np.asarray(top, dtype=np.float64)
    bottom = np.asarray(bottom, dtype=np.float64)
    if not 0 <= k < top.shape[-1] - 1:
        raise ValueError(f"k must lie in [0, d-1], got {k}")
    prev_hi = top[..., : k + 1].max(axis=-1)
    prev_lo = bottom[..., : k + 1].min(axis=-1)
    new_hi, new_lo = top[..., k + 1], bottom[..., k + 1]
    # each side: can it be attributed to layer k+1? can it be attributed to the old union?
    hi_new_ok, hi_old_ok = new_hi >= prev_hi, new_hi <= prev_hi
    lo_new_ok, lo_old_ok = new_lo <= prev_lo, new_lo >= prev_lo
    case = np.where(
        hi_old_ok & lo_old_ok, 1,
        np.where(hi_new_ok & lo_new_ok, 2, np.where(hi_new_ok & lo_old_ok, 3, 4)),
    )
    return int(case) if case.ndim == 0 else case


@dataclass(frozen=True)
class QTrace:
    Q: np.ndarray  # (samples, d+1)
    top: np.ndarray
    bottom: np.ndarray
    cases: np.ndarray  # (samples, d), label for the pair (layers <= k, layer k+1)
    eta: float
    mode: str


def q_trace(theta_rel, decomp: NodeDecomposition, eta: float, mode: Mode = "general_N") -> QTrace:
    coeffs = layer_coefficients(decomp, eta, mode)
    qv = q_quantity(decomp, coeffs, theta_rel)
    S = qv.Q.shape[0]
    cases = np.zeros((S, decomp.d), dtype=np.int64)
    for k in range(decomp.d):
        cases[:, k] = classify_case(qv.top, qv.bottom, k)
    return QTrace(qv.Q, qv.top, qv.bottom, cases, float(eta), mode)


def _eta_ok(eta: float, gamma: float | None) -> None:
    if gamma is None:
        return
    if not 0 < gamma < math.pi:
        raise PreconditionViolated(f"gamma must lie in (0, pi), got {gamma}")
    if not eta > 1.0 / math.sin(gamma):
        raise PreconditionViolated(f"eta={eta} must exceed 1/sin(gamma)={1 / math.sin(gamma):.6g}")


def sine_chain_check(theta_sorted, neighbors, eta: float, gamma: float | None = None, tol: float = 0.0):
    """Check both weighted sine-chain inequalities on one ordered layer.

    ``theta_sorted`` is ascending; ``neighbors[i]`` holds the in-layer
    in-neighbours of position i, in position labels.  Empty min/max is 0.

    Returns ``(ok, witness)``; witness describes the first violation or is None.
    """
    th = [float(x) for x in theta_sorted]
    m = len(th)
    if len(neighbors) != m:
        raise DimensionMismatch("one neighbour set per phase required")
    if any(b < a for a, b in zip(th, th[1:])):
        raise ValueError("phases must be sorted ascending")
    if gamma is not None and m and th[-1] - th[0] >= gamma:
        raise PreconditionViolated(f"layer diameter {th[-1] - th[0]:.6g} >= gamma={gamma}")
    _eta_ok(eta, gamma)
    top = m - 1

    for n in range(m):
        lhs = 0.0
        for i in range(n, m):
            terms = [math.sin(th[j] - th[i]) for j in neighbors[i] if j <= i]
            lhs += eta ** (i - n) * (min(terms) if terms else 0.0)
        pool = [j for i in range(n, m) for j in neighbors[i]]
        kbar = min(pool) if pool else top
        rhs = math.sin(th[kbar] - th[top])
        if lhs > rhs + tol:
            return False, {"which": "upper", "n": n, "lhs": lhs, "rhs": rhs, "k": kbar}

    for n in range(m):
        lhs = 0.0
        for i in range(n + 1):
            terms = [math.sin(th[j] - th[i]) for j in neighbors[i] if j >= i]
            lhs += eta ** (n - i) * (max(terms) if terms else 0.0)
        pool = [j for i in range(n + 1) for j in neighbors[i]]
        kund = max(pool) if pool else 0
        rhs = math.sin(th[kund] - th[0])
        if lhs < rhs - tol:
            return False, {"which": "lower", "n": n, "lhs": lhs, "rhs": rhs, "k": kund}
    return True, None


def layer_sine_chain_check(g: Digraph, layer: Sequence[int], theta, eta: float, gamma=None, tol=0.0):
    """Sort a layer, relabel its internal arcs by position and run the check."""
    order = order_layer(theta, layer)
    pos = {v: p for p, v in enumerate(order)}
    nbrs = [tuple(sorted(pos[j] for j in g.neighbors[v] if j in pos)) for v in order]
    theta = np.asarray(theta, dtype=np.float64)
    return sine_chain_check(theta[list(order)], nbrs, eta, gamma, tol)


def sine_chain_violations(thetas, chi, eta: float, tol: float = 0.0) -> tuple[int, float]:
    """Vectorised falsification over many configurations of one layer.

    ``thetas`` is (M, m) in vertex labels, ``chi[i, j] = 1`` iff j influences i.
    Returns (number of violating configurations, largest violation margin).
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    chi = np.asarray(chi, dtype=bool)
    M, m = thetas.shape
    order = np.lexsort((np.broadcast_to(np.arange(m), (M, m)), thetas), axis=-1)
    th = np.take_along_axis(thetas, order, axis=1)
    A = chi[order[:, :, None], order[:, None, :]]  # A[s, p, q]: q feeds p, position labels
    diff = np.sin(th[:, None, :] - th[:, :, None])  # sin(th_q - th_p)
    pos = np.arange(m)
    below = A & (pos[None, :] <= pos[:, None])[None]
    above = A & (pos[None, :] >= pos[:, None])[None]
    mins = np.where(below, diff, np.inf).min(axis=2)
    mins = np.where(np.isfinite(mins), mins, 0.0)
    maxs = np.where(above, diff, -np.inf).max(axis=2)
    maxs = np.where(np.isfinite(maxs), maxs, 0.0)

    worst = np.full(M, -np.inf)
    acc = np.zeros(M)
    seen = np.zeros((M, m), dtype=bool)
    for n in range(m - 1, -1, -1):
        acc = mins[:, n] + eta * acc
        seen |= A[:, n, :]
        kbar = np.where(seen.any(axis=1), seen.argmax(axis=1), m - 1)
        rhs = np.sin(th[np.arange(M), kbar] - th[:, -1])
        worst = np.maximum(worst, acc - rhs)
    acc = np.zeros(M)
    seen = np.zeros((M, m), dtype=bool)
    for n in range(m):
        acc = maxs[:, n] + eta * acc
        seen |= A[:, n, :]
        kund = np.where(seen.any(axis=1), m - 1 - seen[:, ::-1].argmax(axis=1), 0)
        rhs = np.sin(th[np.arange(M), kund] - th[:, 0])
        worst = np.maximum(worst, rhs - acc)
    bad = worst > tol
    return int(bad.sum()), float(worst.max()) if M else 0.0
