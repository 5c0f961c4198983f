"""Sufficient-condition arithmetic and trajectory-level verification.

Given the initial diameter D0, the network size N, the hierarchy depth d and
the frequency spread D(Omega), the constants (zeta, gamma, eta, beta, c) fix a
single amplification factor

    X = (1 + (d+1) zeta/(zeta - D0)) * c * [4(2N+1)c]^d / (beta^(d+1) Dinf)

and every frustration/coupling requirement collapses to
``X * (D(Omega)/(K cos a) + 2N tan a) < 1`` together with ``Dinf + a < pi/2``.
The constants are astronomically conservative; nothing here tries to sharpen
them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .combo import QTrace, falling_factorial, q_trace
from .dynamics import SystemParams, Trajectory
from .errors import (
    DegenerateData,
    DegenerateParameters,
    Infeasible,
    InsufficientSamples,
    InvalidConfig,
    InvalidInitialDiameter,
    PreconditionViolated,
)
from .graph import NodeDecomposition

__all__ = [
    "FrameworkParams",
    "AdmissibleRegion",
    "Check",
    "Report",
    "MonitorResult",
    "DecayFit",
    "derive_params",
    "combo_constant",
    "admissible_region",
    "k_min_by_bisection",
    "tol_fd",
    "growth_bound_check",
    "sandwich_check",
    "monitor_q_inequality",
    "verify_theorem",
    "fit_frequency_decay",
]


def combo_constant(N: int, eta: float, gamma: float) -> float:
    """c = (sum_{j=1}^{N-1} eta^j A(2N, j) + 1) * gamma / sin(gamma)."""
    total = math.fsum(eta**j * falling_factorial(2 * N, j) for j in range(1, N))
    return (total + 1.0) * gamma / math.sin(gamma)


@dataclass(frozen=True)
class FrameworkParams:
    N: int
    d: int
    D0: float
    zeta: float
    gamma: float
    eta: float
    beta: float
    c: float
    dinf: float
    domega: float
    n0: int
    c0: float  # same constant built from the size of the root layer alone

    def target(self, k: int) -> float:
        """Small-diameter target for the first k+1 layers; equals Dinf at k = d."""
        m = self.d - k
        return self.beta**m * self.dinf / (4 * (2 * self.N + 1) * self.c) ** m

    @property
    def targets(self) -> np.ndarray:
        return np.array([self.target(k) for k in range(self.d + 1)])

    def to_json(self) -> dict:
        out = asdict(self)
        out["targets"] = self.targets.tolist()
        return out


def derive_params(
    D0: float,
    N: int,
    d: int,
    domega: float,
    zeta: float | None = None,
    gamma: float | None = None,
    eta: float | None = None,
    dinf: float | None = None,
    n0: int | None = None,
) -> FrameworkParams:
    """Pick (or validate) zeta, gamma, eta and compute beta, c and Dinf.

    Defaults: zeta = D0 + 0.45(pi - D0), gamma = D0 + 0.95(pi - D0),
    eta = 1.05 * max(1/sin gamma, 2/(1 - zeta/gamma)),
    Dinf = min(0.5, 0.9 * min(pi/2, zeta)).
    """
    D0 = float(D0)
    if not (math.isfinite(D0) and 0.0 <= D0 < math.pi):
        raise InvalidInitialDiameter(f"initial diameter must lie in [0, pi), got {D0}")
    if N < 1 or not 0 <= d < N:
        raise InvalidConfig(f"need N >= 1 and 0 <= d < N, got N={N}, d={d}")
    if not (math.isfinite(domega) and domega >= 0):
        raise InvalidConfig(f"frequency diameter must be finite and >= 0, got {domega}")
    n0 = N if n0 is None else int(n0)
    zeta = D0 + 0.9 * (math.pi - D0) / 2 if zeta is None else float(zeta)
    gamma = D0 + 0.95 * (math.pi - D0) if gamma is None else float(gamma)
    if not D0 < zeta < gamma < math.pi:
        if zeta <= D0 or gamma <= zeta:
            raise DegenerateParameters(
                f"no room between D0={D0!r}, zeta={zeta!r}, gamma={gamma!r}; D0 is too close to pi"
            )
        raise InvalidConfig(f"need D0 < zeta < gamma < pi, got {D0}, {zeta}, {gamma}")
    eta_floor = max(1.0 / math.sin(gamma), 2.0 / (1.0 - zeta / gamma))
    eta = 1.05 * eta_floor if eta is None else float(eta)
    if not math.isfinite(eta):
        raise DegenerateParameters(f"eta is not representable (floor {eta_floor!r})")
    if not eta > eta_floor:
        raise InvalidConfig(f"eta={eta} must exceed max(1/sin gamma, 2/(1 - zeta/gamma))={eta_floor:.6g}")
    beta = 1.0 - 2.0 / eta
    if not (0.0 < beta < 1.0 and zeta / beta < gamma):
        raise DegenerateParameters(f"beta={beta!r} violates zeta/beta < gamma")
    try:
        c = combo_constant(N, eta, gamma)
        c0 = combo_constant(n0, eta, gamma)
    except OverflowError as exc:
        raise DegenerateParameters(f"constant c overflows for N={N}, eta={eta}") from exc
    if not (math.isfinite(c) and c > 0):
        raise DegenerateParameters(f"constant c is not representable for N={N}, eta={eta}")
    dinf = min(0.5, 0.9 * min(math.pi / 2, zeta)) if dinf is None else float(dinf)
    if not 0.0 < dinf < math.pi / 2:
        raise InvalidConfig(f"Dinf must lie in (0, pi/2), got {dinf}")
    return FrameworkParams(N, d, D0, zeta, gamma, eta, beta, c, dinf, float(domega), n0, c0)


@dataclass(frozen=True)
class AdmissibleRegion:
    fp: FrameworkParams
    X: float
    alpha_max: float

    @property
    def lead(self) -> float:
        fp = self.fp
        return 1.0 + (fp.d + 1) * fp.zeta / (fp.zeta - fp.D0)

    def k_min(self, alpha: float) -> float:
        """Smallest admissible coupling (strict: K must exceed it); inf past alpha_max."""
        if not 0.0 <= alpha < self.alpha_max:
            return math.inf
        fp = self.fp
        room = 1.0 - 2 * fp.N * self.X * math.tan(alpha)
        return self.X * fp.domega / (math.cos(alpha) * room)

    def lines(self, K: float, alpha: float) -> dict[str, float]:
        """Left-hand sides of the original constraints; each must stay below its bound."""
        fp = self.fp
        return {
            "tan_alpha": math.tan(alpha),
            "tan_alpha_bound": 1.0 / (2 * fp.N * self.X),
            "dinf_plus_alpha": fp.dinf + alpha,
            "coupling_line": self.X * (fp.domega / (K * math.cos(alpha)) + 2 * fp.N * math.tan(alpha))
            if K > 0
            else math.inf,
        }

    def is_admissible(self, K: float, alpha: float) -> bool:
        ln = self.lines(K, alpha)
        return (
            alpha >= 0
            and ln["tan_alpha"] < ln["tan_alpha_bound"]
            and ln["dinf_plus_alpha"] < math.pi / 2
            and ln["coupling_line"] < 1.0
        )

    def drift(self, K: float, alpha: float) -> float:
        return self.fp.domega + 2 * self.fp.N * K * math.sin(alpha)

    def tbar(self, K: float, alpha: float) -> float:
        b = self.drift(K, alpha)
        return math.inf if b == 0 else (self.fp.zeta - self.fp.D0) / b

    def tk_bounds(self, K: float, alpha: float) -> np.ndarray:
        fp = self.fp
        gain = K * math.cos(alpha) * self.lead / self.X - self.drift(K, alpha)
        k = np.arange(fp.d + 1)
        if gain <= 0:
            return np.full(fp.d + 1, math.inf)
        return (k + 1) * fp.zeta / gain

    def to_json(self, K: float | None = None, alpha: float | None = None) -> dict:
        out = {"X": self.X, "alpha_max": self.alpha_max}
        if alpha is not None:
            out["K_min"] = self.k_min(alpha)
            if K is not None:
                out["tbar"] = self.tbar(K, alpha)
                out["tk_bounds"] = self.tk_bounds(K, alpha).tolist()
                out["admissible"] = self.is_admissible(K, alpha)
        return out


def admissible_region(fp: FrameworkParams) -> AdmissibleRegion:
    lead = 1.0 + (fp.d + 1) * fp.zeta / (fp.zeta - fp.D0)
    with np.errstate(over="ignore"):
        X = float(
            np.float64(lead) * fp.c * np.float64(4 * (2 * fp.N + 1) * fp.c) ** fp.d
            / (fp.beta ** (fp.d + 1) * fp.dinf)
        )
    if not math.isfinite(X):
        raise Infeasible("amplification factor X overflows; no positive frustration is representable")
    alpha_max = min(math.atan(1.0 / (2 * fp.N * X)), math.pi / 2 - fp.dinf)
    if not alpha_max > 0:
        raise Infeasible(f"no positive frustration is admissible (alpha_max={alpha_max})")
    return AdmissibleRegion(fp, X, alpha_max)


def k_min_by_bisection(region: AdmissibleRegion, alpha: float, iters: int = 200) -> float:
    """Threshold of the implicit coupling line found by bisection on log K."""
    if not 0.0 <= alpha < region.alpha_max:
        return math.inf
    fp = region.fp
    if fp.domega == 0:
        return 0.0

    def ok(K):
        return region.X * (fp.domega / (K * math.cos(alpha)) + 2 * fp.N * math.tan(alpha)) < 1.0

    lo, hi = 1.0, 1.0
    while not ok(hi):
        hi *= 2.0
    while ok(lo):
        if lo / 2.0 == 0.0:
            return lo
        lo /= 2.0
    for _ in range(iters):
        mid = math.exp(0.5 * (math.log(lo) + math.log(hi)))
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi / lo - 1 < 1e-15:
            break
    return hi


def tol_fd(K: float, N: int, domega: float, dt_sample: float) -> float:
    """Finite-difference allowance 10 * (K N + D(Omega)) * dt_sample (dimensionless)."""
    return 10.0 * (K * N + domega) * dt_sample


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float | None
    bound: float | None
    note: str = ""

    def to_json(self) -> dict:
        out = {"name": self.name, "pass": bool(self.passed), "value": _num(self.value), "bound": _num(self.bound)}
        if self.note:
            out["note"] = self.note
        return out


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


@dataclass
class Report:
    checks: list[Check] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name, passed, value=None, bound=None, note="") -> Check:
        chk = Check(name, bool(passed), value, bound, note)
        self.checks.append(chk)
        return chk

    def extend(self, other: "Report") -> None:
        self.checks.extend(other.checks)
        self.info.update(other.info)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"pass": self.passed, "checks": [c.to_json() for c in self.checks], **self.info}


def _first_entry(values: np.ndarray, bound: float) -> tuple[int | None, bool]:
    """Index of the first sample at or below ``bound`` and whether it stays there."""
    below = values <= bound
    if not below.any():
        return None, False
    s = int(np.argmax(below))
    return s, bool(below[s:].all())


def growth_bound_check(traj: Trajectory, fp: FrameworkParams, p: SystemParams, tol: float) -> Check:
    """Diameter grows at most linearly, D(t) <= D(0) + (D(Omega) + 2NK sin a) t, while D <= zeta."""
    D = traj.D
    above = np.nonzero(D > fp.zeta)[0]
    stop = int(above[0]) if above.size else D.size
    bound = D[0] + (p.omega_diameter + 2 * fp.N * p.K * math.sin(p.alpha)) * (traj.t[:stop] - traj.t[0])
    excess = float((D[:stop] - bound).max()) if stop else -math.inf
    return Check("growth_bound", excess <= tol, excess, tol)


def sandwich_check(qt: QTrace, Dk: np.ndarray, beta: float, slack: float = 1e-10) -> Check:
    """beta * D_k <= Q^k <= D_k at every sample and every k."""
    lower = float((beta * Dk - qt.Q).max())
    upper = float((qt.Q - Dk).max())
    worst = max(lower, upper)
    return Check("sandwich", worst <= slack, worst, slack)


@dataclass(frozen=True)
class MonitorResult:
    k: int
    form: str
    max_residual: float
    max_ratio: float
    tol: float
    passed: bool

    def check(self) -> Check:
        return Check(f"q_inequality_{self.form}_{self.k}", self.passed, self.max_ratio, self.tol)


def monitor_q_inequality(
    traj: Trajectory,
    decomp: NodeDecomposition,
    fp: FrameworkParams,
    p: SystemParams,
    k: int,
    qt: QTrace | None = None,
    form: str = "layered",
) -> MonitorResult:
    """Forward-difference check of dQ^k/dt <= R^k along the samples.

    ``R^k = D(Omega) + 2NK sin a + (2N+1) K cos a D_{k-1} - (K cos a / c) Q^k``
    (``D_{-1} = 0``).  With ``form="root"`` and k = 0 the root-layer version is
    used instead: its coefficients, constant and size come from layer 0 alone.

    A finite difference over a sample interval h misses the derivative by up to
    ``h/2 * sup|Q''|``, and ``|Q''|`` scales like ``L^2 * D`` with ``L = K N + D(Omega)``.
    The residual is therefore reported in units of ``L * D`` (``max_ratio``) and
    compared with the dimensionless allowance ``tol_fd = 10 L h``.
    """
    if len(traj) < 2:
        raise InsufficientSamples("need at least two samples for a finite difference")
    if traj.Dk is None:
        raise InvalidConfig("trajectory lacks per-layer diameters; integrate with a decomposition")
    if not 0 <= k <= decomp.d:
        raise ValueError(f"k must lie in [0, {decomp.d}], got {k}")
    K, a = p.K, p.alpha
    if form == "root":
        if k != 0:
            raise ValueError("the root-layer form only exists for k = 0")
        layer = NodeDecomposition(len(decomp.layers[0]), (tuple(range(len(decomp.layers[0]))),), ((),))
        rel = traj.theta_rel[:, list(decomp.layers[0])]
        Q = q_trace(rel, layer, fp.eta, "strongly_connected_N0").Q[:, 0]
        om = p.omega[list(decomp.layers[0])]
        n_eff, c, dom, Dprev = layer.n, fp.c0, float(om.max() - om.min()), 0.0
    elif form == "layered":
        qt = qt if qt is not None else q_trace(traj.theta_rel, decomp, fp.eta)
        Q = qt.Q[:, k]
        n_eff, c, dom = fp.N, fp.c, p.omega_diameter
        Dprev = traj.Dk[:, k - 1] if k > 0 else 0.0
    else:
        raise InvalidConfig(f"unknown monitor form {form!r}")
    R = dom + 2 * n_eff * K * math.sin(a) + (2 * n_eff + 1) * K * math.cos(a) * Dprev - (K * math.cos(a) / c) * Q
    R = np.broadcast_to(R, Q.shape)
    h = np.diff(traj.t)
    dQ = np.diff(Q) / h
    r = dQ - R[:-1]
    L = K * fp.N + p.omega_diameter
    scale = L * np.maximum(traj.D[:-1], traj.D[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(scale > 0, r / scale, np.where(r > 0, np.inf, 0.0))
    tol = tol_fd(K, fp.N, p.omega_diameter, float(h.max()))
    worst = float(ratio.max())
    return MonitorResult(k, form, float(r.max()), worst, tol, worst <= tol)


def verify_theorem(
    fp: FrameworkParams,
    region: AdmissibleRegion,
    traj: Trajectory,
    decomp: NodeDecomposition,
    p: SystemParams,
    qt: QTrace | None = None,
) -> Report:
    """Synchronisation claims along a trajectory run inside the admissible region."""
    K, a = p.K, p.alpha
    if not 0 <= a < region.alpha_max:
        raise PreconditionViolated(f"alpha={a} not below alpha_max={region.alpha_max}")
    kmin = region.k_min(a)
    if not (K >= kmin * (1 - 1e-12) and K > 0):
        raise PreconditionViolated(f"K={K} below K_min={kmin}")
    if traj.Dk is None:
        raise InvalidConfig("trajectory lacks per-layer diameters")
    if not traj.D[0] < math.pi:
        raise PreconditionViolated("initial configuration is not inside a half circle")

    rep = Report()
    t = traj.t
    tbar = region.tbar(K, a)
    s_star, stays = _first_entry(traj.D, fp.dinf)
    t_star = None if s_star is None else float(t[s_star])
    rep.info["t_star"] = t_star
    rep.info["tbar"] = tbar
    rep.add("t_star_exists", s_star is not None, t_star, None)
    rep.add("stays_below_dinf", stays, float(traj.D[s_star:].max()) if s_star is not None else None, fp.dinf)
    rep.add("t_star_before_tbar", t_star is not None and t_star <= tbar, t_star, tbar)

    early = t < tbar
    rep.add("half_circle", bool((traj.D[early] < fp.zeta).all()), float(traj.D[early].max()), fp.zeta)

    bounds = region.tk_bounds(K, a)
    entries = []
    for k in range(decomp.d + 1):
        target = fp.target(k)
        s_k, stay_k = _first_entry(traj.Dk[:, k], target)
        tk = None if s_k is None else float(t[s_k])
        entries.append(tk)
        rep.add(f"layer_target_{k}", s_k is not None and stay_k and tk <= bounds[k], tk, float(bounds[k]),
                note=f"target {target:.6g}")
    rep.info["t_k"] = entries
    return rep


@dataclass(frozen=True)
class DecayFit:
    C1: float
    C2: float
    r2: float
    t_from: float
    t_to: float
    n_points: int

    @property
    def passed(self) -> bool:
        return self.C2 > 0 and self.r2 >= 0.95


def fit_frequency_decay(traj: Trajectory, t_star: float, floor: float = 1e-12) -> DecayFit:
    """Least-squares line through log D(omega) after t_star.

    Window: from ``t_star + 0.1 (t_end - t_star)`` up to the last sample whose
    frequency diameter still exceeds ``floor``.
    """
    Dw = traj.D_omega
    t = traj.t
    after = t > t_star
    if after.any() and not (Dw[after] > 0).any():
        raise DegenerateData("frequency diameter is identically zero after t_star")
    start = t_star + 0.1 * (t[-1] - t_star)
    alive = np.nonzero(Dw > floor)[0]
    if alive.size == 0:
        raise DegenerateData("frequency diameter already below the fitting floor")
    stop = t[alive[-1]]
    sel = (t >= start) & (t <= stop) & (Dw > 0)
    if sel.sum() < 3:
        raise InsufficientSamples(f"only {int(sel.sum())} samples in the decay window")
    x, y = t[sel] - t_star, np.log(Dw[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(math.exp(intercept), -float(slope), r2, float(t[sel][0]), float(t[sel][-1]), int(sel.sum()))
