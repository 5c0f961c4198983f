"""Frustrated Kuramoto flow on a digraph and its numerical integration.

    dtheta_i/dt = Omega_i + K * sum_{j in N_i} sin(theta_j - theta_i + alpha)

Phases live on the real line (never reduced mod 2*pi).  The vector field only
sees phase differences, so the integrator carries the state as a common
offset plus a centred residual ``theta_rel``; after every step the mean of the
residual is moved into the offset.  Diameters and every derived quantity are
computed from ``theta_rel``, which keeps differences far below 1e-16
resolvable once the ensemble has collapsed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, NonFinite
from .graph import Digraph, NodeDecomposition

__all__ = [
    "SystemParams",
    "SolverConfig",
    "Trajectory",
    "rhs",
    "frequency",
    "rhs_second_order",
    "integrate",
    "diameters",
    "default_dt_max",
    "trajectory_csv",
    "read_trajectory_csv",
]


@dataclass(frozen=True)
class SystemParams:
    omega: np.ndarray
    K: float
    alpha: float

    def __post_init__(self) -> None:
        omega = np.array(self.omega, dtype=np.float64).reshape(-1)
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "K", float(self.K))
        object.__setattr__(self, "alpha", float(self.alpha))
        if not np.all(np.isfinite(omega)):
            raise InvalidConfig("natural frequencies must be finite")
        if not (self.K >= 0.0 and math.isfinite(self.K)):
            raise InvalidConfig(f"coupling K must be finite and >= 0, got {self.K}")
        if not (0.0 <= self.alpha < math.pi / 2):
            raise InvalidConfig(f"frustration alpha must lie in [0, pi/2), got {self.alpha}")

    @property
    def n(self) -> int:
        return self.omega.size

    @property
    def omega_diameter(self) -> float:
        return float(self.omega.max() - self.omega.min())


def _check(g: Digraph, p: SystemParams, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (g.n,) or p.n != g.n:
        raise DimensionMismatch(
            f"graph has {g.n} vertices, omega has {p.n}, theta has shape {theta.shape}"
        )
    return theta


def _coupling(chi: np.ndarray, theta: np.ndarray, alpha: float, fn=np.sin) -> np.ndarray:
    diff = theta[None, :] - theta[:, None] + alpha
    return (chi * fn(diff)).sum(axis=1)


def rhs(g: Digraph, p: SystemParams, theta) -> np.ndarray:
    theta = _check(g, p, theta)
    return p.omega + p.K * _coupling(g.adjacency, theta, p.alpha)


def frequency(g: Digraph, p: SystemParams, theta) -> np.ndarray:
    """Instantaneous frequencies omega_i = dtheta_i/dt."""
    return rhs(g, p, theta)


def rhs_second_order(g: Digraph, p: SystemParams, theta, omega) -> np.ndarray:
    """d(omega_i)/dt = K sum_j cos(theta_j - theta_i + alpha) (omega_j - omega_i)."""
    theta = _check(g, p, theta)
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != theta.shape:
        raise DimensionMismatch(f"omega shape {omega.shape} != theta shape {theta.shape}")
    w = g.adjacency * np.cos(theta[None, :] - theta[:, None] + p.alpha)
    return p.K * (w @ omega - w.sum(axis=1) * omega)


def default_dt_max(g: Digraph, p: SystemParams, c_step: float = 0.1) -> float:
    return c_step / (p.K * g.n + float(np.abs(p.omega).max()) + 1.0)


def diameters(decomp: NodeDecomposition, theta) -> tuple[float, np.ndarray]:
    """Whole-ensemble diameter and the nested diameters D_0 <= ... <= D_d."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-1] != decomp.n:
        raise DimensionMismatch(f"expected {decomp.n} phases, got {theta.shape[-1]}")
    hi = np.array([theta[..., list(layer)].max(axis=-1) for layer in decomp.layers])
    lo = np.array([theta[..., list(layer)].min(axis=-1) for layer in decomp.layers])
    dk = np.maximum.accumulate(hi, axis=0) - np.minimum.accumulate(lo, axis=0)
    dk = np.moveaxis(dk, 0, -1)
    return dk[..., -1], dk


@dataclass(frozen=True)
class SolverConfig:
    method: Literal["rk4", "dopri5"] = "rk4"
    dt: float | None = None  # rk4 step; defaults to dt_max
    c_step: float = 0.1
    atol: float = 1e-10
    rtol: float = 1e-8
    n_samples: int = 256
    max_steps: int = 5_000_000

    def __post_init__(self) -> None:
        if self.method not in ("rk4", "dopri5"):
            raise InvalidConfig(f"unknown solver method {self.method!r}")
        if self.n_samples < 2:
            raise InvalidConfig("need at least two samples")
        if self.dt is not None and not self.dt > 0:
            raise InvalidConfig("dt must be positive")

    @classmethod
    def from_dict(cls, obj: dict | None) -> "SolverConfig":
        obj = dict(obj or {})
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfig(f"unknown solver options {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution.  ``theta = offset[:, None] + theta_rel``."""

    t: np.ndarray
    offset: np.ndarray
    theta_rel: np.ndarray
    omega: np.ndarray
    D: np.ndarray
    Dk: np.ndarray | None = None
    dt: float = 0.0
    n_steps: int = 0
    n_rejected: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def theta(self) -> np.ndarray:
        return self.offset[:, None] + self.theta_rel

    @property
    def D_omega(self) -> np.ndarray:
        return self.omega.max(axis=1) - self.omega.min(axis=1)

    def __len__(self) -> int:
        return self.t.size


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4) tableau
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array((35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0))
_DP_B4 = np.array(
    (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
)


def _dopri_step(f, y, h):
    ks = []
    for i in range(7):
        yi = y
        for a, k in zip(_DP_A[i], ks):
            yi = yi + h * a * k
        ks.append(f(yi))
    ks = np.array(ks)
    y5 = y + h * (_DP_B5 @ ks)
    err = h * ((_DP_B5 - _DP_B4) @ ks)
    return y5, err


def integrate(
    g: Digraph,
    p: SystemParams,
    theta0,
    t_end: float,
    cfg: SolverConfig | None = None,
    decomp: NodeDecomposition | None = None,
) -> Trajectory:
    """Integrate from ``theta0`` on [0, t_end], sampling ``cfg.n_samples`` equispaced times."""
    cfg = cfg or SolverConfig()
    theta0 = _check(g, p, theta0)
    if not (t_end > 0 and math.isfinite(t_end)):
        raise InvalidConfig(f"t_end must be positive and finite, got {t_end}")
    if not np.all(np.isfinite(theta0)):
        raise NonFinite("initial phases contain non-finite values")

    chi = g.adjacency.astype(np.float64)
    omega_nat, K, alpha = p.omega, p.K, p.alpha

    def f(y):
        return omega_nat + K * _coupling(chi, y, alpha)

    times = np.linspace(0.0, t_end, cfg.n_samples)
    dt_max = default_dt_max(g, p, cfg.c_step)

    offset = float(theta0.mean())
    y = theta0 - offset
    out_off = np.empty(cfg.n_samples)
    out_rel = np.empty((cfg.n_samples, g.n))
    out_off[0], out_rel[0] = offset, y
    n_steps = n_rej = 0

    def recentre(y, offset):
        m = float(y.mean())
        return y - m, offset + m

    if cfg.method == "rk4":
        h_target = dt_max if cfg.dt is None else cfg.dt
        if h_target > dt_max * (1 + 1e-12):
            raise InvalidConfig(f"dt={h_target:.3g} exceeds dt_max={dt_max:.3g}")
        span = t_end / (cfg.n_samples - 1)
        m = max(1, math.ceil(span / h_target - 1e-9))
        dt_used = span / m
        for s in range(1, cfg.n_samples):
            h = (times[s] - times[s - 1]) / m
            for _ in range(m):
                y, offset = recentre(_rk4_step(f, y, h), offset)
            n_steps += m
            if not (np.all(np.isfinite(y)) and math.isfinite(offset)):
                raise NonFinite(f"non-finite state at t={times[s]:.6g}")
            out_off[s], out_rel[s] = offset, y
    else:
        h = min(dt_max, t_end / (cfg.n_samples - 1))
        dt_used = 0.0
        t = 0.0
        for s in range(1, cfg.n_samples):
            target = times[s]
            while t < target:
                step = min(h, target - t)
                y_new, err = _dopri_step(f, y, step)
                scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
                enorm = float(np.sqrt(np.mean((err / scale) ** 2)))
                if not math.isfinite(enorm):
                    raise NonFinite(f"non-finite error estimate at t={t:.6g}")
                factor = 5.0 if enorm == 0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))
                if enorm <= 1.0:
                    t = target if step >= target - t else t + step
                    y, offset = recentre(y_new, offset)
                    n_steps += 1
                    dt_used = max(dt_used, step)
                else:
                    n_rej += 1
                h = min(step * factor, 100 * dt_max)
                if n_steps + n_rej > cfg.max_steps:
                    raise NonFinite(f"step budget exhausted at t={t:.6g}")
            out_off[s], out_rel[s] = offset, y

    omega = np.array([f(row) for row in out_rel])
    if decomp is not None:
        D, Dk = diameters(decomp, out_rel)
    else:
        D, Dk = out_rel.max(axis=1) - out_rel.min(axis=1), None
    return Trajectory(
        t=times,
        offset=out_off,
        theta_rel=out_rel,
        omega=omega,
        D=D,
        Dk=Dk,
        dt=float(dt_used),
        n_steps=n_steps,
        n_rejected=n_rej,
        meta={"method": cfg.method, "t_end": float(t_end)},
    )


def trajectory_csv(traj: Trajectory, Q: np.ndarray | None = None) -> str:
    """CSV text: t, theta_*, omega_*, D, D_0..D_d, Q_0..Q_d (17 significant digits)."""
    n = traj.theta_rel.shape[1]
    Dk = traj.Dk if traj.Dk is not None else traj.D[:, None]
    header = (
        ["t"]
        + [f"theta_{i + 1}" for i in range(n)]
        + [f"omega_{i + 1}" for i in range(n)]
        + ["D"]
        + [f"D_{k}" for k in range(Dk.shape[1])]
        + ([f"Q_{k}" for k in range(Q.shape[1])] if Q is not None else [])
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    theta = traj.theta
    for s in range(len(traj)):
        row = [traj.t[s], *theta[s], *traj.omega[s], traj.D[s], *Dk[s]]
        if Q is not None:
            row.extend(Q[s])
        w.writerow(["%.17g" % v for v in row])
    return buf.getvalue()


def read_trajectory_csv(source: str | Path) -> dict[str, np.ndarray]:
    """Reload an exported trajectory as named column blocks."""
    text = Path(source).read_text() if isinstance(source, Path) or (
        isinstance(source, str) and "\n" not in source
    ) else source
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], np.array(rows[1:], dtype=np.float64)

    def block(prefix: str) -> np.ndarray:
        cols = [k for k, h in enumerate(header) if h.startswith(prefix) and h[len(prefix):].isdigit()]
        return body[:, cols]

    return {
        "t": body[:, header.index("t")],
        "theta": block("theta_"),
        "omega": block("omega_"),
        "D": body[:, header.index("D")],
        "Dk": block("D_"),
        "Q": block("Q_"),
    }
