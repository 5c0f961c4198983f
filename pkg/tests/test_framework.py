import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from sync_lab.combo import q_trace
from sync_lab.dynamics import SolverConfig, SystemParams, integrate
from sync_lab.errors import (
    DegenerateData,
    DegenerateParameters,
    Infeasible,
    InsufficientSamples,
    InvalidConfig,
    InvalidInitialDiameter,
    PreconditionViolated,
)
from sync_lab.framework import (
    admissible_region,
    combo_constant,
    derive_params,
    fit_frequency_decay,
    growth_bound_check,
    k_min_by_bisection,
    monitor_q_inequality,
    verify_theorem,
)
from sync_lab.graph import Digraph, node_decomposition

from conftest import two_oscillator_lock


def test_constant_c_pair_example():
    fp = derive_params(0.1, 2, 0, 0.0, zeta=0.3, gamma=math.pi / 2, eta=3.0)
    assert fp.c == pytest.approx(13 * math.pi / 2, rel=1e-15)
    assert fp.beta == pytest.approx(1 / 3)


def test_defaults_satisfy_constraints():
    for D0 in (0.0, 0.5, 1.5, 2.8, 3.1):
        fp = derive_params(D0, 4, 1, 0.3)
        assert D0 < fp.zeta < fp.gamma < math.pi
        assert fp.eta > max(1 / math.sin(fp.gamma), 2 / (1 - fp.zeta / fp.gamma))
        assert 0 < fp.beta < 1 and fp.zeta / fp.beta < fp.gamma
        assert fp.c == combo_constant(4, fp.eta, fp.gamma)


def test_initial_diameter_limits():
    with pytest.raises(InvalidInitialDiameter):
        derive_params(math.pi, 3, 0, 0.0)
    with pytest.raises(InvalidInitialDiameter):
        derive_params(float("nan"), 3, 0, 0.0)
    with pytest.raises(DegenerateParameters):
        derive_params(math.nextafter(math.pi, 0), 3, 0, 0.0)
    with pytest.raises(InvalidConfig):
        derive_params(0.5, 3, 0, 0.0, eta=1.5)
    with pytest.raises(InvalidConfig):
        derive_params(0.5, 3, 0, 0.0, dinf=2.0)


def test_frictionless_identical_oscillators_need_any_positive_coupling():
    fp = derive_params(1.0, 3, 0, 0.0)
    reg = admissible_region(fp)
    assert reg.k_min(0.0) == 0.0
    assert reg.is_admissible(1e-9, 0.0)
    assert not reg.is_admissible(0.0, 0.0)


def test_targets_increase_to_dinf():
    fp = derive_params(1.0, 4, 2, 0.3)
    t = fp.targets
    assert (np.diff(t) > 0).all() and t[-1] == fp.dinf


def test_overflowing_amplification_is_infeasible():
    fp = derive_params(2.0, 40, 30, 0.1)
    with pytest.raises(Infeasible):
        admissible_region(fp)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(0, 5), st.floats(0.0, 2.9), st.floats(0.0, 2.0), st.floats(0.0, 0.999))
@example(1, 0, 0.0, 2.2250738585072014e-308, 0.0)  # threshold far below 1e-300
def test_k_min_closed_form_vs_bisection(N, d, D0, domega, frac):
    d = d % N
    reg = admissible_region(derive_params(D0, N, d, domega))
    a = frac * reg.alpha_max
    closed, bis = reg.k_min(a), k_min_by_bisection(reg, a)
    assert closed == pytest.approx(bis, rel=1e-12, abs=0)
    # soundness: strictly above the threshold every original line holds
    if closed > 0:
        assert reg.is_admissible(closed * (1 + 1e-9), a)
        assert not reg.is_admissible(closed * (1 - 1e-9), a)
        K = closed * 1.01
        assert reg.tk_bounds(K, a)[0] < reg.tbar(K, a)


def test_root_only_reduction_matches_direct_form():
    # d = 0: K > (1 + zeta/(zeta - D0)) (D(Omega) + 2 N K sin a) c / (cos a beta Dinf)
    fp = derive_params(1.2, 3, 0, 0.4)
    reg = admissible_region(fp)
    a = 0.3 * reg.alpha_max
    lead = 1 + fp.zeta / (fp.zeta - fp.D0)

    def holds(K):
        return K > lead * (fp.domega + 2 * fp.N * K * math.sin(a)) * fp.c / (math.cos(a) * fp.beta * fp.dinf)

    lo, hi = 0.0, 1.0
    while not holds(hi):
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if holds(mid) else (mid, hi)
    assert reg.k_min(a) == pytest.approx(hi, rel=1e-12)


def test_k_min_monotone_in_alpha():
    reg = admissible_region(derive_params(1.0, 4, 1, 0.5))
    alphas = np.linspace(0, reg.alpha_max, 200, endpoint=False)
    ks = [reg.k_min(a) for a in alphas]
    assert all(b >= a for a, b in zip(ks, ks[1:]))
    assert reg.k_min(reg.alpha_max) == math.inf


def _pair_run(alpha_frac=0.0, domega=0.0, tau=40.0, n=801):
    g = Digraph.complete(2)
    dec = node_decomposition(g)
    th0 = np.array([1.0, 0.0])
    fp = derive_params(1.0, 2, 0, domega, n0=2)
    reg = admissible_region(fp)
    a = alpha_frac * reg.alpha_max
    K = 1.1 * reg.k_min(a) if reg.k_min(a) > 0 else 10.0
    p = SystemParams([domega / 2, -domega / 2], K, a)
    tr = integrate(g, p, th0, tau / K, SolverConfig(n_samples=n), decomp=dec)
    return g, dec, fp, reg, p, tr


def test_pair_decays_below_dinf_before_tbar():
    g, dec, fp, reg, p, tr = _pair_run()
    assert (np.diff(tr.D) <= 0).all()
    exact = 2 * np.arctan(math.tan(0.5) * np.exp(-2 * p.K * tr.t))
    np.testing.assert_allclose(tr.D, exact, rtol=1e-4)  # default RK4 step
    rep = verify_theorem(fp, reg, tr, dec, p)
    assert rep.passed, rep.to_json()


def test_single_oscillator_is_trivially_synchronised():
    g = Digraph(1)
    dec = node_decomposition(g)
    fp = derive_params(0.0, 1, 0, 0.0)
    reg = admissible_region(fp)
    p = SystemParams([0.7], 1.0, 0.0)
    tr = integrate(g, p, [0.3], 1.0, SolverConfig(n_samples=5), decomp=dec)
    rep = verify_theorem(fp, reg, tr, dec, p)
    assert rep.passed and rep.info["t_star"] == 0.0


def test_verify_rejects_inadmissible_runs():
    g, dec, fp, reg, p, tr = _pair_run(domega=0.2)
    weak = SystemParams(p.omega, p.K * 0.5, p.alpha)
    with pytest.raises(PreconditionViolated):
        verify_theorem(fp, reg, tr, dec, weak)
    with pytest.raises(PreconditionViolated):
        verify_theorem(fp, reg, tr, dec, SystemParams(p.omega, p.K, reg.alpha_max))


def test_monitor_on_pair_flow():
    # alpha = 0, equal frequencies: Q' <= -(K/c) Q along delta' = -2K sin(delta)
    g, dec, fp, reg, p, tr = _pair_run()
    for form in ("layered", "root"):
        res = monitor_q_inequality(tr, dec, fp, p, 0, form=form)
        assert res.passed and res.max_residual < 0


def test_monitor_on_synchronised_state():
    g = Digraph.complete(3)
    dec = node_decomposition(g)
    fp = derive_params(0.5, 3, 0, 0.0)
    p = SystemParams([0.2] * 3, 5.0, 0.0)
    tr = integrate(g, p, np.zeros(3), 1.0, SolverConfig(n_samples=20), decomp=dec)
    res = monitor_q_inequality(tr, dec, fp, p, 0)
    assert res.max_residual <= 0 and res.passed


def test_monitor_needs_two_samples():
    g, dec, fp, reg, p, tr = _pair_run(n=2)
    short = type(tr)(tr.t[:1], tr.offset[:1], tr.theta_rel[:1], tr.omega[:1], tr.D[:1], tr.Dk[:1])
    with pytest.raises(InsufficientSamples):
        monitor_q_inequality(short, dec, fp, p, 0)


def test_growth_bound_along_frustrated_run():
    g = Digraph.from_arcs(3, [(0, 1), (1, 2), (2, 0)])
    dec = node_decomposition(g)
    p = SystemParams([1.0, -1.0, 0.2], 0.3, 1.0)
    tr = integrate(g, p, [0.0, 0.4, 0.8], 3.0, SolverConfig(n_samples=300), decomp=dec)
    fp = derive_params(0.8, 3, 0, p.omega_diameter)
    chk = growth_bound_check(tr, fp, p, 1e-12)
    assert chk.passed
    assert tr.D.max() > tr.D[0]  # the bound is genuinely exercised


def test_decay_fit_pair_matches_linearisation():
    g, dec, fp, reg, p, tr = _pair_run(alpha_frac=0.5, domega=0.4, tau=30.0, n=1201)
    rep = verify_theorem(fp, reg, tr, dec, p)
    fit = fit_frequency_decay(tr, rep.info["t_star"])
    delta = two_oscillator_lock(0.4, p.K, p.alpha)
    rate = 2 * p.K * math.cos(p.alpha) * math.cos(delta)
    assert fit.passed
    assert fit.C2 == pytest.approx(rate, rel=0.1)


def test_decay_fit_degenerate():
    g = Digraph.complete(3)
    dec = node_decomposition(g)
    p = SystemParams([0.2] * 3, 5.0, 0.1)
    tr = integrate(g, p, np.zeros(3), 1.0, SolverConfig(n_samples=20), decomp=dec)
    with pytest.raises(DegenerateData):
        fit_frequency_decay(tr, 0.0)


def test_sandwich_holds_along_admissible_run():
    g, dec, fp, reg, p, tr = _pair_run(alpha_frac=0.5, domega=0.4)
    qt = q_trace(tr.theta_rel, dec, fp.eta)
    assert (qt.Q <= tr.Dk + 1e-15).all() and (fp.beta * tr.Dk <= qt.Q + 1e-15).all()
