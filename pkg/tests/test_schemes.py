import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import instance
from secure_slp.model import ChannelSet, SymbolFrame, exponential_correlation, make_rng, snr_to_threshold
from secure_slp.regions import Region, constructive_margin, in_destructive_subregion
from secure_slp.schemes import (NULLSPACE_MESSAGE, InfeasibleError, NullSpaceError, audit_solution,
                                build_rjs, build_rps, eve_sinr, nullspace_basis, solve_p2_branch,
                                solve_power_min, solve_sinr_balance_full, solve_sinr_balance_nocsi,
                                solve_sinr_balance_statistical, solve_users_only)
from secure_slp.schemes.sca import taylor_norm2, taylor_quad_over_linear, taylor_reciprocal
from secure_slp.solution import PrecodingSolution, SchemeConfig

AB = SchemeConfig(region_restriction="AB-only", gamma_e_db=0.0)


def _user_margins(sol, ch):
    s = sol.frame.symbols
    lam = np.conj(s) * (ch.H @ sol.x_info)
    return constructive_margin(lam, 0.0, math.pi / sol.frame.M)


# ---------------------------------------------------------------------------
# P1


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("gamma_e_db", [-5.0, 0.0, 5.0, 10.0])
def test_p1_complete_beats_ab_only(seed, gamma_e_db):
    ch, fr = instance(seed)
    full = solve_power_min(ch, fr, 10.0)
    ab = solve_power_min(ch, fr, 10.0, SchemeConfig(region_restriction="AB-only", gamma_e_db=gamma_e_db))
    assert full.transmit_power <= ab.transmit_power * (1 + 1e-6) + 1e-9
    assert audit_solution(full, ch).passed and audit_solution(ab, ch).passed


@pytest.mark.parametrize("seed", range(6))
def test_p1_zero_leakage_premium(seed):
    ch, fr = instance(seed)
    free = solve_power_min(ch, fr, 5.0)
    zero = solve_power_min(ch, fr, 5.0, SchemeConfig(gamma_e_db=-math.inf))
    assert zero.transmit_power >= free.transmit_power * (1 - 1e-6)
    assert zero.thresholds.t_e == 0.0


def test_p1_meets_targets_and_region():
    ch, fr = instance(9, M=8)
    sol = solve_power_min(ch, fr, [3.0, 12.0])
    t_k = [snr_to_threshold(3.0, 1.0), snr_to_threshold(12.0, 1.0)]
    lam = np.conj(fr.symbols) * (ch.H @ sol.x)
    assert np.all(constructive_margin(lam, np.array(t_k), math.pi / 8) >= -1e-6)
    phi = np.conj(fr.symbols[0]) * (ch.g_e @ sol.x)
    # nudge onto the closed side of a boundary the optimum may sit on
    t_e = sol.thresholds.t_e
    shift = 1e-7 if sol.subregion is Region.CD else -1e-7
    assert in_destructive_subregion(phi, t_e + shift, math.pi / 8, sol.subregion)


def test_p1_colocated_eve_single_user():
    # K = 1 and g_e = h_1: the cheapest point keeps lam real on the apex t
    h = np.array([1.0 + 0.5j, -0.3j, 0.8])
    ch = ChannelSet(h[None, :], h)
    fr = SymbolFrame((1,), 4)
    sol = solve_power_min(ch, fr, 0.0)
    t = snr_to_threshold(0.0, 1.0)
    assert sol.transmit_power == pytest.approx(t ** 2 / np.linalg.norm(h) ** 2, rel=1e-5)


def test_p1_power_grows_with_target():
    ch, fr = instance(4)
    powers = [solve_power_min(ch, fr, g).transmit_power for g in (0.0, 10.0, 20.0, 30.0)]
    assert np.all(np.diff(powers) > 0)
    # scale invariance: power is proportional to Gamma
    assert powers[1] / powers[0] == pytest.approx(10.0, rel=1e-4)


# ---------------------------------------------------------------------------
# P2


@pytest.mark.parametrize("seed", range(10))
def test_p2_paths_agree(seed):
    ch, fr = instance(seed, M=4 if seed % 2 else 8)
    fast = solve_sinr_balance_full(ch, fr, 5.0, path="kkt")
    ref = solve_sinr_balance_full(ch, fr, 5.0, path="reference")
    assert abs(fast.t - ref.t) <= max(1e-3, 1e-3 * ref.t)
    assert fast.solver_path == "kkt-fast" and ref.solver_path == "reference"
    assert audit_solution(fast, ch, 5.0).passed and audit_solution(ref, ch, 5.0).passed


def test_p2_budget_monotone():
    for seed in range(50):
        ch, fr = instance(seed)
        t1 = solve_sinr_balance_full(ch, fr, 2.0).t
        t2 = solve_sinr_balance_full(ch, fr, 4.0).t
        assert t2 >= t1 - 1e-9
        # balanced t is homogeneous of degree 1/2 in P_s
        assert t2 == pytest.approx(math.sqrt(2.0) * t1, rel=1e-4)


def test_p2_fixed_eve_threshold_routes_to_reference():
    ch, fr = instance(2)
    sol = solve_p2_branch(ch, fr, 5.0, Region.A, SchemeConfig(gamma_e_db=0.0))
    assert sol is None or sol.solver_path == "reference"
    best = solve_sinr_balance_full(ch, fr, 5.0, AB)
    assert best.thresholds.t_e == pytest.approx(1.0)
    assert audit_solution(best, ch, 5.0).passed


def test_p2_needs_eve_channel():
    ch, fr = instance(0)
    with pytest.raises(ValueError):
        solve_sinr_balance_full(ch.without_eve(), fr, 1.0)


def test_p2_infeasible_reports():
    # BPSK, g_e = h_1: the A/B sectors collapse to the line Re(phi) = t_e, out of reach of P_s = 1
    h = np.array([[1.0, 0.0]])
    ch = ChannelSet(h, np.array([1.0, 0.0]))
    fr = SymbolFrame((0,), 2)
    cfg = SchemeConfig(region_restriction="AB-only", gamma_e_db=40.0)
    with pytest.raises(InfeasibleError):
        solve_sinr_balance_full(ch, fr, 1.0, cfg)


# ---------------------------------------------------------------------------
# P3 / P4


def test_eve_sinr_decreases_with_jamming():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    R = np.eye(4)
    vals = []
    for scale in (0.0, 0.5, 1.0, 2.0, 4.0):
        V = W.copy()
        V[:, 2] = scale * W[:, 2]
        vals.append(eve_sinr(V, R, 0))
    assert np.all(np.diff(vals) < 0)
    q = np.real(np.einsum("ni,ni->i", W.conj(), W))
    assert vals[2] == pytest.approx(q[0] / (q[1] + q[2] + 1.0))


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_taylor_surrogates_are_one_sided(seed):
    rng = np.random.default_rng(seed)
    n = 3
    B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    U = B.conj().T @ B
    x, x0 = (rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(2))
    y, y0 = rng.uniform(0.1, 5.0, 2)
    # convex functions lie above their tangents, with equality at the expansion point
    assert np.vdot(x, U @ x).real / y >= taylor_quad_over_linear(x, y, x0, y0, U) - 1e-9
    assert 1.0 / y >= taylor_reciprocal(y, y0) - 1e-12
    assert np.vdot(x, x).real >= taylor_norm2(x, x0) - 1e-12
    assert taylor_quad_over_linear(x0, y0, x0, y0, U) == pytest.approx(np.vdot(x0, U @ x0).real / y0)
    assert taylor_norm2(x0, x0) == pytest.approx(np.vdot(x0, x0).real)


@pytest.mark.parametrize("seed", range(4))
def test_p3_sca_monotone_and_bounded(seed):
    ch, fr = instance(seed, eve_correlation=0.5)
    sol = solve_sinr_balance_statistical(ch, fr, 10.0)
    hist = np.array(sol.info["t_history"])
    assert np.all(np.diff(hist) >= -1e-9)
    assert len(hist) <= SchemeConfig().sca_max_outer
    assert sol.info["gamma_e"] <= sol.info["gamma_e_bound"] * (1 + 1e-6)
    assert sol.info["gamma_e_bound"] <= 10 ** (SchemeConfig().gamma_e_cap_db / 10) * (1 + 1e-9)
    rep = audit_solution(sol, ch, 10.0)
    assert rep.passed, str(rep)


def test_p3_needs_correlation():
    ch, fr = instance(0)
    with pytest.raises(ValueError):
        solve_sinr_balance_statistical(ch, fr, 1.0)


@pytest.mark.parametrize("seed", range(4))
def test_p4_floor_and_monotone(seed):
    ch, fr = instance(seed)
    P_s = 10.0
    sol = solve_sinr_balance_nocsi(ch, fr, P_s, 0.5 * P_s)
    hist = np.array(sol.info["t_history"])
    assert np.all(np.diff(hist) >= -1e-9)
    p = sol.W[:, ch.K]
    assert np.vdot(p, p).real >= 0.5 * P_s * (1 - 1e-6)
    assert np.all(_user_margins(sol, ch) >= sol.t - 1e-6)
    assert audit_solution(sol, ch.without_eve(), P_s, 0.5 * P_s).passed
    relaxed = solve_sinr_balance_nocsi(ch, fr, P_s, 0.0)
    assert relaxed.t >= sol.t - 1e-6


def test_p4_rejects_floor_above_budget():
    ch, fr = instance(0)
    with pytest.raises(ValueError):
        solve_sinr_balance_nocsi(ch, fr, 1.0, 1.0)


def test_p3_p4_match_users_only_optimum():
    # the user constraints only involve W b, so both reach the users-only optimum
    ch, fr = instance(6, eve_correlation=0.5)
    p5 = solve_users_only(ch.H, fr, 10.0)
    p3 = solve_sinr_balance_statistical(ch, fr, 10.0)
    p4 = solve_sinr_balance_nocsi(ch, fr, 10.0, 5.0)
    assert p3.t == pytest.approx(p5.t, rel=1e-3)
    assert p4.t == pytest.approx(p5.t, rel=1e-3)


# ---------------------------------------------------------------------------
# null space, RJS, RPS


def test_nullspace_explicit():
    H = np.array([[1, 0, 0], [0, 1, 0]], dtype=complex)
    V1 = nullspace_basis(H).V1
    assert V1.shape == (3, 1)
    assert abs(abs(V1[2, 0]) - 1.0) < 1e-12 and np.allclose(V1[:2, 0], 0)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_nullspace_random(seed, K):
    rng = np.random.default_rng(seed)
    N = 6
    H = rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))
    s = np.exp(2j * np.pi * rng.integers(0, 4, K) / 4)
    b = nullspace_basis(H, s)
    assert np.linalg.norm(H @ b.V1) <= 1e-9
    assert np.allclose(b.V1.conj().T @ b.V1, np.eye(N - K), atol=1e-10)
    k = rng.standard_normal(N - K)
    assert np.linalg.norm(H @ (b.V1 @ k + b.r0) - s) <= 1e-8


def test_nullspace_empty():
    with pytest.raises(NullSpaceError, match="null space empty"):
        nullspace_basis(np.eye(2))
    assert NULLSPACE_MESSAGE == "null space empty, requires N−K≥1"


def test_rjs_jammer_is_invisible():
    ch, fr = instance(3)
    sol = build_rjs(ch, fr, 10.0, 5.0, make_rng(0))
    assert np.allclose(ch.H @ sol.x, ch.H @ sol.x_info, atol=1e-9)
    assert np.allclose(ch.H @ sol.x, sol.info["tau"] * fr.symbols, atol=1e-9)
    assert sol.transmit_power == pytest.approx(np.vdot(sol.x_info, sol.x_info).real + 5.0)
    assert audit_solution(sol, ch, 10.0).passed


def test_rjs_split_tradeoff():
    for seed in range(50):
        ch, fr = instance(seed)
        ts = [build_rjs(ch, fr, 10.0, pn, make_rng(seed)).t for pn in (0.0, 2.5, 5.0, 7.5)]
        assert np.all(np.diff(ts) <= 1e-9)


def test_random_term_varies_across_frames():
    ch, fr = instance(1)
    for build in (build_rjs, build_rps):
        vals = np.array([ch.g_e @ build(ch, fr, 10.0, 5.0, make_rng(0, i)).info["p"] for i in range(1000)])
        assert np.var(vals) > 1e-3


def test_rps_amplitude_identity():
    for seed in range(20):
        ch, fr = instance(seed, M=8)
        rps = build_rps(ch, fr, 10.0, 5.0, make_rng(seed))
        rjs = build_rjs(ch, fr, 10.0, 5.0, make_rng(seed))
        ratio = (ch.H @ rps.x) / fr.symbols
        expected = rps.info["tau"] + math.sqrt(5.0) / np.linalg.norm(rps.info["p_hat"])
        assert np.allclose(ratio, expected, atol=1e-9)
        assert np.all(np.abs(ratio) >= np.abs((ch.H @ rjs.x) / fr.symbols) - 1e-12)
        assert np.linalg.norm(ch.H @ rps.info["p_hat"] - fr.symbols) <= 1e-8
        assert audit_solution(rps, ch, 10.0).passed


def test_randomized_budget_checks():
    ch, fr = instance(0)
    with pytest.raises(ValueError):
        build_rjs(ch, fr, 1.0, 1.0, 0)
    with pytest.raises(NullSpaceError):
        build_rps(ChannelSet(np.eye(2), np.ones(2)), SymbolFrame((0, 1), 4), 1.0, 0.5, 0)


# ---------------------------------------------------------------------------
# audit


def test_audit_catches_tampering():
    ch, fr = instance(0)
    sol = solve_sinr_balance_full(ch, fr, 4.0)
    assert audit_solution(sol, ch, 4.0).passed
    bad = PrecodingSolution(sol.W * 1.5, fr, sol.thresholds, sol.transmit_power, "P2", "kkt-fast",
                            sol.subregion)
    rep = audit_solution(bad, ch, 4.0)
    assert "power_budget" in rep.failures and "reported_power" in rep.failures
    flipped = PrecodingSolution(-sol.W, fr, sol.thresholds, sol.transmit_power, "P2", "kkt-fast",
                                sol.subregion)
    assert "constructive" in audit_solution(flipped, ch, 4.0).failures


def test_scheme_config_validation():
    with pytest.raises(ValueError):
        SchemeConfig(region_restriction="AB-only")
    with pytest.raises(ValueError):
        SchemeConfig(sca_tolerance=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(region_restriction="AB-only", gamma_e_db=0.0, subregion_policy="CD").branches()
    assert SchemeConfig(subregion_policy="B").branches() == (Region.B,)
