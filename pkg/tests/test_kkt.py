import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import instance
from secure_slp.kkt import (DegenerateChannelError, PenaltyConfig, PenaltyError, PenaltyState,
                            build_kkt_matrices, build_p5_matrices, dual_value, eve_threshold,
                            penalty_iterate, project_eve_cone, recover_precoders, solve_fast)
from secure_slp.model import ChannelSet, SymbolFrame
from secure_slp.regions import Region
from secure_slp.schemes import solve_p2_branch
from secure_slp.solver import ConvexProgram, solve_reference

seeds = st.integers(0, 2 ** 31 - 1)


@settings(max_examples=40)
@given(seeds, st.sampled_from([2, 4, 8]), st.sampled_from(list(Region)))
def test_projector_identities(seed, M, region):
    ch, fr = instance(seed, M=M)
    m = build_kkt_matrices(ch, fr, region)
    assert np.linalg.norm(ch.H @ m.A - np.eye(2)) <= 1e-8
    assert np.linalg.norm(ch.g_e @ m.A) <= 1e-8
    assert np.linalg.norm(ch.H @ m.C) <= 1e-8
    assert abs(ch.g_e @ m.C[:, 0] - 1.0) <= 1e-8
    assert np.allclose(m.F1, m.F1.T) and np.allclose(m.Q, m.Q.T)


def test_t1_matches_naive_loop():
    ch, fr = instance(11)
    m = build_kkt_matrices(ch, fr)
    K, N = 2, 6
    s = fr.symbols
    T1 = np.zeros((K, K), dtype=complex)
    for i in range(K):
        for j in range(K):
            for n in range(N):
                T1[i, j] += np.conj(s[i]) * np.conj(m.A[n, i]) * m.A[n, j] * s[j]
    assert np.allclose(m.T1, T1, atol=1e-12)
    T4 = sum(abs(m.C[n, 0]) ** 2 for n in range(N))
    assert m.T4[0, 0] == pytest.approx(T4)


def test_power_quadratic_form():
    # gamma^T F1 gamma == ||A diag(s) lam + C s_m phi||^2 for any gamma
    ch, fr = instance(3, M=8)
    m = build_kkt_matrices(ch, fr, Region.B)
    rng = np.random.default_rng(0)
    for _ in range(5):
        gamma = rng.standard_normal(m.F1.shape[0])
        x = m.transmit(gamma)
        assert gamma @ m.F1 @ gamma == pytest.approx(np.vdot(x, x).real, rel=1e-10)


def test_degenerate_channels_rejected():
    H = np.array([[1, 0, 0], [0, 1, 0]], dtype=complex)
    fr = SymbolFrame((0, 1), 4)
    with pytest.raises(DegenerateChannelError):
        build_kkt_matrices(ChannelSet(H, np.array([1, 1, 0])), fr)  # g_e in the row space of H
    with pytest.raises(DegenerateChannelError):
        build_kkt_matrices(ChannelSet(np.array([[1, 0, 0], [2, 0, 0]]), np.ones(3)), fr)


def test_penalty_fixed_point_identity_regime():
    # Q = I, f1 = 0: the fixed point solves mu = eta (I + eta f2 f2^T)^{-1} (1 + xi2) f2
    ch, fr = instance(1)
    m0 = build_p5_matrices(ch.H, fr)
    n = m0.n_dual
    f2 = m0.f2
    fields = dict(m0.__dict__)
    fields.update(Q=np.eye(n), f1=np.zeros(n))
    m = type(m0)(**fields)
    for eta in (1e2, 1e4, 1e6):
        st_ = penalty_iterate(m, PenaltyConfig(eta=eta, epsilon=1e-14, max_iter=20_000, accelerate=False))
        mu = st_.mu
        lhs = eta * np.linalg.solve(np.eye(n) + eta * np.outer(f2, f2), (1 + st_.xi2) * f2)
        assert np.allclose(mu, lhs, atol=1e-8)
        # exact optimum: mu = f2 / (1/eta + f2^T f2)
        assert np.allclose(mu, f2 / (1.0 / eta + f2 @ f2), rtol=1e-8)
    assert abs(mu @ f2 - 1.0) < 1e-5


def _dual_oracle(m, P_s):
    """min mu^T Q mu  s.t. -mu^T f1 >= 0, mu^T f2 >= 1, mu >= 0 via the reference solver."""
    n = m.n_dual
    lin = [(-np.eye(n)[i], 0.0) for i in range(n)]
    lin.append((-m.f2, -1.0))
    eq = []
    if np.all(m.f1 >= 0):
        # no interior: mu >= 0 and mu^T f1 <= 0 pin the support of f1 to zero
        eq = [(np.eye(n)[i], 0.0) for i in np.flatnonzero(m.f1)]
        lin = [row for i, row in enumerate(lin) if i >= n or m.f1[i] == 0]
    else:
        lin.append((m.f1, 0.0))
    rep = solve_reference(ConvexProgram.from_lists(n, P=m.Q, linear_ineq=lin, linear_eq=eq))
    assert rep.optimal
    return np.sqrt(P_s * rep.objective_value)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
@pytest.mark.parametrize("region", list(Region))
def test_dual_value_matches_reference(seed, region):
    ch, fr = instance(seed)
    m = build_kkt_matrices(ch, fr, region)
    st_ = penalty_iterate(m, P_s=4.0)
    assert st_.converged
    assert dual_value(m, st_.mu, 4.0) == pytest.approx(_dual_oracle(m, 4.0), rel=1e-3)


def test_dual_value_equals_primal_threshold():
    ch, fr = instance(5)
    for region in Region:
        m = build_kkt_matrices(ch, fr, region)
        sol = solve_fast(m, 2.0)
        ref = solve_p2_branch(ch, fr, 2.0, region, path="reference")
        assert sol.t == pytest.approx(ref.t, rel=1e-4, abs=1e-6)


def test_violation_shrinks_with_eta():
    ch, fr = instance(7)
    m = build_kkt_matrices(ch, fr, Region.A)
    viol = []
    for eta in (1e2, 1e4, 1e6):
        st_ = penalty_iterate(m, PenaltyConfig(eta=eta, accelerate=False, max_iter=200_000, epsilon=1e-12))
        mu = st_.mu
        viol.append((abs(min(-mu @ m.f1, 0.0)), abs(min(mu @ m.f2 - 1.0, 0.0))))
    for k in range(2):
        assert viol[0][k] >= viol[1][k] >= viol[2][k]
    assert max(viol[2]) < 1e-4


@settings(max_examples=25)
@given(seeds, st.sampled_from(list(Region)), st.booleans())
def test_penalty_objective_monotone(seed, region, accelerate):
    ch, fr = instance(seed)
    m = build_kkt_matrices(ch, fr, region)
    st_ = penalty_iterate(m, PenaltyConfig(accelerate=accelerate, max_iter=3000))
    h = np.array(st_.objective_history)
    assert np.all(np.diff(h) <= 1e-9 * np.maximum(1.0, np.abs(h[:-1])))
    assert np.all(st_.mu >= 0)


def test_eta_must_be_positive():
    ch, fr = instance(0)
    with pytest.raises(ValueError):
        penalty_iterate(build_kkt_matrices(ch, fr), PenaltyConfig(eta=0.0))


def test_zero_mu_rejected():
    ch, fr = instance(0)
    m = build_kkt_matrices(ch, fr)
    state = PenaltyState(np.zeros(m.n_dual), 0.0, 0.0, 0.0, 1e6, 0, True)
    with pytest.raises(ValueError):
        recover_precoders(state, m, 1.0)
    with pytest.raises(ValueError):
        m.gamma_from_dual(np.zeros(m.n_dual), 1.0)


@settings(max_examples=25)
@given(seeds, st.sampled_from(list(Region)), st.floats(0.1, 100.0))
def test_recovered_power_and_received_signal(seed, region, P_s):
    ch, fr = instance(seed)
    m = build_kkt_matrices(ch, fr, region)
    sol = solve_fast(m, P_s)
    x = sol.W @ fr.b
    assert np.vdot(x, x).real <= P_s + 1e-6
    # the balancing optimum always spends the whole budget
    assert np.vdot(x, x).real == pytest.approx(P_s, rel=1e-4)
    assert np.allclose(ch.H @ x, sol.info["lam"] * fr.symbols, atol=1e-6 * max(1.0, np.sqrt(P_s)))


def test_p5_matrices():
    ch, fr = instance(2)
    m = build_p5_matrices(ch.H, fr)
    assert np.linalg.norm(ch.H @ m.A - np.eye(2)) < 1e-10
    sol = solve_fast(m, 3.0)
    x = sol.x
    lam = np.conj(fr.symbols) * (ch.H @ x)
    assert lam.real.min() - np.abs(lam.imag).max() == pytest.approx(sol.t, abs=1e-6)


@pytest.mark.parametrize("region, phi, expected", [(Region.A, -1 - 1j, 0j), (Region.A, 2 - 1j, 2 + 0j),
                                                   (Region.B, 2 + 1j, 2 + 0j), (Region.CD, -3 + 1j, -3 + 1j)])
def test_eve_cone_projection(region, phi, expected):
    assert project_eve_cone(phi, region, 1.0) == expected


@pytest.mark.parametrize("region, expected", [(Region.A, 0.5), (Region.B, 3.5), (Region.CD, 2.0)])
def test_eve_threshold(region, expected):
    assert eve_threshold(2 + 1.5j, region, 1.0) == pytest.approx(expected)


def test_nonconvergence_raises():
    ch, fr = instance(0)
    with pytest.raises(PenaltyError):
        solve_fast(build_kkt_matrices(ch, fr), 1.0, PenaltyConfig(max_iter=1, accelerate=False))
