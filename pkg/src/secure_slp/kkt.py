"""Closed-form KKT pipeline for the full-CSI balancing problem and its
users-only variant.

The transmit vector is written as ``x = A diag(s) lam + C s_m phi`` where
``lam`` holds the users' rotated gains and ``phi`` Eve's. Stacking the real
and imaginary parts into ``gamma`` turns the power constraint into
``gamma^T F1 gamma <= P_s`` and the region constraints into linear ones,
whose dual is a small nonnegative quadratic program in ``mu``::

    minimize  mu^T Q mu   s.t.  -mu^T f1 >= 0,  mu^T f2 >= 1,  mu >= 0

It is solved through the penalty reformulation by alternating an exact
``mu`` block and a closed-form slack block, then ``gamma`` (hence ``W``) is
recovered in closed form.

Eve's threshold ``t_e`` is a free variable here. Only the nonnegative
cones ``A``, ``B`` and ``C&D`` that survive its elimination matter, which
keeps every branch scale invariant.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .model import ChannelSet, SymbolFrame
from .regions import Region, Thresholds
from .solution import PrecodingSolution

F1_RIDGE = 1e-10
COND_LIMIT = 1e12


class DegenerateChannelError(ValueError):
    """Rank-deficient ``H`` or an Eve channel inside the users' row space."""


class PenaltyError(RuntimeError):
    """Penalty iteration failed; callers fall back to the reference solver."""


def _real_block(T: np.ndarray) -> np.ndarray:
    T = np.atleast_2d(T)
    return np.block([[T.real, -T.imag], [T.imag, T.real]])


def _cot(M: int) -> float:
    if M == 2:
        return 0.0
    return float(np.cos(np.pi / M) / np.sin(np.pi / M))


@dataclass(frozen=True)
class KktMatrices:
    """Derived algebra for one (channel, frame, branch) triple.

    ``problem`` is ``"P2"`` (users and Eve) or ``"P5"`` (users only, where
    ``C``, ``T2..T4``, ``F3`` and ``f1`` are empty and ``A`` is the
    pseudo-inverse of ``H``).
    """

    problem: str
    region: Optional[Region]
    frame: SymbolFrame
    K: int
    N: int
    M: int
    cot: float
    s: np.ndarray
    s_m: complex
    b: np.ndarray
    a: float
    A: np.ndarray
    C: np.ndarray
    T1: np.ndarray
    T2: np.ndarray
    T3: np.ndarray
    T4: np.ndarray
    T5_hat: np.ndarray
    T6_hat: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    F: np.ndarray
    Q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    U1: np.ndarray
    u2: np.ndarray
    F1_solve_F: np.ndarray  # (F1 + ridge)^{-1} F

    @property
    def n_dual(self) -> int:
        return self.F.shape[1]

    def split_gamma(self, gamma: np.ndarray) -> Tuple[np.ndarray, complex]:
        """Complex ``lam`` (K) and ``phi`` from the real stacked ``gamma``."""
        lam = self.U1 @ gamma
        phi = complex(self.u2 @ gamma) if self.u2.size else 0j
        return lam, phi

    def transmit(self, gamma: np.ndarray) -> np.ndarray:
        lam, phi = self.split_gamma(gamma)
        x = self.A @ (self.s * lam)
        if self.problem == "P2":
            x = x + self.C[:, 0] * (self.s_m * phi)
        return x

    def gamma_from_dual(self, mu: np.ndarray, P: float) -> Tuple[np.ndarray, float]:
        """``gamma = -F1^{-1} F mu / (2 mu0)`` with ``mu0`` fixed by the power."""
        mu = np.asarray(mu, dtype=float)
        q = float(mu @ self.Q @ mu)
        if not np.any(mu) or q <= 0.0:
            raise ValueError("mu0 vanishes: the dual vector carries no weight")
        mu0 = np.sqrt(q / (4.0 * P))
        return -(self.F1_solve_F @ mu) / (2.0 * mu0), mu0


def _pseudo_inverse_parts(H: np.ndarray):
    K, N = H.shape
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[-1] <= 1e-10 * max(1.0, sv[0]) or K > N:
        raise DegenerateChannelError("H must have full row rank K")
    G = H @ H.conj().T
    Hp = np.linalg.solve(G, H).conj().T  # H^H G^{-1}
    return G, Hp


def _finish(problem, region, frame, K, N, M, cot, s, s_m, b, a, A, C, T1, T2, T3, T4,
            T5_hat, T6_hat, F1, F2, F3, f1, f2, U1, u2) -> KktMatrices:
    F1 = 0.5 * (F1 + F1.T)
    F = np.hstack([F2.T, F3.T]) if F3.size else F2.T.copy()
    F1r = F1 + F1_RIDGE * np.eye(F1.shape[0])
    if np.linalg.cond(F1r) > COND_LIMIT:
        raise DegenerateChannelError("F1 is too ill-conditioned for the closed form")
    try:
        L = np.linalg.cholesky(F1r)
    except np.linalg.LinAlgError as exc:
        raise DegenerateChannelError("F1 is not positive definite") from exc
    Y = np.linalg.solve(L, F)
    Q = Y.T @ Y
    X = np.linalg.solve(L.T, Y)
    return KktMatrices(problem, region, frame, K, N, M, cot, s, s_m, b, a, A, C, T1, T2, T3, T4,
                       T5_hat, T6_hat, F1, F2, F3, F, 0.5 * (Q + Q.T), f1, f2, U1, u2, X)


def _t5_hat(K: int, cot: float) -> np.ndarray:
    I = np.eye(K)
    return np.block([[-I, cot * I], [-I, -cot * I]])


def _region_rows(region: Region, cot: float):
    """Rows of ``F3`` acting on ``[Re phi, Im phi]`` and the ``t_e`` selector."""
    region = Region(region)
    if region is Region.A:
        return np.array([[-1.0, 0.0], [1.0, -cot]]), np.array([-1.0, 1.0])
    if region is Region.B:
        return np.array([[-1.0, 0.0], [1.0, cot]]), np.array([-1.0, 1.0])
    return np.array([[1.0, 0.0]]), np.array([1.0])


def build_kkt_matrices(channels: ChannelSet, frame: SymbolFrame,
                       region: Region = Region.A) -> KktMatrices:
    """Matrices of the full-CSI balancing problem for one subregion branch."""
    if channels.g_e is None:
        raise ValueError("the full-CSI closed form needs Eve's channel")
    H, g = channels.H, channels.g_e
    K, N = H.shape
    if frame.K != K:
        raise ValueError("frame size does not match the channel")
    G, Hp = _pseudo_inverse_parts(H)
    Pg = g.conj() - Hp @ (H @ g.conj())  # P_perp g^*
    a = complex(g @ Pg)
    if abs(a) <= 1e-10:
        raise DegenerateChannelError("Eve's channel lies in the users' row space (a ~ 0)")
    a = a.real
    C = (Pg / a)[:, None]
    A = Hp - np.outer(Pg, g @ Hp) / a
    s = frame.symbols
    s_m = complex(s[frame.target_index])
    AS = A * s[None, :]
    T1 = AS.conj().T @ AS
    T2 = AS.conj().T @ C * s_m
    T3 = T2.conj().T
    T4 = (abs(s_m) ** 2) * (C.conj().T @ C)
    cot = _cot(frame.M)
    T5_hat = _t5_hat(K, cot)
    T6_hat, e = _region_rows(region, cot)
    F1 = np.block([[_real_block(T1), _real_block(T2)], [_real_block(T3), _real_block(T4)]])
    F2 = np.hstack([T5_hat, np.zeros((2 * K, 2))])
    F3 = np.hstack([np.zeros((T6_hat.shape[0], 2 * K)), T6_hat])
    f1 = np.concatenate([np.zeros(2 * K), e])
    f2 = np.concatenate([np.ones(2 * K), np.zeros(e.shape[0])])
    U1 = np.hstack([np.eye(K), 1j * np.eye(K), np.zeros((K, 2))])
    u2 = np.concatenate([np.zeros(2 * K), [1.0, 1j]])
    return _finish("P2", Region(region), frame, K, N, frame.M, cot, s, s_m, frame.b, a, A, C,
                   T1, T2, T3, T4, T5_hat, T6_hat, F1, F2, F3, f1, f2, U1, u2)


def build_p5_matrices(H: np.ndarray, frame: SymbolFrame) -> KktMatrices:
    """Users-only specialization: ``x = H^+ diag(s) tau``."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K, N = H.shape
    if frame.K != K:
        raise ValueError("frame size does not match the channel")
    G, Hp = _pseudo_inverse_parts(H)
    s = frame.symbols
    AS = Hp * s[None, :]
    T1 = AS.conj().T @ AS
    cot = _cot(frame.M)
    T5_hat = _t5_hat(K, cot)
    empty = np.zeros((0, 0))
    return _finish("P5", None, frame, K, N, frame.M, cot, s, complex(s[frame.target_index]), frame.b,
                   np.nan, Hp, np.zeros((N, 0)), T1, empty, empty, empty, T5_hat,
                   np.zeros((0, 2)), _real_block(T1), T5_hat, np.zeros((0, 2 * K)),
                   np.zeros(2 * K), np.ones(2 * K),
                   np.hstack([np.eye(K), 1j * np.eye(K)]), np.zeros(0))


# ---------------------------------------------------------------------------
# penalty iteration


@dataclass
class PenaltyConfig:
    eta: float = 1e6
    continuation: bool = False
    epsilon: float = 1e-8
    max_iter: int = 10_000
    accelerate: bool = True


@dataclass
class PenaltyState:
    """Result of the alternating penalty iteration.

    ``mu`` solves the penalized dual for the normalised ``Q``; the dual is
    homogeneous in ``Q`` so the same ``mu`` is optimal for the raw one.
    ``objective_history`` records the penalized objective after every
    accepted alternation.
    """

    mu: np.ndarray
    xi1: float
    xi2: float
    mu0: float
    eta: float
    iteration: int
    converged: bool
    objective_history: List[float] = field(default_factory=list)
    violation_history: List[Tuple[float, float]] = field(default_factory=list)


class _MuBlock:
    """Exact minimiser of the penalized objective over ``mu >= 0`` for fixed slacks.

    On a free set ``S`` the minimiser is the closed form
    ``mu_S = eta M_SS^{-1} [-xi1 f1 + (1 + xi2) f2]_S``; the free set is found
    by block principal pivoting with a single-index fallback. Factorizations
    are cached per free set since ``M`` does not depend on the slacks.
    ``use`` switches the two penalty rows on or off (all on for the plain
    alternation).
    """

    def __init__(self, Qn: np.ndarray, f1: np.ndarray, f2: np.ndarray, eta: float,
                 use: Tuple[bool, bool] = (True, True)):
        n = Qn.shape[0]
        self.n = n
        self.eta = eta
        self.f1 = f1 if use[0] else np.zeros(n)
        self.f2 = f2 if use[1] else np.zeros(n)
        ridge = 1e-12 * max(1.0, float(np.trace(Qn)) / n)
        self.M = Qn + eta * (np.outer(self.f1, self.f1) + np.outer(self.f2, self.f2))
        self.M = self.M + ridge * np.eye(n)
        self._cache: Dict[bytes, np.ndarray] = {}
        self.free = np.ones(n, dtype=bool)

    def _inv(self, free: np.ndarray) -> np.ndarray:
        key = free.tobytes()
        inv = self._cache.get(key)
        if inv is None:
            idx = np.flatnonzero(free)
            inv = np.linalg.inv(self.M[np.ix_(idx, idx)])
            self._cache[key] = inv
        return inv

    def solve(self, xi1: float, xi2: float) -> np.ndarray:
        c = self.eta * (-xi1 * self.f1 + (1.0 + xi2) * self.f2)
        free = self.free.copy()
        best = self.n + 1
        fails = 0
        tol = 1e-14 * max(1.0, float(np.max(np.abs(c))))
        for _ in range(20 * self.n + 20):
            mu = np.zeros(self.n)
            if free.any():
                mu[free] = self._inv(free) @ c[free]
            grad = self.M @ mu - c
            bad = (free & (mu < -tol)) | (~free & (grad < -tol))
            nbad = int(bad.sum())
            if nbad == 0:
                self.free = free
                return np.maximum(mu, 0.0)
            if nbad < best:
                best, fails = nbad, 0
                free = free ^ bad
            elif fails < 3:
                fails += 1
                free = free ^ bad
            else:
                free[np.flatnonzero(bad)[-1]] ^= True
        raise PenaltyError("mu block did not settle")


def _objective(Qn, f1, f2, eta, mu, xi1, xi2) -> float:
    r1 = -mu @ f1 - xi1
    r2 = mu @ f2 - 1.0 - xi2
    return float(mu @ Qn @ mu + eta * (r1 * r1 + r2 * r2))


class _PatternStep:
    """Acceleration for the slack recursion.

    With ``eta`` large the plain alternation moves the slacks by
    ``O(1/eta)`` per sweep. Once the sign pattern of the two residuals is
    known, the slack of a satisfied constraint equals its value and its
    penalty row drops out, so the joint minimiser over ``(mu, xi)`` is one
    closed-form ``mu`` block with that row removed. The pattern is read off
    the current iterate and refined until consistent.
    """

    def __init__(self, Qn, f1, f2, eta):
        self.Qn, self.f1, self.f2, self.eta = Qn, f1, f2, eta
        self.blocks: Dict[Tuple[bool, bool], _MuBlock] = {}

    def __call__(self, mu: np.ndarray):
        f1, f2 = self.f1, self.f2
        use = (bool(mu @ f1 > 0), bool(mu @ f2 < 1.0))
        seen = set()
        while use not in seen:
            seen.add(use)
            block = self.blocks.get(use)
            if block is None:
                block = self.blocks[use] = _MuBlock(self.Qn, f1, f2, self.eta, use)
            cand = block.solve(0.0, 0.0)
            nxt = (bool(cand @ f1 > 0) or (use[0] and cand @ f1 >= 0),
                   bool(cand @ f2 < 1.0) or (use[1] and cand @ f2 <= 1.0))
            if nxt == use:
                return cand
            use = nxt
        return None


def _run_penalty(Qn, f1, f2, eta, mu, xi, cfg: PenaltyConfig, state: PenaltyState):
    block = _MuBlock(Qn, f1, f2, eta)
    pattern = _PatternStep(Qn, f1, f2, eta) if cfg.accelerate else None

    def slack(m):
        return np.array([max(-m @ f1, 0.0), max(m @ f2 - 1.0, 0.0)])

    for it in range(cfg.max_iter):
        state.iteration += 1
        mu_new = block.solve(xi[0], xi[1])
        xi_new = slack(mu_new)
        obj = _objective(Qn, f1, f2, eta, mu_new, xi_new[0], xi_new[1])
        if pattern is not None:
            cand = pattern(mu_new)
            if cand is not None:
                xi_acc = slack(cand)
                obj_acc = _objective(Qn, f1, f2, eta, cand, xi_acc[0], xi_acc[1])
                if obj_acc <= obj:
                    mu_new, xi_new, obj = cand, xi_acc, obj_acc
        state.objective_history.append(obj)
        state.violation_history.append((float(abs(-mu_new @ f1 - xi_new[0])),
                                        float(abs(mu_new @ f2 - 1.0 - xi_new[1]))))
        step = float(np.max(np.abs(mu_new - mu)))
        mu, xi = mu_new, xi_new
        if step <= cfg.epsilon and it > 0:
            return mu, xi, True
    return mu, xi, False


def penalty_iterate(matrices: KktMatrices, config: Optional[PenaltyConfig] = None,
                    P_s: float = 1.0) -> PenaltyState:
    """Alternating penalty solution of the dual quadratic program.

    ``Q`` is scaled by ``n / trace(Q)`` first so ``eta`` means the same
    thing on every instance. ``mu0`` is evaluated on the raw ``Q`` with
    budget ``P_s``.
    """
    cfg = config or PenaltyConfig()
    if not cfg.eta > 0:
        raise ValueError("eta must be positive")
    Q = matrices.Q
    if not np.all(np.isfinite(Q)):
        raise PenaltyError("Q is not finite")
    n = Q.shape[0]
    scale = float(np.trace(Q)) / n
    if scale <= 0:
        raise PenaltyError("Q vanishes")
    Qn = Q / scale
    f1, f2 = matrices.f1, matrices.f2
    mu = np.full(n, 1.0 / n)
    xi = np.array([max(-mu @ f1, 0.0), max(mu @ f2 - 1.0, 0.0)])
    etas = [1e2, 1e4, cfg.eta] if cfg.continuation else [cfg.eta]
    etas = sorted(set(e for e in etas if e <= cfg.eta))
    state = PenaltyState(mu, float(xi[0]), float(xi[1]), 0.0, etas[-1], 0, False)
    converged = False
    for eta in etas:
        mu, xi, converged = _run_penalty(Qn, f1, f2, eta, mu, xi, cfg, state)
    state.mu, state.xi1, state.xi2, state.eta = mu, float(xi[0]), float(xi[1]), etas[-1]
    state.converged = converged
    q = float(mu @ Q @ mu)
    state.mu0 = float(np.sqrt(q / (4.0 * P_s))) if q > 0 else 0.0
    return state


def dual_value(matrices: KktMatrices, mu: np.ndarray, P_s: float) -> float:
    """``sqrt(P_s mu^T Q mu)``, the balanced threshold certified by ``mu``."""
    return float(np.sqrt(P_s * max(float(mu @ matrices.Q @ mu), 0.0)))


# ---------------------------------------------------------------------------
# recovery


def project_eve_cone(phi: complex, region: Region, cot: float) -> complex:
    """Nearest point of the free-threshold cone of ``region``."""
    region = Region(region)
    if region is Region.CD:
        return phi
    re = max(phi.real, 0.0)
    im = phi.imag
    if cot > 0:
        im = max(im, 0.0) if region is Region.A else min(im, 0.0)
    return complex(re, im)


def eve_threshold(phi: complex, region: Region, cot: float) -> float:
    """Smallest admissible ``t_e`` keeping ``phi`` inside ``region``."""
    region = Region(region)
    if region is Region.A:
        return max(0.0, phi.real - cot * phi.imag)
    if region is Region.B:
        return max(0.0, phi.real + cot * phi.imag)
    return max(0.0, phi.real)


def ci_margins(lam: np.ndarray, cot: float) -> np.ndarray:
    return lam.real - cot * np.abs(lam.imag)


def recover_precoders(state: PenaltyState, matrices: KktMatrices, P_s: float) -> PrecodingSolution:
    """Closed-form ``W`` from the dual vector.

    ``W = x b^H / (K + 1)`` with ``x = A diag(s) lam + C s_m phi``, so that
    ``W b = x``. Eve's gain is snapped onto the branch cone (a correction
    of the order of the penalty residual) and the whole vector rescaled if
    that nudged the power above ``P_s``.
    """
    if state.mu0 <= 0 or not np.any(state.mu):
        raise ValueError("mu0 is zero; the dual vector cannot be mapped to precoders")
    m = matrices
    gamma, _ = m.gamma_from_dual(state.mu, P_s)
    lam, phi = m.split_gamma(gamma)
    if m.problem == "P2":
        phi = project_eve_cone(phi, m.region, m.cot)
    x = m.A @ (m.s * lam)
    if m.problem == "P2":
        x = x + m.C[:, 0] * (m.s_m * phi)
    power = float(np.vdot(x, x).real)
    if power > P_s:
        c = np.sqrt(P_s / power)
        x, lam, phi, power = c * x, c * lam, c * phi, P_s
    t = max(float(np.min(ci_margins(lam, m.cot))), 0.0)
    info = {"mu": state.mu, "mu0": state.mu0, "gamma": gamma, "lam": lam,
            "penalty_iterations": state.iteration, "dual_t": dual_value(m, state.mu, P_s)}
    frame = m.frame
    if m.problem == "P2":
        W = np.outer(x, m.b.conj()) / (m.K + 1)
        info["phi"] = phi
        return PrecodingSolution(W, frame, Thresholds(t, t_e=eve_threshold(phi, m.region, m.cot)),
                                 power, "P2", "kkt-fast", m.region, x=x, info=info)
    W = np.zeros((m.N, m.K + 1), dtype=complex)
    W[:, :m.K] = np.outer(x, m.s.conj()) / m.K
    return PrecodingSolution(W, frame, Thresholds(t), power, "P5", "kkt-fast", None,
                             x=x, x_info=x, info=info)


def solve_fast(matrices: KktMatrices, P: float,
               config: Optional[PenaltyConfig] = None) -> PrecodingSolution:
    """Algorithm pipeline: penalty iteration then closed-form recovery."""
    start = time.perf_counter()
    state = penalty_iterate(matrices, config, P)
    if not state.converged:
        raise PenaltyError(f"penalty iteration hit {state.iteration} iterations")
    sol = recover_precoders(state, matrices, P)
    sol.info["wall_time"] = time.perf_counter() - start
    return sol
