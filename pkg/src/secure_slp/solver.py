"""Dense reference solver for small convex programs.

Problems have the form::

    minimize    x^T P x + q^T x + r
    subject to  G x <= h
                A_eq x = b_eq
                x^T Q_i x + c_i^T x <= d_i      (Q_i PSD)

and are solved by a primal log-barrier method with damped Newton
centering. A phase-I stage finds a strictly feasible start when the
supplied point is not one. Equalities are eliminated by a null-space
parameterisation. Sizes here are a few dozen variables, so everything is
dense.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

PSD_TOL = 1e-9


def repair_psd(Q: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Symmetrise ``Q`` and clamp eigenvalues in ``[-tol, 0)`` to zero."""
    Q = np.asarray(Q, dtype=float)
    S = 0.5 * (Q + Q.T)
    w, V = np.linalg.eigh(S)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < -tol * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    if w.min(initial=0.0) < 0.0:
        S = (V * np.clip(w, 0.0, None)) @ V.T
        S = 0.5 * (S + S.T)
    return S


@dataclass
class QuadConstraint:
    """``x^T Q x + c^T x <= d``."""

    Q: np.ndarray
    c: np.ndarray
    d: float

    def __post_init__(self):
        self.Q = repair_psd(self.Q)
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.d = float(self.d)

    def value(self, x: np.ndarray) -> float:
        return float(x @ self.Q @ x + self.c @ x - self.d)


@dataclass
class ConvexProgram:
    """Quadratic objective with linear and convex quadratic constraints."""

    n: int
    P: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    r: float = 0.0
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    quad: List[QuadConstraint] = field(default_factory=list)

    def __post_init__(self):
        n = self.n
        self.P = np.zeros((n, n)) if self.P is None else repair_psd(self.P)
        self.q = np.zeros(n) if self.q is None else np.asarray(self.q, dtype=float).reshape(n)
        if self.G is None:
            self.G, self.h = np.zeros((0, n)), np.zeros(0)
        else:
            self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
            self.h = np.asarray(self.h, dtype=float).reshape(-1)
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, n)), np.zeros(0)
        else:
            self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
            self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        for qc in self.quad:
            if qc.Q.shape != (n, n):
                raise ValueError("quadratic constraint has wrong dimension")

    @classmethod
    def from_lists(cls, n, P=None, q=None, r=0.0, linear_ineq=(), linear_eq=(), quad_ineq=()):
        """Build from ``(a, b)`` pairs meaning ``a^T x <= b`` / ``a^T x = b``."""
        G = np.array([a for a, _ in linear_ineq], dtype=float).reshape(-1, n) if linear_ineq else None
        h = np.array([b for _, b in linear_ineq], dtype=float) if linear_ineq else None
        A = np.array([a for a, _ in linear_eq], dtype=float).reshape(-1, n) if linear_eq else None
        b = np.array([v for _, v in linear_eq], dtype=float) if linear_eq else None
        quads = [qc if isinstance(qc, QuadConstraint) else QuadConstraint(*qc) for qc in quad_ineq]
        return cls(n, P, q, r, G, h, A, b, quads)

    def objective(self, x: np.ndarray) -> float:
        return float(x @ self.P @ x + self.q @ x + self.r)

    def max_violation(self, x: np.ndarray) -> float:
        v = [0.0]
        if self.G.shape[0]:
            v.append(float(np.max(self.G @ x - self.h)))
        if self.A_eq.shape[0]:
            v.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        v.extend(qc.value(x) for qc in self.quad)
        return max(v)


@dataclass
class SolverConfig:
    gap_tol: float = 1e-7
    kkt_tol: float = 1e-6
    feas_tol: float = 1e-7
    max_outer: int = 200
    max_newton: int = 60
    barrier_factor: float = 50
    newton_tol: float = 1e-13


@dataclass
class SolveReport:
    status: str
    x: Optional[np.ndarray]
    objective_value: float
    kkt_residual: float
    iterations: int
    wall_time: float

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Barrier:
    """Objective and constraint oracles in the reduced variable."""

    def __init__(self, P, q, r, G, h, quads):
        self.P, self.q, self.r = P, q, r
        self.G, self.h = G, h
        self.quads = quads  # list of (Q, c, d)
        self.m = G.shape[0] + len(quads)
        self.n = q.shape[0]

    def f0(self, y):
        return float(y @ self.P @ y + self.q @ y + self.r)

    def cons(self, y):
        f = self.G @ y - self.h
        if self.quads:
            fq = [y @ Q @ y + c @ y - d for Q, c, d in self.quads]
            f = np.concatenate([f, fq])
        return f

    def derivatives(self, y, tau, f):
        """Gradient and Hessian of ``tau f0 - sum log(-f_i)``."""
        grad = tau * (2.0 * self.P @ y + self.q)
        hess = 2.0 * tau * self.P
        nl = self.G.shape[0]
        if nl:
            d = -1.0 / f[:nl]
            grad = grad + self.G.T @ d
            Gd = self.G * d[:, None]
            hess = hess + Gd.T @ Gd
        for i, (Q, c, _) in enumerate(self.quads):
            fi = -f[nl + i]
            gi = 2.0 * Q @ y + c
            grad = grad + gi / fi
            hess = hess + np.outer(gi, gi) / (fi * fi) + (2.0 / fi) * Q
        return grad, hess

    def stationarity(self, y, tau, f):
        """Lagrangian gradient with the central-path multipliers.

        Scaled by the largest individual term so the measure is relative.
        """
        grad, _ = self.derivatives(y, tau, f)
        g0 = 2.0 * self.P @ y + self.q
        scale = max(1.0, float(np.max(np.abs(g0), initial=0.0)))
        nl = self.G.shape[0]
        lam = 1.0 / (tau * -f)
        if nl:
            scale = max(scale, float(np.max(np.abs(self.G * lam[:nl, None]))))
        for i, (Q, c, _) in enumerate(self.quads):
            scale = max(scale, float(np.max(np.abs(lam[nl + i] * (2.0 * Q @ y + c)))))
        return float(np.max(np.abs(grad))) / tau / scale

    def kkt_residual(self, y, tau, f):
        """Relative KKT residual, max of stationarity and complementarity.

        Three multiplier estimates are scored: the central-path ones
        ``1 / (tau (-f_i))`` and two nonnegative least-squares refits of the
        stationarity equation, the second also weighting complementarity.
        The best one is reported.
        """
        g0 = 2.0 * self.P @ y + self.q
        cols = [self.G.T] if self.G.shape[0] else []
        cols += [(2.0 * Q @ y + c)[:, None] for Q, c, _ in self.quads]
        J = np.hstack(cols)
        slack = -f
        obj_scale = max(1.0, abs(self.f0(y)))

        def score(lam):
            terms = np.abs(J * lam[None, :])
            scale = max(1.0, float(np.max(np.abs(g0), initial=0.0)), float(terms.max(initial=0.0)))
            stat = float(np.max(np.abs(g0 + J @ lam))) / scale
            comp = float(np.max(lam * slack, initial=0.0)) / obj_scale
            return max(stat, comp)

        best = score(1.0 / (tau * slack))
        # plain refit, then one that also penalises lam_i * slack_i
        systems = [(J, -g0),
                   (np.vstack([J, np.diag(slack / obj_scale)]), np.concatenate([-g0, np.zeros(J.shape[1])]))]
        for A, rhs in systems:
            try:
                best = min(best, score(nnls(A, rhs)[0]))
            except (ValueError, RuntimeError):
                pass
        return best

    def psi(self, y, tau):
        f = self.cons(y)
        if f.size and f.max() >= 0.0:
            return np.inf, f
        return tau * self.f0(y) - float(np.sum(np.log(-f))), f


def _newton_solve(hess, grad):
    try:
        return -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        ridge = 1e-12 * max(1.0, float(np.trace(hess)) / hess.shape[0])
        return -np.linalg.lstsq(hess + ridge * np.eye(hess.shape[0]), grad, rcond=None)[0]


def _quad_step(Q, c, y, dy, slack: float) -> float:
    """Largest step in (0, 1] keeping at least 1% of a quadratic's slack."""
    a = float(dy @ Q @ dy)
    b = float((2.0 * Q @ y + c) @ dy)
    room = 0.99 * slack
    # a s^2 + b s <= room
    if a <= 0.0:
        return 1.0 if b <= room else room / b
    disc = b * b + 4.0 * a * room
    s = (-b + np.sqrt(disc)) / (2.0 * a)
    return min(1.0, s)


def _center(bar: _Barrier, y, tau, cfg: SolverConfig, stop: Optional[Callable] = None):
    """Damped Newton on the barrier subproblem. Returns (y, f, steps, ok, stopped)."""
    val, f = bar.psi(y, tau)
    nl = bar.G.shape[0]
    dec = np.inf
    for step in range(cfg.max_newton):
        grad, hess = bar.derivatives(y, tau, f)
        dy = _newton_solve(hess, grad)
        dec = -float(grad @ dy)
        if not np.isfinite(dec):
            return y, f, step, False, False
        if dec / 2.0 <= cfg.newton_tol:
            return y, f, step, True, False
        s = 1.0
        if nl:
            Gdy = bar.G @ dy
            pos = Gdy > 0
            if pos.any():
                s = min(1.0, 0.99 * float(np.min(-f[:nl][pos] / Gdy[pos])))
        for i, (Q, c, _) in enumerate(bar.quads):
            s = min(s, _quad_step(Q, c, y, dy, -f[nl + i]))
        slope = float(grad @ dy)
        while True:
            y_new = y + s * dy
            new_val, f_new = bar.psi(y_new, tau)
            if new_val <= val + 0.01 * s * slope:
                break
            s *= 0.5
            if s < 1e-14:
                return y, f, step, dec < 1e-6, False
        stalled = val - new_val <= 1e-15 * max(1.0, abs(val))
        y, f, val = y_new, f_new, new_val
        if stop is not None and stop(y, f):
            return y, f, step + 1, True, True
        if stalled and dec < 1e-8:
            # rounding floor of the barrier value reached
            return y, f, step + 1, True, False
    return y, f, cfg.max_newton, dec < 1e-8, False


def _barrier(bar: _Barrier, y, cfg: SolverConfig, stop=None, tau0: float = 1.0):
    """Outer barrier loop. Returns (y, tau, iterations, status, f).

    Near the end the Newton systems get ill-conditioned and the KKT
    residual can grow again, so the best-scoring centred point among the
    last few is returned.
    """
    tau = tau0
    iters = 0
    f = bar.cons(y)
    good = None
    best = None

    def finish(y, tau, f):
        if best is not None and best[0] < bar.kkt_residual(y, tau, f):
            return best[1], best[2], iters, "optimal", best[3]
        return y, tau, iters, "optimal", f

    for _ in range(cfg.max_outer):
        y_new, f_new, steps, ok, stopped = _center(bar, y, tau, cfg, stop)
        iters += steps
        if stopped:
            return y_new, tau, iters, "stopped", f_new
        if not ok:
            # rounding floor: fall back to the last well-centred point
            if good is not None and stop is None:
                y, tau, f = good
                # the caller re-checks the KKT residual of whatever is returned
                if best is not None or bar.m / tau <= cfg.kkt_tol * max(1.0, abs(bar.f0(y))):
                    return finish(y, tau, f)
            return y_new, tau, iters, "max_iter", f_new
        y, f = y_new, f_new
        good = (y, tau, f)
        gap = bar.m / tau
        scale = max(1.0, abs(bar.f0(y)))
        if stop is None and gap <= 1e3 * cfg.gap_tol * scale:
            resid = bar.kkt_residual(y, tau, f)
            if best is None or resid < best[0]:
                best = (resid, y, tau, f)
        if gap <= cfg.gap_tol * scale:
            return finish(y, tau, f)
        tau *= cfg.barrier_factor
    return y, tau, iters, "max_iter", f


def _phase_one(bar: _Barrier, y0, cfg: SolverConfig):
    """Find a strictly feasible point by minimising the max violation."""
    n = bar.n
    f0 = bar.cons(y0)
    s0 = float(f0.max()) + 1.0
    G1 = np.hstack([bar.G, -np.ones((bar.G.shape[0], 1))])
    quads = []
    for Q, c, d in bar.quads:
        Q1 = np.zeros((n + 1, n + 1))
        Q1[:n, :n] = Q
        quads.append((Q1, np.append(c, -1.0), d))
    radius2 = 1e6 * (1.0 + float(y0 @ y0))
    Qb = np.zeros((n + 1, n + 1))
    Qb[:n, :n] = np.eye(n)
    quads.append((Qb, np.append(-2.0 * y0, 0.0), radius2 - float(y0 @ y0)))
    q1 = np.zeros(n + 1)
    q1[-1] = 1.0
    aux = _Barrier(np.zeros((n + 1, n + 1)), q1, 0.0, G1, bar.h, quads)

    # stop with some depth so the main barrier starts well inside
    depth = -1e-3 * max(1.0, float(np.abs(bar.h).max(initial=0.0)))

    def feasible(z, _f):
        return z[-1] < depth and bar.cons(z[:n]).max() < 0

    z, _, iters, status, _ = _barrier(aux, np.append(y0, s0), cfg, stop=feasible)
    if status == "stopped" or (z[-1] < 0 and bar.cons(z[:n]).max() < 0):
        return z[:n], iters, True
    return z[:n], iters, False


def _reduce_equalities(prog: ConvexProgram):
    """Return (x0, Z) with ``{x : A x = b} = {x0 + Z y}``."""
    n = prog.n
    A, b = prog.A_eq, prog.b_eq
    if A.shape[0] == 0:
        return np.zeros(n), None
    U, sv, Vt = np.linalg.svd(A)
    rank = int(np.sum(sv > 1e-10 * max(1.0, sv.max(initial=0.0))))
    if rank < A.shape[0]:
        raise ValueError("equality constraints must have full row rank")
    x0 = Vt[:rank].T @ ((U[:, :rank].T @ b) / sv[:rank])
    return x0, Vt[rank:].T


def solve_reference(program: ConvexProgram, config: Optional[SolverConfig] = None,
                    x0: Optional[np.ndarray] = None) -> SolveReport:
    """Solve ``program`` to high accuracy.

    ``x0`` is an optional starting guess; it need not be feasible.
    """
    cfg = config or SolverConfig()
    start = time.perf_counter()
    n = program.n
    xp, Z = _reduce_equalities(program)
    if Z is None:
        P, q, r = program.P, program.q, program.r
        G, h = program.G, program.h
        quads = [(qc.Q, qc.c, qc.d) for qc in program.quad]

        def lift(y):
            return y
        y0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    else:
        P = Z.T @ program.P @ Z
        q = Z.T @ (2.0 * program.P @ xp + program.q)
        r = program.r + float(xp @ program.P @ xp + program.q @ xp)
        G = program.G @ Z
        h = program.h - program.G @ xp
        quads = [(Z.T @ qc.Q @ Z, Z.T @ (2.0 * qc.Q @ xp + qc.c),
                  qc.d - float(xp @ qc.Q @ xp + qc.c @ xp)) for qc in program.quad]

        def lift(y):
            return xp + Z @ y
        y0 = np.zeros(Z.shape[1]) if x0 is None else Z.T @ (np.asarray(x0, dtype=float) - xp)

    bar = _Barrier(P, q, r, G, h, quads)

    def report(status, y, resid, iters):
        x = None if y is None else lift(y)
        obj = program.objective(x) if x is not None else np.nan
        return SolveReport(status, x, obj, resid, iters, time.perf_counter() - start)

    if bar.m == 0:
        if bar.n == 0:
            return report("optimal", np.zeros(0), 0.0, 0)
        y = -0.5 * np.linalg.lstsq(P, q, rcond=None)[0]
        resid = float(np.max(np.abs(2.0 * P @ y + q), initial=0.0))
        status = "optimal" if resid <= cfg.kkt_tol else "max_iter"
        return report(status, y, resid, 1)

    iters = 0
    f = bar.cons(y0)
    # a start on (or within rounding of) the boundary stalls Newton
    if f.max() >= -1e-9 * max(1.0, float(np.abs(bar.h).max(initial=0.0))):
        y0, iters, found = _phase_one(bar, y0, cfg)
        if not found:
            return report("infeasible", None, np.inf, iters)
    # start the central path where the objective and the m log terms are
    # of similar size; tau = 1 on a large objective pins the first
    # centring against a curved boundary
    tau0 = min(1.0, bar.m / max(1.0, abs(bar.f0(y0))))
    y, tau, it2, status, f = _barrier(bar, y0, cfg, tau0=tau0)
    iters += it2
    resid = bar.kkt_residual(y, tau, f)
    if status == "optimal" and (resid > cfg.kkt_tol or program.max_violation(lift(y)) > cfg.feas_tol):
        status = "max_iter"
    return report(status, y, resid, iters)


# ---------------------------------------------------------------------------
# complex <-> real lowering

def to_real(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex).reshape(-1)
    return np.concatenate([x.real, x.imag])


def to_complex(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0] // 2
    return y[:n] + 1j * y[n:2 * n]


def real_linear(c: np.ndarray):
    """Rows ``(a_re, a_im)`` with ``a_re @ to_real(x) = Re(c^T x)`` and likewise Im."""
    c = np.asarray(c, dtype=complex).reshape(-1)
    return np.concatenate([c.real, -c.imag]), np.concatenate([c.imag, c.real])


def real_quadratic(R: np.ndarray) -> np.ndarray:
    """Symmetric ``S`` with ``to_real(x) @ S @ to_real(x) = x^H R x`` (R Hermitian)."""
    R = np.asarray(R, dtype=complex)
    return np.block([[R.real, -R.imag], [R.imag, R.real]])
