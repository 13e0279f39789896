"""Statistical-CSI (P3) and no-CSI (P4) balancing by successive convex
approximation.

Both problems keep the individual precoders as variables, stacked as
``z = [Re vec(W), Im vec(W), t, (t_z)]`` with ``vec`` column-major. Each
outer step replaces the non-convex constraint by its first-order Taylor
surrogate around the previous iterate, which is an inner approximation,
so every iterate is feasible for the original problem and ``t`` never
decreases.

The frame norm is capped at ``(K + 2) P_s``. The constraints only involve
``W b`` and, for P3/P4, the jammer column, so without the cap the
precoders could grow without bound along ``W b = 0``; the cap is loose
enough to leave the optimal ``t`` untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..model import ChannelSet, NoiseModel, SymbolFrame
from ..regions import Thresholds
from ..solution import PrecodingSolution, SchemeConfig
from ..solver import (ConvexProgram, SolverConfig, real_linear, real_quadratic, solve_reference,
                      to_complex)
from .common import cot_of
from .full_csi import InfeasibleError

log = logging.getLogger(__name__)


def eve_sinr(W: np.ndarray, R_e: np.ndarray, target_index: int, sigma_e: float = 1.0) -> float:
    """Average SINR at Eve for the target user's precoder."""
    W = np.asarray(W, dtype=complex)
    quad = np.real(np.einsum("ni,nm,mi->i", W.conj(), R_e, W))
    signal = quad[target_index]
    interference = quad.sum() - signal
    return float(signal / (interference + sigma_e ** 2))


def taylor_quad_over_linear(x, y, x0, y0, U) -> float:
    """First-order expansion of ``x^H U x / y`` at ``(x0, y0)``."""
    return float(2.0 * np.real(np.vdot(x0, U @ x)) / y0 - np.real(np.vdot(x0, U @ x0)) / y0 ** 2 * y)


def taylor_reciprocal(y, y0) -> float:
    """First-order expansion of ``1 / y`` at ``y0``."""
    return 1.0 / y0 - (y - y0) / y0 ** 2


def taylor_norm2(x, x0) -> float:
    """First-order expansion of ``||x||^2`` at ``x0``."""
    return float(2.0 * np.real(np.vdot(x0, x)) - np.real(np.vdot(x0, x0)))


@dataclass
class _Layout:
    N: int
    K: int
    with_tz: bool

    @property
    def nW(self) -> int:
        return self.N * (self.K + 1)

    @property
    def n(self) -> int:
        return 2 * self.nW + 1 + int(self.with_tz)

    @property
    def t(self) -> int:
        return 2 * self.nW

    @property
    def tz(self) -> int:
        return 2 * self.nW + 1

    def embed_linear(self, r: np.ndarray):
        """Rows (Re, Im) over ``z`` of the complex functional ``r^T vec(W)``."""
        re, im = real_linear(r)
        out_re = np.zeros(self.n)
        out_im = np.zeros(self.n)
        out_re[: 2 * self.nW] = re
        out_im[: 2 * self.nW] = im
        return out_re, out_im

    def embed_quadratic(self, R: np.ndarray) -> np.ndarray:
        """``z^T S z = vec(W)^H R vec(W)``."""
        S = np.zeros((self.n, self.n))
        S[: 2 * self.nW, : 2 * self.nW] = real_quadratic(R)
        return S

    def column_selector(self, j: int) -> np.ndarray:
        E = np.zeros((self.N, self.nW), dtype=complex)
        E[:, j * self.N:(j + 1) * self.N] = np.eye(self.N)
        return E

    def W_of(self, z: np.ndarray) -> np.ndarray:
        return to_complex(z[: 2 * self.nW]).reshape(self.K + 1, self.N).T

    def z_of(self, W: np.ndarray, t: float, tz: Optional[float] = None) -> np.ndarray:
        v = W.T.reshape(-1)
        z = np.concatenate([v.real, v.imag, [t]])
        if self.with_tz:
            z = np.append(z, tz)
        return z


def _common_constraints(lay: _Layout, channels: ChannelSet, frame: SymbolFrame, P_s: float):
    """CI rows, ``t >= 0``, the power ball and the frame-norm cap."""
    H = channels.H
    b = frame.b
    s = frame.symbols
    cot = cot_of(frame.M)
    lin = []
    for k in range(lay.K):
        re, im = lay.embed_linear(np.conj(s[k]) * np.kron(b, H[k]))
        for sign in (1.0, -1.0):
            a = -re + sign * cot * im
            a[lay.t] += 1.0
            lin.append((a, 0.0))
    neg_t = np.zeros(lay.n)
    neg_t[lay.t] = -1.0
    lin.append((neg_t, 0.0))
    B = np.kron(b[None, :], np.eye(lay.N))
    quads = [(lay.embed_quadratic(B.conj().T @ B), np.zeros(lay.n), P_s),
             (lay.embed_quadratic(np.eye(lay.nW)), np.zeros(lay.n), (lay.K + 2) * P_s)]
    return lin, quads


def _zf_start(channels: ChannelSet, frame: SymbolFrame, P_s: float, zf_share: float) -> np.ndarray:
    """ZF information precoders on ``zf_share P_s``, jammer on the rest."""
    H = channels.H
    K, N = H.shape
    Hp = np.linalg.pinv(H)
    s = frame.symbols
    x_zf = Hp @ s
    c = np.sqrt(zf_share * P_s) / np.linalg.norm(x_zf)
    W = np.zeros((N, K + 1), dtype=complex)
    W[:, :K] = c * Hp
    if N > K:
        u = np.linalg.svd(H)[2][K:].conj().T[:, 0]
    else:
        u = x_zf / np.linalg.norm(x_zf)
    W[:, K] = np.sqrt((1.0 - zf_share) * P_s) * u
    return W


def _ci_threshold(channels: ChannelSet, frame: SymbolFrame, x: np.ndarray) -> float:
    lam = np.conj(frame.symbols) * (channels.H @ x)
    return max(float(np.min(lam.real - cot_of(frame.M) * np.abs(lam.imag))), 0.0)


def _sca_loop(build, z0, lay: _Layout, config: SchemeConfig, solver_config) -> tuple:
    """Run the outer loop; ``build(z_tilde)`` returns the surrogate program."""
    z_tilde = z0
    history: List[float] = []
    z = None
    for it in range(config.sca_max_outer):
        prog = build(z_tilde)
        rep = solve_reference(prog, solver_config, x0=z_tilde)
        if not rep.optimal:
            if it == 0:
                return None, history, rep.status
            log.info("SCA step %d ended with %s; keeping previous iterate", it, rep.status)
            break
        t_new = float(rep.x[lay.t])
        if history and t_new < history[-1]:
            # the previous iterate is feasible for this surrogate, so a
            # lower t is solver inaccuracy: keep the previous iterate
            break
        z = rep.x
        history.append(t_new)
        z_tilde = z
        if len(history) >= 2 and abs(history[-1] - history[-2]) <= config.sca_tolerance:
            break
    return z, history, "optimal"


def solve_sinr_balance_statistical(channels: ChannelSet, frame: SymbolFrame, P_s: float,
                                   config: Optional[SchemeConfig] = None,
                                   noise: Optional[NoiseModel] = None,
                                   solver_config: Optional[SolverConfig] = None) -> PrecodingSolution:
    """Balance the users' CI margin with Eve's average SINR bounded by ``t_e``.

    ``t_e`` is optimized through ``t_z = 1 / t_e`` and capped at
    ``config.gamma_e_cap_db``; without the cap the bound would be inactive.
    """
    config = config or SchemeConfig()
    noise = noise or NoiseModel()
    R = channels.R_e
    if R is None:
        raise ValueError("statistical balancing needs Eve's correlation matrix R_e")
    K, N = channels.K, channels.N
    m = frame.target_index
    lay = _Layout(N, K, True)
    base_lin, quads = _common_constraints(lay, channels, frame, P_s)
    tz_min = 10.0 ** (-config.gamma_e_cap_db / 10.0)
    cap_row = np.zeros(lay.n)
    cap_row[lay.tz] = -1.0
    sig2 = noise.sigma_e ** 2
    Em = lay.column_selector(m)
    S_m = lay.embed_quadratic(Em.conj().T @ R @ Em)
    others = [j for j in range(K + 1) if j != m]

    def build(z_tilde):
        W0 = lay.W_of(z_tilde)
        tz0 = float(z_tilde[lay.tz])
        c = np.zeros(lay.n)
        q_sum = sig2
        for j in others:
            w0 = W0[:, j]
            q_sum += float(np.real(np.vdot(w0, R @ w0)))
            row = np.zeros(lay.nW, dtype=complex)
            row[j * N:(j + 1) * N] = np.conj(R @ w0)
            re, _ = lay.embed_linear(row)
            c -= 2.0 * re / tz0
        c[lay.tz] += q_sum / tz0 ** 2
        surrogate = (S_m, c, 2.0 * sig2 / tz0)
        return ConvexProgram.from_lists(lay.n, q=-np.eye(lay.n)[lay.t],
                                        linear_ineq=base_lin + [(cap_row, -tz_min)],
                                        quad_ineq=quads + [surrogate])

    share = config.zf_share
    status = "not run"
    for attempt in range(config.sca_restarts + 1):
        W0 = _zf_start(channels, frame, P_s, share)
        g0 = eve_sinr(W0, R, m, noise.sigma_e)
        z0 = lay.z_of(W0, _ci_threshold(channels, frame, W0 @ frame.b) * 0.5, 1.0 / max(g0, 1e-12))
        z, history, status = _sca_loop(build, z0, lay, config, solver_config)
        if z is not None:
            break
        share *= 0.5
    else:
        raise InfeasibleError(f"P3 surrogate infeasible after restarts ({status})")
    W = lay.W_of(z)
    x = W @ frame.b
    t_e = 1.0 / float(z[lay.tz])
    th = Thresholds(_ci_threshold(channels, frame, x), t_e=t_e)
    info = {"t_history": history, "outer_iterations": len(history), "restarts": attempt,
            "gamma_e": eve_sinr(W, R, m, noise.sigma_e), "gamma_e_bound": t_e}
    return PrecodingSolution(W, frame, th, float(np.vdot(x, x).real), "P3", "sca", x=x, info=info)


def solve_sinr_balance_nocsi(channels: ChannelSet, frame: SymbolFrame, P_s: float, P_0: float,
                             config: Optional[SchemeConfig] = None,
                             solver_config: Optional[SolverConfig] = None) -> PrecodingSolution:
    """Balance the users' CI margin while keeping ``||p||^2 >= P_0``."""
    config = config or SchemeConfig()
    if not 0.0 <= P_0 < P_s:
        raise ValueError("jamming floor must satisfy 0 <= P_0 < P_s")
    K, N = channels.K, channels.N
    lay = _Layout(N, K, False)
    base_lin, quads = _common_constraints(lay, channels, frame, P_s)
    Ep = lay.column_selector(K)

    def build(z_tilde):
        lin = list(base_lin)
        if P_0 > 0:
            p0 = lay.W_of(z_tilde)[:, K]
            re, _ = lay.embed_linear(np.conj(p0) @ Ep)
            lin.append((-2.0 * re, -P_0 - float(np.real(np.vdot(p0, p0)))))
        return ConvexProgram.from_lists(lay.n, q=-np.eye(lay.n)[lay.t], linear_ineq=lin,
                                        quad_ineq=quads)

    share = min(config.zf_share, 1.0 - P_0 / P_s)
    status = "not run"
    for attempt in range(config.sca_restarts + 1):
        W0 = _zf_start(channels, frame, P_s, share)
        z0 = lay.z_of(W0, _ci_threshold(channels, frame, W0 @ frame.b) * 0.5)
        z, history, status = _sca_loop(build, z0, lay, config, solver_config)
        if z is not None:
            break
        share *= 0.5
    else:
        raise InfeasibleError(f"P4 surrogate infeasible after restarts ({status})")
    W = lay.W_of(z)
    x = W @ frame.b
    th = Thresholds(_ci_threshold(channels, frame, x))
    info = {"t_history": history, "outer_iterations": len(history), "restarts": attempt,
            "jamming_power": float(np.real(np.vdot(W[:, K], W[:, K])))}
    return PrecodingSolution(W, frame, th, float(np.vdot(x, x).real), "P4", "sca", x=x, info=info)
