"""Users-only balancing (P5) and the two randomized anti-eavesdropping schemes."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..kkt import (DegenerateChannelError, PenaltyConfig, PenaltyError, build_p5_matrices,
                   solve_fast)
from ..model import ChannelSet, SeedLike, SymbolFrame, make_rng
from ..regions import Thresholds
from ..solution import PrecodingSolution, SchemeConfig
from ..solver import ConvexProgram, SolverConfig, solve_reference, to_complex
from .common import ci_rows, cot_of, power_matrix

log = logging.getLogger(__name__)

NULLSPACE_MESSAGE = "null space empty, requires N−K≥1"


class NullSpaceError(ValueError):
    """``N == K``: there is no room for a jammer invisible to the users."""


@dataclass(frozen=True)
class NullspaceBasis:
    """Orthonormal kernel basis ``V1`` of ``H`` and, for RPS, ``r0 = H^+ s``."""

    V1: np.ndarray
    r0: Optional[np.ndarray] = None


def nullspace_basis(H: np.ndarray, s: Optional[np.ndarray] = None) -> NullspaceBasis:
    """Last ``N - K`` right singular vectors of ``H`` (as columns)."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K, N = H.shape
    if N - K < 1:
        raise NullSpaceError(NULLSPACE_MESSAGE)
    _, sv, Vh = np.linalg.svd(H)
    if sv[-1] <= 1e-10 * max(1.0, sv[0]):
        raise DegenerateChannelError("H must have full row rank K")
    V1 = Vh[K:].conj().T
    r0 = None
    if s is not None:
        r0 = np.linalg.pinv(H) @ np.asarray(s, dtype=complex)
    return NullspaceBasis(V1, r0)


def users_only_program(H: np.ndarray, frame: SymbolFrame, P: float) -> ConvexProgram:
    """``max t`` over ``z = [Re x, Im x, t]`` with ``||x||^2 <= P``."""
    K, N = H.shape
    n = 2 * N + 1
    q = np.zeros(n)
    q[-1] = -1.0
    t_nonneg = np.zeros(n)
    t_nonneg[-1] = -1.0
    lin = ci_rows(H, frame.symbols, cot_of(frame.M), n, t_index=n - 1) + [(t_nonneg, 0.0)]
    return ConvexProgram.from_lists(n, q=q, linear_ineq=lin,
                                    quad_ineq=[(power_matrix(N, n), np.zeros(n), P)])


def _info_precoders(x: np.ndarray, frame: SymbolFrame) -> np.ndarray:
    """``w_i`` with ``sum_i w_i s_i = x`` (jamming column left empty)."""
    W = np.zeros((x.shape[0], frame.K + 1), dtype=complex)
    W[:, : frame.K] = np.outer(x, frame.symbols.conj()) / frame.K
    return W


def solve_users_only(H: np.ndarray, frame: SymbolFrame, P: float,
                     config: Optional[SchemeConfig] = None,
                     solver_config: Optional[SolverConfig] = None,
                     path: Optional[str] = None) -> PrecodingSolution:
    """Balance the CI margin over the users with budget ``P`` (P5)."""
    config = config or SchemeConfig()
    if P <= 0:
        raise ValueError("information power budget must be positive")
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    path = path or config.solver
    reason = None
    if path == "kkt":
        try:
            m = build_p5_matrices(H, frame)
            sol = solve_fast(m, P, PenaltyConfig(config.eta, config.eta_continuation,
                                                 config.epsilon, config.penalty_max_iter))
            sol.info["lam"] = np.conj(frame.symbols) * (H @ sol.x)
            return sol
        except (DegenerateChannelError, PenaltyError, ValueError) as exc:
            reason = str(exc)
            log.info("P5 falls back: %s", reason)
    rep = solve_reference(users_only_program(H, frame, P), solver_config)
    if not rep.optimal:
        raise RuntimeError(f"users-only balancing failed: {rep.status}")
    x = to_complex(rep.x[:-1])
    lam = np.conj(frame.symbols) * (H @ x)
    t = max(float(np.min(lam.real - cot_of(frame.M) * np.abs(lam.imag))), 0.0)
    info = {"lam": lam, "iterations": rep.iterations}
    if reason is not None:
        info["fallback"] = reason
    return PrecodingSolution(_info_precoders(x, frame), frame, Thresholds(t),
                             float(np.vdot(x, x).real), "P5", "reference", x=x, info=info)


def _check_split(P_s: float, P_n: float):
    if P_s <= 0:
        raise ValueError("P_s must be positive")
    if not 0.0 <= P_n < P_s:
        raise ValueError("jamming power must satisfy 0 <= P_n < P_s")


def build_rjs(channels: ChannelSet, frame: SymbolFrame, P_s: float, P_n: float,
              seed: SeedLike, config: Optional[SchemeConfig] = None,
              solver_config: Optional[SolverConfig] = None,
              path: Optional[str] = None) -> PrecodingSolution:
    """Random jamming: CI precoders for the users plus a null-space jammer.

    ``k`` is drawn from a real standard normal with ``seed``; the jammer
    phase is the frame's ``jamming_phase``.
    """
    _check_split(P_s, P_n)
    basis = nullspace_basis(channels.H)
    base = solve_users_only(channels.H, frame, P_s - P_n, config, solver_config, path)
    rng = make_rng(seed)
    k = rng.standard_normal(basis.V1.shape[1])
    v = basis.V1 @ k
    p = v / np.linalg.norm(v)
    W = base.W.copy()
    W[:, frame.K] = np.sqrt(P_n) * p
    x_info = base.x
    x = x_info + np.sqrt(P_n) * p * np.exp(1j * frame.jamming_phase)
    info = dict(base.info, p=p, k=k, tau=base.info["lam"], P_n=P_n, base_path=base.solver_path)
    power = float(np.vdot(x_info, x_info).real) + P_n
    return PrecodingSolution(W, frame, base.thresholds, power, "RJS", base.solver_path,
                             x=x, x_info=x_info, info=info)


def build_rps(channels: ChannelSet, frame: SymbolFrame, P_s: float, P_n: float,
              seed: SeedLike, config: Optional[SchemeConfig] = None,
              solver_config: Optional[SolverConfig] = None,
              path: Optional[str] = None) -> PrecodingSolution:
    """Random precoding: a random solution of ``H p_hat = s``, normalised.

    The random column carries no jamming phase, so the returned frame has
    ``jamming_phase = 0`` and ``W b = x``.
    """
    _check_split(P_s, P_n)
    s = frame.symbols
    basis = nullspace_basis(channels.H, s)
    base = solve_users_only(channels.H, frame, P_s - P_n, config, solver_config, path)
    rng = make_rng(seed)
    k = rng.standard_normal(basis.V1.shape[1])
    p_hat = basis.V1 @ k + basis.r0
    norm = float(np.linalg.norm(p_hat))
    p = p_hat / norm
    frame0 = frame.with_jamming_phase(0.0)
    W = base.W.copy()
    W[:, frame.K] = np.sqrt(P_n) * p
    x_info = base.x
    x = x_info + np.sqrt(P_n) * p
    boost = np.sqrt(P_n) / norm
    info = dict(base.info, p=p, p_hat=p_hat, k=k, tau=base.info["lam"], boost=boost,
                P_n=P_n, base_path=base.solver_path)
    power = float(np.vdot(x_info, x_info).real) + P_n
    return PrecodingSolution(W, frame0, base.thresholds, power, "RPS", base.solver_path,
                             x=x, x_info=x_info, info=info)
