"""Full-CSI problems: power minimisation (P1) and SINR balancing (P2)."""

from __future__ import annotations

import logging
from typing import Optional, Sequence, Union

import numpy as np

from ..kkt import (DegenerateChannelError, PenaltyConfig, PenaltyError, build_kkt_matrices,
                   eve_threshold, solve_fast)
from ..model import ChannelSet, NoiseModel, SymbolFrame, snr_to_threshold
from ..regions import Region, Thresholds
from ..solution import PrecodingSolution, SchemeConfig
from ..solver import ConvexProgram, SolverConfig, solve_reference, to_complex
from .common import ci_rows, cot_of, eve_rows, lift_full, power_matrix

log = logging.getLogger(__name__)


class InfeasibleError(RuntimeError):
    """No subregion branch produced a feasible solution."""


def eve_threshold_of(config: SchemeConfig, noise: NoiseModel) -> Optional[float]:
    """Fixed ``t_e`` from the configuration, ``None`` when it is optimized."""
    if config.gamma_e_db is None:
        return None
    return snr_to_threshold(config.gamma_e_db, noise.sigma_e)


def _phi(channels: ChannelSet, frame: SymbolFrame, x: np.ndarray) -> complex:
    return complex(np.conj(frame.symbols[frame.target_index]) * (channels.g_e @ x))


def _lam(channels: ChannelSet, frame: SymbolFrame, x: np.ndarray) -> np.ndarray:
    return np.conj(frame.symbols) * (channels.H @ x)


def _reported_te(phi: complex, region: Region, cot: float, t_e: Optional[float]) -> float:
    return eve_threshold(phi, region, cot) if t_e is None else float(t_e)


# ---------------------------------------------------------------------------
# P1


def power_min_program(channels: ChannelSet, frame: SymbolFrame, t_k, region: Region,
                      t_e: Optional[float]) -> ConvexProgram:
    """``min ||x||^2`` with per-user CI margins ``t_k`` and Eve in ``region``."""
    N = channels.N
    n = 2 * N
    s = frame.symbols
    cot = cot_of(frame.M)
    lin = ci_rows(channels.H, s, cot, n, t_fixed=t_k)
    ineq, eq = eve_rows(channels.g_e, s[frame.target_index], cot, region, n, t_e)
    return ConvexProgram.from_lists(n, P=np.eye(n), linear_ineq=lin + ineq, linear_eq=eq)


def solve_power_min(channels: ChannelSet, frame: SymbolFrame,
                    gamma_k_db: Union[float, Sequence[float]],
                    config: Optional[SchemeConfig] = None,
                    noise: Optional[NoiseModel] = None,
                    solver_config: Optional[SolverConfig] = None) -> PrecodingSolution:
    """Minimum-power precoder meeting per-user targets ``gamma_k_db``.

    Each allowed subregion branch is solved and the cheapest feasible one
    kept. With ``config.gamma_e_db`` unset Eve's threshold is optimized.
    """
    config = config or SchemeConfig()
    noise = noise or NoiseModel()
    if channels.g_e is None:
        raise ValueError("power minimisation needs Eve's channel")
    K = channels.K
    g_db = np.broadcast_to(np.asarray(gamma_k_db, dtype=float), (K,))
    t_k = np.array([snr_to_threshold(v, noise.sigma_k) for v in g_db])
    t_e = eve_threshold_of(config, noise)
    cot = cot_of(frame.M)
    best = None
    for region in config.branches():
        rep = solve_reference(power_min_program(channels, frame, t_k, region, t_e), solver_config)
        if not rep.optimal:
            log.info("P1 branch %s: %s", region.value, rep.status)
            continue
        x = to_complex(rep.x)
        power = float(np.vdot(x, x).real)
        if best is None or power < best[0]:
            best = (power, region, x)
    if best is None:
        raise InfeasibleError("every P1 branch is infeasible")
    power, region, x = best
    phi = _phi(channels, frame, x)
    th = Thresholds(float(t_k.min()), t_k=t_k, t_e=_reported_te(phi, region, cot, t_e))
    return PrecodingSolution(lift_full(x, frame), frame, th, power, "P1", "reference", region,
                             x=x, info={"phi": phi, "lam": _lam(channels, frame, x)})


# ---------------------------------------------------------------------------
# P2


def balance_program(channels: ChannelSet, frame: SymbolFrame, P_s: float, region: Region,
                    t_e: Optional[float]) -> ConvexProgram:
    """``max t`` over ``z = [Re x, Im x, t]`` with the power ball and Eve in ``region``."""
    N = channels.N
    n = 2 * N + 1
    s = frame.symbols
    cot = cot_of(frame.M)
    q = np.zeros(n)
    q[-1] = -1.0
    t_nonneg = np.zeros(n)
    t_nonneg[-1] = -1.0
    lin = ci_rows(channels.H, s, cot, n, t_index=n - 1) + [(t_nonneg, 0.0)]
    ineq, eq = eve_rows(channels.g_e, s[frame.target_index], cot, region, n, t_e)
    return ConvexProgram.from_lists(n, q=q, linear_ineq=lin + ineq, linear_eq=eq,
                                    quad_ineq=[(power_matrix(N, n), np.zeros(n), P_s)])


def _reference_branch(channels, frame, P_s, region, t_e, cot, solver_config):
    rep = solve_reference(balance_program(channels, frame, P_s, region, t_e), solver_config)
    if not rep.optimal:
        return None
    x = to_complex(rep.x[:-1])
    lam = _lam(channels, frame, x)
    t = max(float(np.min(lam.real - cot * np.abs(lam.imag))), 0.0)
    phi = _phi(channels, frame, x)
    th = Thresholds(t, t_e=_reported_te(phi, region, cot, t_e))
    return PrecodingSolution(lift_full(x, frame), frame, th, float(np.vdot(x, x).real), "P2",
                             "reference", region, x=x,
                             info={"phi": phi, "lam": lam, "iterations": rep.iterations})


def solve_p2_branch(channels: ChannelSet, frame: SymbolFrame, P_s: float, region: Region,
                    config: Optional[SchemeConfig] = None, noise: Optional[NoiseModel] = None,
                    solver_config: Optional[SolverConfig] = None,
                    path: Optional[str] = None) -> Optional[PrecodingSolution]:
    """One subregion branch of P2; ``None`` when the branch is infeasible.

    ``path`` forces ``"kkt"`` or ``"reference"``; by default the closed
    form is tried first whenever Eve's threshold is free.
    """
    config = config or SchemeConfig()
    noise = noise or NoiseModel()
    t_e = eve_threshold_of(config, noise)
    cot = cot_of(frame.M)
    path = path or config.solver
    reason = None
    if path == "kkt":
        if t_e is not None:
            reason = "fixed Eve threshold"
        else:
            try:
                m = build_kkt_matrices(channels, frame, region)
                sol = solve_fast(m, P_s, PenaltyConfig(config.eta, config.eta_continuation,
                                                       config.epsilon, config.penalty_max_iter))
                sol.info["lam"] = _lam(channels, frame, sol.x)
                return sol
            except (DegenerateChannelError, PenaltyError, ValueError) as exc:
                reason = str(exc)
                log.info("P2 branch %s falls back: %s", Region(region).value, reason)
    sol = _reference_branch(channels, frame, P_s, region, t_e, cot, solver_config)
    if sol is not None and reason is not None:
        sol.info["fallback"] = reason
    return sol


def solve_sinr_balance_full(channels: ChannelSet, frame: SymbolFrame, P_s: float,
                            config: Optional[SchemeConfig] = None,
                            noise: Optional[NoiseModel] = None,
                            solver_config: Optional[SolverConfig] = None,
                            path: Optional[str] = None) -> PrecodingSolution:
    """Max-min CI threshold under ``||W b||^2 <= P_s`` with Eve destructive."""
    config = config or SchemeConfig()
    if channels.g_e is None:
        raise ValueError("full-CSI balancing needs Eve's channel")
    best = None
    for region in config.branches():
        sol = solve_p2_branch(channels, frame, P_s, region, config, noise, solver_config, path)
        if sol is not None and (best is None or sol.t > best.t):
            best = sol
    if best is None:
        raise InfeasibleError("every P2 branch is infeasible")
    return best
