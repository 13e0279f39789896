"""Post-hoc audit of a :class:`PrecodingSolution`.

Deliberately independent of the solvers: every quantity is recomputed
from ``H``, ``g_e``, ``W`` and the frame with plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..model import ChannelSet, NoiseModel
from ..solution import PrecodingSolution

AUDIT_TOL = 1e-6


@dataclass
class AuditReport:
    """Named checks with the measured slack of each (``>= 0`` means pass)."""

    checks: Dict[str, float] = field(default_factory=dict)
    tol: float = AUDIT_TOL
    tols: Dict[str, float] = field(default_factory=dict)

    def add(self, name: str, slack: float, tol: Optional[float] = None):
        self.checks[name] = float(slack)
        self.tols[name] = self.tol if tol is None else tol

    def ok(self, name: str) -> bool:
        return self.checks[name] >= -self.tols[name]

    @property
    def failures(self):
        return [k for k in self.checks if not self.ok(k)]

    @property
    def passed(self) -> bool:
        return not self.failures

    def __str__(self) -> str:
        lines = [f"{k}: {'ok' if self.ok(k) else 'FAIL'} ({v:.3e})" for k, v in self.checks.items()]
        return "\n".join(lines)


def _sector_cot(M: int) -> float:
    theta = np.pi / M
    return 0.0 if M == 2 else np.cos(theta) / np.sin(theta)


def audit_solution(sol: PrecodingSolution, channels: ChannelSet, P_s: Optional[float] = None,
                   P_0: Optional[float] = None, noise: Optional[NoiseModel] = None,
                   tol: float = AUDIT_TOL) -> AuditReport:
    """Check the constructive, destructive, power and scheme-specific conditions."""
    rep = AuditReport(tol=tol)
    frame = sol.frame
    K = frame.K
    s = np.exp(2j * np.pi * np.asarray(frame.indices) / frame.M)
    cot = _sector_cot(frame.M)
    W = np.asarray(sol.W)
    tag = sol.scheme_tag
    randomized = tag in ("RJS", "RPS")
    x_info = W[:, :K] @ s
    x = x_info if randomized else W @ frame.b

    rep.add("threshold_nonnegative", sol.t)
    if sol.thresholds.t_e is not None:
        rep.add("eve_threshold_nonnegative", sol.thresholds.t_e)

    lam = np.conj(s) * (channels.H @ x)
    if tag == "P1" and sol.thresholds.t_k is not None:
        t_req = np.asarray(sol.thresholds.t_k, dtype=float)
    else:
        t_req = np.full(K, sol.t)
    margin = lam.real - t_req - cot * np.abs(lam.imag)
    rep.add("constructive", float(margin.min()) / max(1.0, float(np.abs(t_req).max())))

    if randomized:
        power = float(np.vdot(x_info, x_info).real) + float(sol.info.get("P_n", 0.0))
    else:
        power = float(np.vdot(x, x).real)
    rep.add("reported_power", -abs(power - sol.transmit_power) / max(1.0, power))
    if P_s is not None and tag != "P1":
        rep.add("power_budget", P_s - power)

    if tag in ("P1", "P2") and sol.subregion is not None and channels.g_e is not None:
        m = frame.target_index
        phi = np.conj(s[m]) * (channels.g_e @ x)
        t_e = sol.thresholds.t_e or 0.0
        region = getattr(sol.subregion, "value", sol.subregion)
        scale = max(1.0, abs(phi))
        offset = phi.real - t_e
        if region == "A":
            worst = min(offset, cot * phi.imag - offset)
        elif region == "B":
            worst = min(offset, -cot * phi.imag - offset)
        else:
            worst = -offset
        rep.add("eve_destructive", worst / scale)

    if randomized:
        p = np.asarray(sol.info["p"])
        rep.add("jammer_unit_norm", -abs(np.linalg.norm(p) - 1.0))
        if tag == "RJS":
            rep.add("jammer_nullspace", -float(np.linalg.norm(channels.H @ p)), 1e-9)
        else:
            p_hat = np.asarray(sol.info["p_hat"])
            rep.add("rps_alignment", -float(np.linalg.norm(channels.H @ p_hat - s)), 1e-8)
    if tag == "P4" and P_0 is not None:
        p = W[:, K]
        rep.add("jamming_floor", float(np.vdot(p, p).real) - P_0)
    if tag == "P3" and channels.R_e is not None:
        noise = noise or NoiseModel()
        R = channels.R_e
        m = frame.target_index
        q = np.array([np.vdot(W[:, i], R @ W[:, i]).real for i in range(K + 1)])
        gamma = q[m] / (q.sum() - q[m] + noise.sigma_e ** 2)
        rep.add("eve_sinr_bound", (sol.thresholds.t_e - gamma) / max(1.0, gamma))
    return rep
