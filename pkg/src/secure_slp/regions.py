"""Rotated observations and constructive / destructive region membership.

All predicates are closed sets: points on a boundary belong to both
neighbouring regions. Inequalities are evaluated in the ``cot(theta)``
form, which is the ``tan(theta)`` form divided by a positive number and
stays finite for BPSK.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import SymbolFrame


class Region(str, enum.Enum):
    """Destructive subregion at Eve."""

    A = "A"
    B = "B"
    CD = "CD"


ALL_REGIONS = (Region.A, Region.B, Region.CD)
AB_REGIONS = (Region.A, Region.B)


@dataclass(frozen=True)
class Thresholds:
    """User threshold(s) and Eve threshold.

    ``t`` is the balanced threshold (or ``min(t_k)`` for power minimisation),
    ``t_k`` the per-user thresholds and ``t_e`` Eve's threshold (``None``
    when Eve is not constrained geometrically).
    """

    t: float
    t_k: Optional[np.ndarray] = None
    t_e: Optional[float] = None

    def __post_init__(self):
        if self.t < -1e-9:
            raise ValueError("user threshold must be nonnegative")
        if self.t_e is not None and self.t_e < -1e-9:
            raise ValueError("Eve threshold must be nonnegative")


def _cot(theta: float) -> float:
    if np.isclose(theta, np.pi / 2, rtol=0, atol=1e-15):
        return 0.0
    return float(np.cos(theta) / np.sin(theta))


def rotated_gain(channel_row, W, frame: SymbolFrame, reference_index: int) -> complex:
    """Bracketed factor of the received signal relative to ``s_ref``.

    Returns ``c^T (sum_i w_i e^{j(phi_i - phi_ref)} + p e^{j(phi_v - phi_ref)})``,
    so ``rotated_gain * s_ref`` is the noiseless received sample.
    ``reference_index`` is 0-based.
    """
    c = np.asarray(channel_row, dtype=complex).reshape(-1)
    W = np.asarray(W, dtype=complex)
    b = frame.b
    if W.shape != (c.shape[0], b.shape[0]):
        raise ValueError(f"W must be {c.shape[0]} x {b.shape[0]}, got {W.shape}")
    if not 0 <= reference_index < frame.K:
        raise ValueError("reference_index outside [0, K)")
    rotation = b * np.conj(b[reference_index])
    return complex(c @ (W @ rotation))


def constructive_margin(lam, t, theta: float):
    """``Re(lam) - t - cot(theta) |Im(lam)|``; nonnegative inside the region."""
    lam = np.asarray(lam)
    return lam.real - t - _cot(theta) * np.abs(lam.imag)


def in_constructive_region(lam: complex, t: float, theta: float) -> bool:
    """``|Im(lam)| <= tan(theta) (Re(lam) - t)``, boundary included."""
    return bool(constructive_margin(lam, t, theta) >= 0)


def destructive_margin(phi: complex, t_e: float, theta: float, region: Region) -> float:
    """Smallest slack of the subregion's inequalities (>= 0 means member)."""
    region = Region(region)
    offset = phi.real - t_e
    if region is Region.CD:
        return -offset
    cot = _cot(theta)
    if region is Region.A:
        return min(offset, cot * phi.imag - offset)
    return min(offset, -cot * phi.imag - offset)


def in_destructive_subregion(phi: complex, t_e: float, theta: float, region: Region) -> bool:
    """Membership of Eve's rotated observation in subregion A, B or C&D."""
    return bool(destructive_margin(complex(phi), t_e, theta, region) >= 0)


def eve_region_of(phi: complex, t_e: float, theta: float) -> Optional[Region]:
    """First subregion containing ``phi`` or ``None`` if it is constructive."""
    for region in ALL_REGIONS:
        if in_destructive_subregion(phi, t_e, theta, region):
            return region
    return None
