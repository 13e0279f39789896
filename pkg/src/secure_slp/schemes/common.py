"""Lowering of the per-frame problems into real convex programs.

Every constraint of the full-CSI problems depends on the precoders only
through the transmitted vector ``x = W b``, so these programs work in
``x`` (real variables ``[Re x, Im x]`` plus scalars) and lift back with
``W = x b^H / (K + 1)``.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from ..model import SymbolFrame
from ..regions import Region
from ..solver import real_linear

Row = Tuple[np.ndarray, float]


def cot_of(M: int) -> float:
    return 0.0 if M == 2 else float(np.cos(np.pi / M) / np.sin(np.pi / M))


def pad(row: np.ndarray, n: int, extra: Optional[dict] = None) -> np.ndarray:
    """Embed a row over ``[Re x, Im x]`` into ``n`` variables, setting extra slots."""
    out = np.zeros(n)
    out[: row.shape[0]] = row
    for idx, val in (extra or {}).items():
        out[idx] += val
    return out


def rotated_rows(c: np.ndarray, s_ref: complex):
    """Rows giving ``Re`` and ``Im`` of ``conj(s_ref) c^T x``."""
    return real_linear(np.conj(s_ref) * np.asarray(c, dtype=complex))


def ci_rows(H: np.ndarray, s: np.ndarray, cot: float, n: int,
            t_index: Optional[int] = None, t_fixed=None) -> List[Row]:
    """``cot |Im lam_k| <= Re lam_k - t`` as two rows per user.

    With ``t_index`` the threshold is the variable at that slot; otherwise
    ``t_fixed`` (scalar or per-user) is used.
    """
    rows: List[Row] = []
    K = H.shape[0]
    t_vals = None if t_fixed is None else np.broadcast_to(np.asarray(t_fixed, float), (K,))
    for k in range(K):
        re, im = rotated_rows(H[k], s[k])
        for sign in (1.0, -1.0):
            a = -re + sign * cot * im
            if t_index is not None:
                rows.append((pad(a, n, {t_index: 1.0}), 0.0))
            else:
                rows.append((pad(a, n), -float(t_vals[k])))
    return rows


def eve_rows(g: np.ndarray, s_m: complex, cot: float, region: Region, n: int,
             t_e: Optional[float]) -> Tuple[List[Row], List[Row]]:
    """Linear (inequality, equality) rows placing Eve's gain in ``region``.

    ``t_e = None`` means the threshold is free and eliminated: the branch
    then only asks for the cone that remains (``A``: ``Re, Im >= 0``).
    """
    region = Region(region)
    re, im = rotated_rows(g, s_m)
    ineq: List[Row] = []
    eq: List[Row] = []
    if t_e is None:
        if region is Region.CD:
            return ineq, eq
        ineq.append((pad(-re, n), 0.0))
        if cot > 0:
            ineq.append((pad(-im if region is Region.A else im, n), 0.0))
        return ineq, eq
    if region is Region.CD:
        ineq.append((pad(re, n), float(t_e)))
        return ineq, eq
    if cot == 0.0:
        # the sector degenerates to the line Re(phi) = t_e
        eq.append((pad(re, n), float(t_e)))
        return ineq, eq
    sign = -1.0 if region is Region.A else 1.0
    ineq.append((pad(-re, n), -float(t_e)))
    ineq.append((pad(re + sign * cot * im, n), float(t_e)))
    return ineq, eq


def power_matrix(N: int, n: int) -> np.ndarray:
    """``z^T P z = ||x||^2`` for ``z = [Re x, Im x, ...]``."""
    P = np.zeros((n, n))
    P[: 2 * N, : 2 * N] = np.eye(2 * N)
    return P


def lift_full(x: np.ndarray, frame: SymbolFrame) -> np.ndarray:
    """Precoder with ``W b = x`` and every column sharing the same direction."""
    return np.outer(x, frame.b.conj()) / (frame.K + 1)
