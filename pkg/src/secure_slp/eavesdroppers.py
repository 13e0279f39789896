"""Receivers: nearest-phase PSK detection and the smart ML eavesdropper.

The smart eavesdropper replays the transmitter over every symbol
hypothesis. Replaying is the expensive part, so :class:`Replayer` caches
solutions and, for precoders that commute with a common rotation of all
symbols, solves only one hypothesis per rotation class.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .model import ChannelSet, Constellation, SymbolFrame

ML_HYPOTHESIS_LIMIT = 10 ** 6


@dataclass
class DetectionResult:
    """Detected index (or index vector for the ML detector) and its metric.

    ``metric`` is the absolute phase error for nearest-phase detection and
    the squared Euclidean distance for ML. ``flagged`` marks ``y = 0``.
    """

    symbol_index: Union[int, Tuple[int, ...]]
    metric: float
    correct: Optional[bool] = None
    flagged: bool = False


def _as_order(constellation) -> int:
    return constellation.M if isinstance(constellation, Constellation) else int(constellation)


def detect_common_batch(y, M: int) -> np.ndarray:
    """Nearest-phase decisions for an array of samples.

    Exact sector-boundary ties resolve to the lower index, and ``y = 0``
    maps to index 0.
    """
    y = np.asarray(y, dtype=complex)
    u = np.mod(np.angle(y) * M / (2.0 * np.pi), M)
    k = np.ceil(u - 0.5)
    idx = np.mod(k, M).astype(int)
    tie = (u - 0.5) == k
    nxt = np.mod(k + 1, M).astype(int)
    idx = np.where(tie, np.minimum(idx, nxt), idx)
    return np.where(y == 0, 0, idx)


def detect_common(y: complex, constellation, truth: Optional[int] = None) -> DetectionResult:
    """Index of the PSK sector containing ``arg(y)``."""
    M = _as_order(constellation)
    y = complex(y)
    idx = int(detect_common_batch(y, M))
    err = np.angle(y * np.exp(-2j * np.pi * idx / M)) if y != 0 else 0.0
    correct = None if truth is None else idx == int(truth)
    return DetectionResult(idx, float(abs(err)), correct, flagged=(y == 0))


def hypotheses(M: int, K: int):
    """All ``M^K`` index tuples in lexicographic order."""
    return itertools.product(range(M), repeat=K)


class Replayer:
    """Maps a hypothesized index tuple to the transmitted vector ``x``.

    ``solve(frame) -> x`` re-runs the transmitter on a frame that differs
    from ``template`` only in its indices (``None`` if infeasible). With
    ``equivariant=True`` the cache key is the tuple shifted so its first
    index is 0, and ``x`` is rotated back by ``exp(j 2 pi q / M)``.
    """

    def __init__(self, solve: Callable[[SymbolFrame], Optional[np.ndarray]], template: SymbolFrame,
                 equivariant: bool = True):
        self.solve = solve
        self.template = template
        self.equivariant = equivariant
        self.cache: Dict[Tuple[int, ...], Optional[np.ndarray]] = {}
        self.solves = 0

    def seed(self, indices: Sequence[int], x: Optional[np.ndarray]):
        """Store an already computed solution (e.g. the true frame's)."""
        key, _ = self._key(tuple(indices))
        if key not in self.cache and x is not None:
            q = indices[0] if self.equivariant else 0
            self.cache[key] = np.asarray(x) * np.exp(-2j * np.pi * q / self.template.M)

    def _key(self, indices: Tuple[int, ...]):
        if not self.equivariant:
            return indices, 0
        q = indices[0]
        M = self.template.M
        return tuple((i - q) % M for i in indices), q

    def __call__(self, indices: Sequence[int]) -> Optional[np.ndarray]:
        key, q = self._key(tuple(int(i) for i in indices))
        if key not in self.cache:
            self.solves += 1
            self.cache[key] = self.solve(self.template.with_indices(key))
        x = self.cache[key]
        if x is None:
            return None
        return x * np.exp(2j * np.pi * q / self.template.M)


def candidate_points(g: np.ndarray, replayer: Callable, M: int, K: int) -> Tuple[list, np.ndarray]:
    """Eve's noiseless observation ``g^T x(h)`` for every hypothesis ``h``."""
    if M ** K > ML_HYPOTHESIS_LIMIT:
        raise ValueError(f"M^K = {M ** K} hypotheses exceeds the limit {ML_HYPOTHESIS_LIMIT}")
    hyps = list(hypotheses(M, K))
    pts = np.full(len(hyps), np.nan + 0j)
    for i, h in enumerate(hyps):
        x = replayer(h)
        if x is not None:
            pts[i] = g @ x
    return hyps, pts


def detect_smart_ml(y_e: complex, channels: ChannelSet, replayer: Callable, constellation, K: int,
                    truth: Optional[Sequence[int]] = None, points=None) -> DetectionResult:
    """Exhaustive ML over ``M^K`` symbol vectors: ``argmin |y_e - g^T x(h)|^2``.

    Hypotheses the replayer cannot realise (``None``) are skipped. Pass
    ``points`` from :func:`candidate_points` to reuse them across samples.
    """
    M = _as_order(constellation)
    if M ** K > ML_HYPOTHESIS_LIMIT:
        raise ValueError(f"M^K = {M ** K} hypotheses exceeds the limit {ML_HYPOTHESIS_LIMIT}")
    if channels.g_e is None:
        raise ValueError("the smart eavesdropper needs g_e")
    hyps, pts = points if points is not None else candidate_points(channels.g_e, replayer, M, K)
    d = np.abs(complex(y_e) - pts) ** 2
    d = np.where(np.isnan(d), np.inf, d)
    best = int(np.argmin(d))
    if not np.isfinite(d[best]):
        raise ValueError("no hypothesis could be replayed")
    h = tuple(hyps[best])
    correct = None if truth is None else h == tuple(int(i) for i in truth)
    return DetectionResult(h, float(d[best]), correct)
