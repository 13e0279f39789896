"""Model primitives: PSK alphabets, channels, symbol frames, noise and power.

Channels follow the transpose convention ``y_k = h_k^T x``; no conjugation
is applied anywhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence]


def make_rng(seed: SeedLike, *keys: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` and an optional spawn key path.

    ``make_rng(seed, a, b)`` is ``Generator(PCG64(SeedSequence(seed,
    spawn_key=(a, b))))``. Sub-streams for experiment points and trials are
    derived this way, so every draw is a pure function of the integer path.
    Gaussian variates use numpy's ziggurat ``standard_normal``.
    """
    if isinstance(seed, np.random.Generator):
        if keys:
            raise ValueError("spawn keys require an integer seed")
        return seed
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def complex_gaussian(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    """Circularly-symmetric CN(0, scale^2) samples."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * (scale / np.sqrt(2.0))


def psk_symbol(index: int, M: int) -> complex:
    """Unit-modulus M-PSK point ``exp(j 2 pi index / M)``."""
    if M < 2:
        raise ValueError(f"M must be >= 2, got {M}")
    if not 0 <= index < M:
        raise ValueError(f"symbol index {index} outside [0, {M})")
    # exact values on the axes keep |s| == 1 to the last bit
    q, r = divmod(4 * index, M)
    if r == 0:
        return (1 + 0j, 1j, -1 + 0j, -1j)[q]
    return complex(np.exp(2j * np.pi * index / M))


@dataclass(frozen=True)
class Constellation:
    """M-PSK alphabet with phase 0 at index 0."""

    M: int

    def __post_init__(self):
        if self.M < 2 or self.M & (self.M - 1):
            raise ValueError(f"M must be a power of two >= 2, got {self.M}")

    @property
    def half_angle(self) -> float:
        return np.pi / self.M

    @property
    def cot_half_angle(self) -> float:
        """cot(pi/M), exactly zero for BPSK."""
        if self.M == 2:
            return 0.0
        return float(np.cos(self.half_angle) / np.sin(self.half_angle))

    @property
    def symbols(self) -> np.ndarray:
        return np.array([psk_symbol(i, self.M) for i in range(self.M)])

    def __getitem__(self, index) -> np.ndarray:
        return self.symbols[index]


@dataclass(frozen=True)
class ChannelSet:
    """Legitimate channel rows ``H`` (K x N), Eve's row ``g_e`` and optional ``R_e``."""

    H: np.ndarray
    g_e: Optional[np.ndarray] = None
    R_e: Optional[np.ndarray] = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=complex))
        object.__setattr__(self, "H", H)
        if self.g_e is not None:
            g = np.asarray(self.g_e, dtype=complex).reshape(-1)
            if g.shape[0] != H.shape[1]:
                raise ValueError("g_e length must equal the antenna count N")
            object.__setattr__(self, "g_e", g)
        if self.R_e is not None:
            R = np.asarray(self.R_e, dtype=complex)
            if R.shape != (H.shape[1], H.shape[1]):
                raise ValueError("R_e must be N x N")
            if not np.allclose(R, R.conj().T, atol=1e-10):
                raise ValueError("R_e must be Hermitian")
            if np.linalg.eigvalsh(R).min() <= 1e-10:
                raise ValueError("R_e must be positive definite")
            object.__setattr__(self, "R_e", R)

    @property
    def K(self) -> int:
        return self.H.shape[0]

    @property
    def N(self) -> int:
        return self.H.shape[1]

    def without_eve(self) -> "ChannelSet":
        return ChannelSet(self.H)


def exponential_correlation(N: int, r: float = 0.5) -> np.ndarray:
    """``[R]_{ij} = r^{|i-j|}``, positive definite for ``0 <= r < 1``."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"correlation coefficient must be in [0, 1), got {r}")
    idx = np.arange(N)
    return (r ** np.abs(idx[:, None] - idx[None, :])).astype(complex)


def draw_channels(N: int, K: int, seed: SeedLike, eve_correlation: Optional[float] = None) -> ChannelSet:
    """Draw i.i.d. CN(0, 1) legitimate rows and an Eve row.

    With ``eve_correlation`` set, ``R_e`` is the exponential model and Eve's
    row is drawn from CN(0, R_e) instead of CN(0, I).
    """
    if N < 1 or K < 1:
        raise ValueError("N and K must be positive")
    rng = make_rng(seed)
    H = complex_gaussian(rng, (K, N))
    g = complex_gaussian(rng, N)
    if eve_correlation is None:
        return ChannelSet(H, g)
    R = exponential_correlation(N, eve_correlation)
    L = np.linalg.cholesky(R)
    return ChannelSet(H, L @ g, R)


def snr_to_threshold(gamma_db: float, sigma: float) -> float:
    """Map a target SNR in dB to the CI distance ``t = sigma * sqrt(Gamma)``.

    ``-inf`` dB gives 0 (the zero-leakage case).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if np.isneginf(gamma_db):
        return 0.0
    return float(sigma * np.sqrt(10.0 ** (gamma_db / 10.0)))


@dataclass(frozen=True)
class SymbolFrame:
    """One slot of data symbols plus the jamming phase.

    ``target_index`` is the 0-based user whose symbol Eve tries to intercept.
    """

    indices: tuple
    M: int
    target_index: int = 0
    jamming_phase: float = 0.0

    def __post_init__(self):
        idx = tuple(int(i) for i in np.asarray(self.indices).reshape(-1))
        if any(not 0 <= i < self.M for i in idx):
            raise ValueError("symbol index outside the alphabet")
        if not 0 <= self.target_index < len(idx):
            raise ValueError("target_index outside [0, K)")
        object.__setattr__(self, "indices", idx)

    @property
    def K(self) -> int:
        return len(self.indices)

    @property
    def symbols(self) -> np.ndarray:
        return np.array([psk_symbol(i, self.M) for i in self.indices])

    @property
    def b(self) -> np.ndarray:
        """Stacked ``[s_1, ..., s_K, exp(j phi_v)]``."""
        return np.append(self.symbols, np.exp(1j * self.jamming_phase))

    def with_indices(self, indices: Sequence[int]) -> "SymbolFrame":
        return SymbolFrame(tuple(indices), self.M, self.target_index, self.jamming_phase)

    def with_jamming_phase(self, phase: float) -> "SymbolFrame":
        return SymbolFrame(self.indices, self.M, self.target_index, phase)


def draw_frame(K: int, M: int, rng: np.random.Generator, target_index: int = 0) -> SymbolFrame:
    """Uniform symbols and a uniform jamming phase on [0, 2 pi)."""
    indices = rng.integers(0, M, size=K)
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    return SymbolFrame(tuple(indices), M, target_index, phase)


@dataclass(frozen=True)
class NoiseModel:
    sigma_k: float = 1.0
    sigma_e: float = 1.0

    def __post_init__(self):
        if self.sigma_k <= 0 or self.sigma_e <= 0:
            raise ValueError("noise standard deviations must be positive")


@dataclass(frozen=True)
class PowerBudget:
    """Total power ``P_s`` and the jamming share ``rho``.

    ``P_n = P_0 = rho * P_s`` for the randomized schemes and the P4 floor.
    """

    P_s: float
    rho: float = 0.5
    P_n: float = field(init=False)
    P_0: float = field(init=False)

    def __post_init__(self):
        if self.P_s <= 0:
            raise ValueError("P_s must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        object.__setattr__(self, "P_n", self.rho * self.P_s)
        object.__setattr__(self, "P_0", self.rho * self.P_s)

    @classmethod
    def from_snr_db(cls, snr_db: float, rho: float = 0.5, sigma: float = 1.0) -> "PowerBudget":
        return cls(10.0 ** (snr_db / 10.0) * sigma ** 2, rho)
