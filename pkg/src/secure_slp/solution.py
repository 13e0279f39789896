"""Containers shared by the solvers, schemes and the Monte Carlo harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import SymbolFrame
from .regions import Region, Thresholds

SCHEME_TAGS = ("P1", "P2", "P3", "P4", "P5", "RJS", "RPS")
SOLVER_PATHS = ("kkt-fast", "reference", "sca", "closed-form")


@dataclass
class PrecodingSolution:
    """Precoder ``W = [w_1 .. w_K, p]`` for one frame plus bookkeeping.

    ``x`` is the transmitted noiseless vector. For the randomized schemes
    it includes the jamming / random-precoding term, ``x_info`` does not.
    """

    W: np.ndarray
    frame: SymbolFrame
    thresholds: Thresholds
    transmit_power: float
    scheme_tag: str
    solver_path: str
    subregion: Optional[Region] = None
    x: Optional[np.ndarray] = None
    x_info: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme_tag not in SCHEME_TAGS:
            raise ValueError(f"unknown scheme tag {self.scheme_tag!r}")
        if self.solver_path not in SOLVER_PATHS:
            raise ValueError(f"unknown solver path {self.solver_path!r}")
        self.W = np.asarray(self.W, dtype=complex)
        if self.x is None:
            self.x = self.W @ self.frame.b
        if self.x_info is None:
            self.x_info = self.x

    @property
    def t(self) -> float:
        return self.thresholds.t


@dataclass
class SchemeConfig:
    """Knobs shared by the optimization-based schemes.

    ``region_restriction`` is ``"complete"`` (A, B and C&D with a free Eve
    threshold) or ``"AB-only"`` (A and B with ``t_e`` fixed from
    ``gamma_e_db``). ``subregion_policy`` is ``"all"`` or a single region
    tag. ``gamma_e_db`` set with the complete restriction pins ``t_e``.
    """

    sca_tolerance: float = 1e-4
    sca_max_outer: int = 50
    subregion_policy: str = "all"
    region_restriction: str = "complete"
    gamma_e_db: Optional[float] = None
    epsilon: float = 1e-8
    solver: str = "kkt"
    eta: float = 1e6
    eta_continuation: bool = False
    penalty_max_iter: int = 10_000
    gamma_e_cap_db: float = 0.0
    sca_restarts: int = 3
    zf_share: float = 0.8

    def __post_init__(self):
        if self.sca_tolerance <= 0 or self.epsilon <= 0:
            raise ValueError("tolerances must be positive")
        if self.sca_max_outer < 1:
            raise ValueError("sca_max_outer must be >= 1")
        if self.region_restriction not in ("complete", "AB-only"):
            raise ValueError("region_restriction must be 'complete' or 'AB-only'")
        if self.region_restriction == "AB-only" and self.gamma_e_db is None:
            raise ValueError("AB-only restriction needs a fixed gamma_e_db")
        if self.subregion_policy != "all":
            Region(self.subregion_policy)
        if self.solver not in ("kkt", "reference"):
            raise ValueError("solver must be 'kkt' or 'reference'")
        if not 0.0 < self.zf_share < 1.0:
            raise ValueError("zf_share must lie in (0, 1)")

    def branches(self):
        """Subregions to try under this configuration."""
        from .regions import ALL_REGIONS, AB_REGIONS
        pool = AB_REGIONS if self.region_restriction == "AB-only" else ALL_REGIONS
        if self.subregion_policy == "all":
            return pool
        region = Region(self.subregion_policy)
        if region not in pool:
            raise ValueError(f"subregion {region.value} excluded by {self.region_restriction}")
        return (region,)
