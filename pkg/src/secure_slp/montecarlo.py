"""Seeded Monte Carlo harness: power sweeps, SER sweeps, timing, scatter dumps.

Random streams
--------------
Every draw is a pure function of ``(seed, stream, ...)`` through
:func:`secure_slp.model.make_rng`:

* ``(seed, 0, trial)`` channels (``(seed, 0, 0)`` in fixed-channel mode),
* ``(seed, 1, trial)`` symbols and jamming phase,
* ``(seed, 2, trial)`` the random jammer / precoder coefficients,
* ``(seed, 3, point, trial)`` receiver noise.

Channels and symbols are shared by every grid point and every scheme, so
curves computed with the same seed are paired instance by instance.

CSV numbers are written with ``repr(float)``, the shortest decimal string
that round-trips an IEEE-754 double.
"""

from __future__ import annotations

import csv
import json
import logging
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import beta

from . import __version__
from .eavesdroppers import Replayer, candidate_points, detect_common_batch, detect_smart_ml
from .model import (ChannelSet, NoiseModel, PowerBudget, SymbolFrame, complex_gaussian, draw_channels,
                    draw_frame, make_rng)
from .schemes import (InfeasibleError, audit_solution, build_rjs, build_rps, solve_power_min,
                      solve_sinr_balance_full, solve_sinr_balance_nocsi,
                      solve_sinr_balance_statistical, solve_users_only)
from .solution import PrecodingSolution, SchemeConfig

log = logging.getLogger(__name__)

SCHEMES = ("P1", "P2", "P3", "P4", "P5", "RJS", "RPS")
CSV_HEADER = ("series", "x", "trials", "ok", "infeasible", "audit_failures", "value", "value_low",
              "value_high", "value_half_width", "eve_ser", "eve_low", "eve_high", "eve_half_width")


@dataclass
class ExperimentSpec:
    """One sweep.

    ``snr_grid`` is the transmit SNR ``P_s / sigma_k^2`` in dB for SER
    sweeps and the users' required SNR ``Gamma`` in dB for P1 power sweeps.
    ``gamma_e_grid`` (dB) adds one power series per fixed Eve SNR.
    ``rho`` splits the per-point budget: ``P_n = P_0 = rho P_s``.
    """

    scheme: str
    config: SchemeConfig = field(default_factory=SchemeConfig)
    N: int = 6
    K: int = 2
    M: int = 4
    snr_grid: Sequence[float] = (0.0, 5.0, 10.0, 15.0)
    gamma_e_grid: Optional[Sequence[float]] = None
    trials: int = 10_000
    seed: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)
    rho: float = 0.5
    eve: str = "common"
    channel_mode: str = "fast"
    eve_correlation: Optional[float] = None
    target_index: int = 0
    noiseless: bool = False
    jobs: int = 1

    def __post_init__(self):
        self.scheme = self.scheme.upper()
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.snr_grid) == 0 or (self.gamma_e_grid is not None and len(self.gamma_e_grid) == 0):
            raise ValueError("grids must be nonempty")
        if self.eve not in ("common", "smart"):
            raise ValueError("eve must be 'common' or 'smart'")
        if self.channel_mode not in ("fast", "fixed"):
            raise ValueError("channel_mode must be 'fast' or 'fixed'")
        if self.scheme == "P3" and self.eve_correlation is None:
            raise ValueError("P3 needs eve_correlation to build R_e")
        self.snr_grid = tuple(float(v) for v in self.snr_grid)
        if self.gamma_e_grid is not None:
            self.gamma_e_grid = tuple(float(v) for v in self.gamma_e_grid)

    def budget(self, snr_db: float) -> PowerBudget:
        return PowerBudget.from_snr_db(snr_db, self.rho, self.noise.sigma_k)

    def channels(self, trial: int) -> ChannelSet:
        key = 0 if self.channel_mode == "fixed" else trial
        return draw_channels(self.N, self.K, make_rng(self.seed, 0, key), self.eve_correlation)

    def frame(self, trial: int) -> SymbolFrame:
        return draw_frame(self.K, self.M, make_rng(self.seed, 1, trial), self.target_index)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_grid"] = list(self.snr_grid)
        d["gamma_e_grid"] = None if self.gamma_e_grid is None else list(self.gamma_e_grid)
        d.pop("jobs")
        return d


@dataclass
class CurvePoint:
    """Aggregate over the trials of one grid point.

    ``value`` is the mean user SER (SER sweeps) or mean transmit power
    (power sweeps). SER bounds are 95% Clopper-Pearson; power bounds are a
    normal-approximation 95% interval of the mean.
    """

    series: str
    x: float
    trials: int
    ok: int
    infeasible: int
    audit_failures: int
    value: float
    value_low: float
    value_high: float
    eve_ser: float = float("nan")
    eve_low: float = float("nan")
    eve_high: float = float("nan")
    mean_time: float = float("nan")
    user_errors: int = 0
    eve_errors: int = 0
    values: Optional[np.ndarray] = None

    @property
    def value_half_width(self) -> float:
        return 0.5 * (self.value_high - self.value_low)

    @property
    def eve_half_width(self) -> float:
        return 0.5 * (self.eve_high - self.eve_low)

    def row(self) -> tuple:
        return (self.series, self.x, self.trials, self.ok, self.infeasible, self.audit_failures,
                self.value, self.value_low, self.value_high, self.value_half_width, self.eve_ser,
                self.eve_low, self.eve_high, self.eve_half_width)


@dataclass
class CurveResult:
    points: List[CurvePoint]
    metadata: dict

    def series(self, label: Optional[str] = None) -> List[CurvePoint]:
        if label is None:
            label = self.points[0].series
        return [p for p in self.points if p.series == label]

    @property
    def labels(self) -> List[str]:
        out: List[str] = []
        for p in self.points:
            if p.series not in out:
                out.append(p.series)
        return out


def clopper_pearson(k: int, n: int, alpha: float = 0.05) -> Tuple[float, float]:
    """Exact binomial confidence interval for ``k`` successes in ``n``."""
    if n == 0:
        return float("nan"), float("nan")
    lo = 0.0 if k == 0 else float(beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def version_string() -> str:
    """Package version, suffixed with the git commit when available."""
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ---------------------------------------------------------------------------
# scheme dispatch


def precode(spec: ExperimentSpec, channels: ChannelSet, frame: SymbolFrame, P_s: float,
            trial: int, config: Optional[SchemeConfig] = None, path: Optional[str] = None,
            gamma_db: Optional[float] = None) -> PrecodingSolution:
    """Run ``spec.scheme`` on one frame with budget ``P_s``."""
    config = config or spec.config
    scheme = spec.scheme
    if scheme == "P1":
        if gamma_db is None:
            raise ValueError("P1 needs the users' target SNR")
        return solve_power_min(channels, frame, gamma_db, config, spec.noise)
    if scheme == "P2":
        return solve_sinr_balance_full(channels, frame, P_s, config, spec.noise, path=path)
    if scheme == "P3":
        return solve_sinr_balance_statistical(channels, frame, P_s, config, spec.noise)
    if scheme == "P4":
        return solve_sinr_balance_nocsi(channels, frame, P_s, spec.rho * P_s, config)
    if scheme == "P5":
        return solve_users_only(channels.H, frame, P_s, config, path=path)
    k_rng = make_rng(spec.seed, 2, trial)
    build = build_rjs if scheme == "RJS" else build_rps
    return build(channels, frame, P_s, spec.rho * P_s, k_rng, config, path=path)


def replayer_for(spec: ExperimentSpec, channels: ChannelSet, frame: SymbolFrame, P_s: float,
                 sol: Optional[PrecodingSolution] = None) -> Replayer:
    """Smart-Eve replay of the deterministic part of ``spec.scheme``.

    The randomized schemes are replayed through their information
    precoders only. P3/P4 start their SCA from a point that does not
    rotate with the symbols, so they are replayed without the rotation
    shortcut.
    """
    scheme = spec.scheme
    if scheme in ("RJS", "RPS"):
        P_info = P_s - spec.rho * P_s

        def solve(f):
            return _safe_x(lambda: solve_users_only(channels.H, f, P_info, spec.config))
    else:
        def solve(f):
            return _safe_x(lambda: precode(spec, channels, f, P_s, 0))
    rep = Replayer(solve, frame, equivariant=scheme not in ("P3", "P4"))
    if sol is not None:
        rep.seed(frame.indices, sol.x_info)
    return rep


def _safe_x(fn):
    try:
        return fn().x_info
    except (InfeasibleError, RuntimeError):
        return None


def _is_infeasible(exc: Exception) -> bool:
    return isinstance(exc, (InfeasibleError, RuntimeError))


# ---------------------------------------------------------------------------
# SER sweep


@dataclass
class _SerTrial:
    ok: bool
    user_errors: int = 0
    eve_error: int = 0
    audit_ok: bool = True
    seconds: float = 0.0


def _ser_trial(args) -> _SerTrial:
    spec, point, snr_db, trial = args
    budget = spec.budget(snr_db)
    channels = spec.channels(trial)
    frame = spec.frame(trial)
    t0 = time.perf_counter()
    try:
        sol = precode(spec, channels, frame, budget.P_s, trial)
    except Exception as exc:  # noqa: BLE001 - only infeasibility is tolerated
        if _is_infeasible(exc):
            return _SerTrial(False)
        raise
    seconds = time.perf_counter() - t0
    audit = audit_solution(sol, channels, budget.P_s, budget.P_0, spec.noise)
    rng = make_rng(spec.seed, 3, point, trial)
    noise_u = complex_gaussian(rng, spec.K, spec.noise.sigma_k)
    noise_e = complex_gaussian(rng, (), spec.noise.sigma_e)
    if spec.noiseless:
        noise_u = noise_u * 0.0
        noise_e = noise_e * 0.0
    truth = np.asarray(frame.indices)
    y = channels.H @ sol.x + noise_u
    user_errors = int(np.sum(detect_common_batch(y, spec.M) != truth))
    m = frame.target_index
    eve_error = 0
    if channels.g_e is not None:
        y_e = complex(channels.g_e @ sol.x + noise_e)
        if spec.eve == "common":
            eve_error = int(detect_common_batch(y_e, spec.M) != truth[m])
        else:
            rep = replayer_for(spec, channels, frame, budget.P_s, sol)
            pts = candidate_points(channels.g_e, rep, spec.M, spec.K)
            det = detect_smart_ml(y_e, channels, rep, spec.M, spec.K, points=pts)
            eve_error = int(det.symbol_index[m] != truth[m])
    return _SerTrial(True, user_errors, eve_error, audit.passed, seconds)


def _map(fn, jobs_args, jobs: int):
    if jobs <= 1:
        return [fn(a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, jobs_args, chunksize=max(1, len(jobs_args) // (8 * jobs))))


def run_ser_experiment(spec: ExperimentSpec, trial_order: Optional[Sequence[int]] = None) -> CurveResult:
    """User and Eve SER versus transmit SNR.

    User SER counts every user's symbol; Eve SER counts the target user's
    symbol. ``trial_order`` permutes execution order only.
    """
    if spec.scheme == "P1":
        raise ValueError("SER sweeps use the balancing schemes; P1 has a power sweep")
    order = list(range(spec.trials)) if trial_order is None else list(trial_order)
    if sorted(order) != list(range(spec.trials)):
        raise ValueError("trial_order must be a permutation of the trials")
    points = []
    label = spec.scheme + ("" if spec.eve == "common" else "-smart")
    for point, snr in enumerate(spec.snr_grid):
        results = _map(_ser_trial, [(spec, point, snr, t) for t in order], spec.jobs)
        by_trial = dict(zip(order, results))
        ordered = [by_trial[t] for t in range(spec.trials)]
        good = [r for r in ordered if r.ok]
        n = len(good)
        ue = sum(r.user_errors for r in good)
        ee = sum(r.eve_error for r in good)
        ulo, uhi = clopper_pearson(ue, n * spec.K)
        elo, ehi = clopper_pearson(ee, n)
        points.append(CurvePoint(
            label, snr, spec.trials, n, spec.trials - n, sum(not r.audit_ok for r in good),
            ue / (n * spec.K) if n else float("nan"), ulo, uhi,
            ee / n if n else float("nan"), elo, ehi,
            float(np.mean([r.seconds for r in good])) if n else float("nan"), ue, ee))
    return CurveResult(points, _metadata(spec, "ser"))


# ---------------------------------------------------------------------------
# power sweep


def _power_trial(args):
    spec, config, gamma_db, trial = args
    channels = spec.channels(trial)
    frame = spec.frame(trial)
    t0 = time.perf_counter()
    try:
        sol = precode(spec, channels, frame, 0.0, trial, config=config, gamma_db=gamma_db)
    except Exception as exc:  # noqa: BLE001
        if _is_infeasible(exc):
            return None, True, 0.0
        raise
    seconds = time.perf_counter() - t0
    audit = audit_solution(sol, channels, noise=spec.noise)
    return sol.transmit_power, audit.passed, seconds


def power_series(spec: ExperimentSpec) -> List[Tuple[str, SchemeConfig]]:
    """Series labels and configs: one per fixed Eve SNR, or one overall."""
    cfg = spec.config
    if spec.gamma_e_grid is None:
        ge = "" if cfg.gamma_e_db is None else f"@{cfg.gamma_e_db:g}dB"
        return [(cfg.region_restriction + ge, cfg)]
    return [(f"{cfg.region_restriction}@{g:g}dB", replace(cfg, gamma_e_db=g)) for g in spec.gamma_e_grid]


def run_power_experiment(spec: ExperimentSpec) -> CurveResult:
    """Mean P1 transmit power versus the users' required SNR.

    Infeasible trials are counted and excluded from the mean. Per-trial
    powers are kept in ``CurvePoint.values`` (NaN where infeasible).
    """
    if spec.scheme != "P1":
        raise ValueError("power sweeps are defined for P1")
    points = []
    for label, cfg in power_series(spec):
        for gamma in spec.snr_grid:
            res = _map(_power_trial, [(spec, cfg, gamma, t) for t in range(spec.trials)], spec.jobs)
            vals = np.array([np.nan if r[0] is None else r[0] for r in res])
            ok = vals[~np.isnan(vals)]
            n = ok.size
            mean = float(ok.mean()) if n else float("nan")
            half = 1.96 * float(ok.std(ddof=1)) / np.sqrt(n) if n > 1 else float("nan")
            audit_fail = sum(1 for r in res if r[0] is not None and not r[1])
            secs = [r[2] for r in res if r[0] is not None]
            points.append(CurvePoint(label, gamma, spec.trials, n, spec.trials - n, audit_fail, mean,
                                     mean - half, mean + half,
                                     mean_time=float(np.mean(secs)) if secs else float("nan"),
                                     values=vals))
    return CurveResult(points, _metadata(spec, "power"))


def power_gain(reference: CurveResult, other: CurveResult) -> CurveResult:
    """Per-point mean of ``other - reference`` over instances feasible in both.

    With the complete-region run as ``reference`` this is the power saved
    by the complete destructive region.
    """
    base = reference.series()
    points = []
    for label in other.labels:
        for p_ref, p in zip(base, other.series(label)):
            if p_ref.x != p.x:
                raise ValueError("power curves use different grids")
            d = p.values - p_ref.values
            d = d[~np.isnan(d)]
            n = d.size
            mean = float(d.mean()) if n else float("nan")
            half = 1.96 * float(d.std(ddof=1)) / np.sqrt(n) if n > 1 else float("nan")
            points.append(CurvePoint(f"gain:{label}", p.x, p.trials, n, p.trials - n, 0, mean,
                                     mean - half, mean + half, values=d))
    meta = {"kind": "power-gain", "reference": reference.metadata, "other": other.metadata}
    return CurveResult(points, meta)


# ---------------------------------------------------------------------------
# timing


@dataclass
class TimingReport:
    kkt_times: np.ndarray
    reference_times: np.ndarray
    kkt_t: np.ndarray
    reference_t: np.ndarray
    audit_failures: int
    repeat_times: np.ndarray

    @property
    def median_kkt(self) -> float:
        return float(np.median(self.kkt_times))

    @property
    def median_reference(self) -> float:
        return float(np.median(self.reference_times))

    @property
    def p95_kkt(self) -> float:
        return float(np.percentile(self.kkt_times, 95))

    @property
    def p95_reference(self) -> float:
        return float(np.percentile(self.reference_times, 95))

    @property
    def ratio(self) -> float:
        return self.median_kkt / self.median_reference

    @property
    def parity(self) -> np.ndarray:
        """Relative objective difference per instance."""
        return np.abs(self.kkt_t - self.reference_t) / np.maximum(np.abs(self.reference_t), 1.0)

    @property
    def repeat_spread(self) -> float:
        """Standard deviation over the median of the repeated single solve."""
        return float(np.std(self.repeat_times) / np.median(self.repeat_times))

    def summary(self) -> dict:
        return {"instances": int(self.kkt_times.size), "median_kkt_s": self.median_kkt,
                "median_reference_s": self.median_reference, "p95_kkt_s": self.p95_kkt,
                "p95_reference_s": self.p95_reference, "ratio": self.ratio,
                "max_parity": float(self.parity.max()), "audit_failures": self.audit_failures,
                "repeat_spread": self.repeat_spread}


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def run_timing_benchmark(spec: ExperimentSpec, repeats: int = 5) -> TimingReport:
    """kkt-fast versus the reference solver on identical P2 or P5 instances.

    One instance per trial at ``snr_grid[0]``; the first instance is also
    solved ``repeats`` times by the fast path as a stability check.
    """
    if spec.scheme not in ("P2", "P5"):
        raise ValueError("timing is defined for P2 and P5")
    P_s = spec.budget(spec.snr_grid[0]).P_s
    kt, rt, kv, rv = [], [], [], []
    fails = 0
    for trial in range(spec.trials):
        ch = spec.channels(trial)
        fr = spec.frame(trial)
        fast, a = _timed(lambda: precode(spec, ch, fr, P_s, trial, path="kkt"))
        ref, b = _timed(lambda: precode(spec, ch, fr, P_s, trial, path="reference"))
        kt.append(a)
        rt.append(b)
        kv.append(fast.t)
        rv.append(ref.t)
        fails += not audit_solution(fast, ch, P_s).passed
        fails += not audit_solution(ref, ch, P_s).passed
    ch, fr = spec.channels(0), spec.frame(0)
    rep = [_timed(lambda: precode(spec, ch, fr, P_s, 0, path="kkt"))[1] for _ in range(repeats)]
    return TimingReport(np.array(kt), np.array(rt), np.array(kv), np.array(rv), fails, np.array(rep))


# ---------------------------------------------------------------------------
# constellation dump


def dump_constellation(spec: ExperimentSpec, uses: int = 1000, snr_db: Optional[float] = None) -> list:
    """Received points at user 0 and at Eve over ``uses`` channel uses.

    The channel is fixed (drawn from trial 0); symbols, jamming draws and
    noise are fresh per use. Rows are ``(use, receiver, symbol index,
    noiseless re, noiseless im, noisy re, noisy im)``.
    """
    fixed = replace(spec, channel_mode="fixed", trials=uses)
    snr = fixed.snr_grid[0] if snr_db is None else snr_db
    P_s = fixed.budget(snr).P_s
    ch = fixed.channels(0)
    rows = []
    for use in range(uses):
        fr = fixed.frame(use)
        try:
            sol = precode(fixed, ch, fr, P_s, use)
        except Exception as exc:  # noqa: BLE001
            if _is_infeasible(exc):
                continue
            raise
        rng = make_rng(fixed.seed, 3, 0, use)
        n_u = complex_gaussian(rng, fixed.K, fixed.noise.sigma_k)
        n_e = complex_gaussian(rng, (), fixed.noise.sigma_e)
        y0 = complex(ch.H[0] @ sol.x)
        rows.append((use, "U1", fr.indices[0], y0.real, y0.imag, (y0 + n_u[0]).real,
                     (y0 + n_u[0]).imag))
        if ch.g_e is not None:
            ye = complex(ch.g_e @ sol.x)
            m = fr.target_index
            rows.append((use, "Eve", fr.indices[m], ye.real, ye.imag, (ye + n_e).real,
                         (ye + n_e).imag))
    return rows


CONSTELLATION_HEADER = ("use", "receiver", "symbol", "noiseless_re", "noiseless_im", "noisy_re",
                        "noisy_im")


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_curve_csv(result: CurveResult, path) -> Path:
    """One row per grid point with the columns of ``CSV_HEADER``."""
    return write_rows(path, CSV_HEADER, (p.row() for p in result.points))


def write_metadata(result: CurveResult, path) -> Path:
    """JSON sidecar: spec echo, version and seed (no wall-clock data)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.metadata, indent=2, sort_keys=True, default=_json_default) + "\n",
                    encoding="utf-8")
    return path


def timing_of(result: CurveResult) -> Dict[str, float]:
    """Mean solve time per point, kept apart from the reproducible outputs."""
    return {f"{p.series}@{p.x!r}": p.mean_time for p in result.points}


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _metadata(spec: ExperimentSpec, kind: str) -> dict:
    return {"kind": kind, "spec": spec.to_dict(), "version": version_string(), "seed": spec.seed}
