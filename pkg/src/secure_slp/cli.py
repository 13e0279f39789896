"""Command line: ``solve`` one frame or run an ``experiment`` sweep.

Experiment config files are line based: ``key = value`` per line, ``#``
starts a comment, lists are comma separated. ``--set key=value`` flags
override the file. Unknown keys are an error.

All randomness derives from ``seed``: ``solve`` uses the channels and
symbols of trial 0 of the corresponding experiment (see
:mod:`secure_slp.montecarlo` for the stream layout).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from .model import NoiseModel, PowerBudget
from .montecarlo import (CONSTELLATION_HEADER, ExperimentSpec, dump_constellation, power_gain, precode,
                         run_power_experiment, run_ser_experiment, run_timing_benchmark, timing_of,
                         version_string, write_curve_csv, write_metadata, write_rows)
from .schemes import InfeasibleError, NullSpaceError, audit_solution, nullspace_basis
from .solution import SchemeConfig

SCHEME_KEYS = {f.name for f in dataclasses.fields(SchemeConfig)}
SPEC_KEYS = {"scheme", "N", "K", "M", "snr_grid", "gamma_e_grid", "trials", "seed", "rho", "eve",
             "channel_mode", "eve_correlation", "target_index", "noiseless"}
EXTRA_KEYS = {"kind", "sigma_k", "sigma_e", "compare_ab", "dump_constellation", "constellation_snr",
              "repeats", "name"}
KNOWN_KEYS = SCHEME_KEYS | SPEC_KEYS | EXTRA_KEYS
KINDS = ("power", "ser", "timing", "constellation")


class UsageError(ValueError):
    """Invalid flag or config combination."""


# ---------------------------------------------------------------------------
# config parsing


def parse_config_text(text: str) -> Dict[str, str]:
    """``key = value`` lines into a dict of raw strings."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise UsageError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _parse_overrides(items: List[str]) -> Dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in KNOWN_KEYS:
            raise UsageError(f"unknown key {key!r}")
        out[key] = value
    return out


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def _float_or_none(v: str) -> Optional[float]:
    return None if v.strip().lower() in ("", "none") else float(v)


def _float_list(v: str) -> List[float]:
    return [float(s) for s in v.split(",") if s.strip()]


def _convert(key: str, value: str):
    types = {f.name: f.type for f in dataclasses.fields(SchemeConfig)}
    if key in ("snr_grid",):
        return _float_list(value)
    if key == "gamma_e_grid":
        return None if value.lower() == "none" else _float_list(value)
    if key in ("N", "K", "M", "trials", "seed", "target_index", "dump_constellation", "repeats"):
        return int(value)
    if key in ("rho", "sigma_k", "sigma_e", "constellation_snr"):
        return float(value)
    if key in ("eve_correlation", "gamma_e_db"):
        return _float_or_none(value)
    if key in ("noiseless", "compare_ab", "eta_continuation"):
        return _bool(value)
    if key in types:
        t = str(types[key])
        if "int" in t:
            return int(value)
        if "float" in t:
            return float(value)
    return value


def build_spec(raw: Dict[str, str], jobs: int = 1):
    """Resolve raw key/values into ``(kind, ExperimentSpec, extras)``."""
    vals = {k: _convert(k, v) for k, v in raw.items()}
    kind = vals.pop("kind", "ser")
    if kind not in KINDS:
        raise UsageError(f"kind must be one of {KINDS}")
    cfg = SchemeConfig(**{k: vals.pop(k) for k in list(vals) if k in SCHEME_KEYS})
    noise = NoiseModel(vals.pop("sigma_k", 1.0), vals.pop("sigma_e", 1.0))
    extras = {k: vals.pop(k) for k in list(vals) if k in EXTRA_KEYS}
    if "scheme" not in vals:
        raise UsageError("config needs a scheme")
    spec = ExperimentSpec(config=cfg, noise=noise, jobs=jobs, **vals)
    return kind, spec, extras


# ---------------------------------------------------------------------------
# outputs


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclasses.dataclass
class RunManifest:
    command: List[str]
    config: Dict[str, str]
    input_digest: str
    outputs: List[str]
    started: str
    finished: str = ""
    exit_status: int = 0
    version: str = ""

    def write(self, path: Path):
        _atomic_write(Path(path), json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")


def _digest(raw: Dict[str, str]) -> str:
    text = "\n".join(f"{k}={raw[k]}" for k in sorted(raw))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# solve


def _solve_raw(args) -> Dict[str, str]:
    raw = {"scheme": args.scheme.upper(), "N": str(args.n), "K": str(args.k), "M": str(args.m),
           "seed": str(args.seed), "rho": str(args.rho), "snr_grid": "0"}
    if args.eve_correlation is not None:
        raw["eve_correlation"] = str(args.eve_correlation)
    if args.region_restriction:
        raw["region_restriction"] = args.region_restriction
    if args.gamma_e_db is not None:
        raw["gamma_e_db"] = str(args.gamma_e_db)
    if args.gamma_e_fixed is not None:
        g = float(args.gamma_e_fixed)
        if g < 0:
            raise UsageError("--gamma-e-fixed must be >= 0")
        raw["gamma_e_db"] = "-inf" if g == 0 else repr(10.0 * math.log10(g))
    if args.solver:
        raw["solver"] = args.solver
    return raw


def write_solution(sol, audit, out: Path) -> List[str]:
    """``W.csv`` (real/imag interleaved per column), ``solution.json``, ``audit.json``."""
    out.mkdir(parents=True, exist_ok=True)
    W = sol.W
    header = []
    for j in range(W.shape[1]):
        header += [f"re_{j}", f"im_{j}"]
    rows = []
    for i in range(W.shape[0]):
        row = []
        for j in range(W.shape[1]):
            row += [float(W[i, j].real), float(W[i, j].imag)]
        rows.append(row)
    w_path = write_rows(out / "W.csv", header, rows)
    th = sol.thresholds
    doc = {"scheme": sol.scheme_tag, "solver_path": sol.solver_path,
           "subregion": None if sol.subregion is None else sol.subregion.value,
           "t": th.t, "t_k": None if th.t_k is None else [float(v) for v in th.t_k],
           "t_e": th.t_e, "transmit_power": sol.transmit_power,
           "symbols": list(sol.frame.indices), "M": sol.frame.M,
           "jamming_phase": sol.frame.jamming_phase, "fallback": sol.info.get("fallback")}
    s_path = out / "solution.json"
    _atomic_write(s_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    a_path = out / "audit.json"
    _atomic_write(a_path, json.dumps({"passed": audit.passed, "checks": audit.checks,
                                      "failures": audit.failures}, indent=2, sort_keys=True) + "\n")
    return [str(w_path), str(s_path), str(a_path)]


def cmd_solve(args) -> int:
    if args.scheme == "p3" and args.eve_correlation is None:
        raise UsageError("p3 needs a correlation model (--eve-correlation)")
    raw = _solve_raw(args)
    _, spec, _ = build_spec(raw)
    channels = spec.channels(0)
    frame = spec.frame(0)
    if spec.scheme in ("RJS", "RPS"):
        nullspace_basis(channels.H)
    P_s = float(args.ps)
    budget = PowerBudget(P_s, spec.rho)
    sol = precode(spec, channels, frame, P_s, 0, gamma_db=args.gamma)
    audit = audit_solution(sol, channels, None if spec.scheme == "P1" else P_s, budget.P_0, spec.noise)
    out = Path(args.out)
    outputs = write_solution(sol, audit, out)
    print(f"{sol.scheme_tag} via {sol.solver_path}: t = {sol.t:.6g}, power = {sol.transmit_power:.6g}"
          + ("" if sol.subregion is None else f", subregion {sol.subregion.value}"))
    print(str(audit))
    status = 0 if audit.passed else 1
    if not audit.passed:
        print("audit failed: " + ", ".join(audit.failures), file=sys.stderr)
    return _finish(args, raw, outputs, out, status)


def _finish(args, raw, outputs, out: Path, status: int) -> int:
    manifest = RunManifest(command=list(args.argv), config=raw, input_digest=_digest(raw), outputs=outputs,
                           started=args.started, finished=_now(), exit_status=status,
                           version=version_string())
    manifest.write(out / "manifest.json")
    return status


# ---------------------------------------------------------------------------
# experiment


def cmd_experiment(args) -> int:
    raw: Dict[str, str] = {}
    if args.from_manifest:
        raw.update(json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))["config"])
    if args.config:
        raw.update(parse_config_text(Path(args.config).read_text(encoding="utf-8")))
    for flag, key in (("scheme", "scheme"), ("eve", "eve"), ("rho", "rho"), ("trials", "trials"),
                      ("seed", "seed"), ("kind", "kind"), ("dump_constellation", "dump_constellation")):
        v = getattr(args, flag)
        if v is not None:
            raw[key] = str(v).upper() if key == "scheme" else str(v)
    raw.update(_parse_overrides(args.set))
    if raw.get("dump_constellation") and "kind" not in raw:
        raw["kind"] = "constellation"
    kind, spec, extras = build_spec(raw, jobs=args.jobs)
    out = Path(args.out)
    name = extras.get("name", kind)
    outputs: List[str] = []
    status = 0
    timing: Dict[str, object] = {}
    if kind == "power":
        # with compare_ab the Eve grid belongs to the AB-only baseline only
        base = dataclasses.replace(spec, gamma_e_grid=None) if extras.get("compare_ab") else spec
        res = run_power_experiment(base)
        outputs += _write_curve(res, out, f"{name}_{spec.config.region_restriction}")
        status |= _audit_status(res)
        timing.update(timing_of(res))
        if extras.get("compare_ab"):
            grid = spec.gamma_e_grid or (-5.0, 0.0, 5.0, 10.0)
            ab_cfg = dataclasses.replace(spec.config, region_restriction="AB-only", gamma_e_db=grid[0])
            ab = run_power_experiment(dataclasses.replace(spec, config=ab_cfg, gamma_e_grid=grid))
            outputs += _write_curve(ab, out, f"{name}_AB-only")
            gain = power_gain(res, ab)
            outputs += _write_curve(gain, out, f"{name}_gain")
            status |= _audit_status(ab)
            timing.update(timing_of(ab))
    elif kind == "ser":
        res = run_ser_experiment(spec)
        outputs += _write_curve(res, out, name)
        status |= _audit_status(res)
        timing.update(timing_of(res))
    elif kind == "timing":
        rep = run_timing_benchmark(spec, int(extras.get("repeats", 5)))
        summary = rep.summary()
        path = out / f"{name}.json"
        _atomic_write(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
        outputs.append(str(path))
        status |= int(rep.audit_failures > 0)
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        uses = int(extras.get("dump_constellation") or 1000)
        rows = dump_constellation(spec, uses, extras.get("constellation_snr"))
        outputs.append(str(write_rows(out / f"{name}.csv", CONSTELLATION_HEADER, rows)))
    if timing:
        path = out / f"{name}.timing.json"
        _atomic_write(path, json.dumps(timing, indent=2, sort_keys=True) + "\n")
        outputs.append(str(path))
    return _finish(args, raw, outputs, out, status)


def _write_curve(res, out: Path, stem: str) -> List[str]:
    csv_path = write_curve_csv(res, out / f"{stem}.csv")
    json_path = write_metadata(res, out / f"{stem}.json")
    for p in res.points:
        print(f"{p.series:>20s} x={p.x:<6g} value={p.value:.6g} eve_ser={p.eve_ser:.4g} "
              f"ok={p.ok}/{p.trials}")
    return [str(csv_path), str(json_path)]


def _audit_status(res) -> int:
    return int(any(p.audit_failures for p in res.points))


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="secure-slp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="precode one seeded frame and audit it")
    s.add_argument("--scheme", required=True, choices=["p1", "p2", "p3", "p4", "p5", "rjs", "rps"])
    s.add_argument("--n", type=int, default=6, help="transmit antennas")
    s.add_argument("--k", type=int, default=2, help="users")
    s.add_argument("--m", type=int, default=4, help="PSK order")
    s.add_argument("--ps", type=float, default=10.0, help="power budget P_s")
    s.add_argument("--rho", type=float, default=0.5, help="jamming share P_n/P_s (and P_0/P_s)")
    s.add_argument("--gamma", type=float, default=10.0, help="P1 users' target SNR in dB")
    s.add_argument("--gamma-e-db", type=float, default=None, help="fix Eve's SNR threshold (dB)")
    s.add_argument("--gamma-e-fixed", type=float, default=None,
                   help="fix Eve's SNR threshold (linear); 0 is the zero-leakage variant")
    s.add_argument("--region-restriction", choices=["complete", "AB-only"], default=None)
    s.add_argument("--eve-correlation", type=float, default=None,
                   help="exponential correlation coefficient for R_e (needed by p3)")
    s.add_argument("--solver", choices=["kkt", "reference"], default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="solve_out")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="run a Monte Carlo sweep from a config file")
    e.add_argument("--config", help="key = value config file")
    e.add_argument("--from-manifest", help="re-run the resolved config of a manifest")
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a key")
    e.add_argument("--kind", choices=KINDS, default=None)
    e.add_argument("--scheme", default=None)
    e.add_argument("--eve", choices=["common", "smart"], default=None)
    e.add_argument("--rho", type=float, default=None)
    e.add_argument("--trials", type=int, default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--dump-constellation", type=int, default=None, metavar="USES")
    e.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    e.add_argument("--out", default="experiment_out")
    e.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    args.started = _now()
    try:
        return args.func(args)
    except NullSpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        parser.error(str(exc))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
