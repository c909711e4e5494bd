"""Command-line driver: load an experiment file, simulate, check, write outputs.

Usage::

    sweepcover run CONFIG [--out-dir DIR]
    sweepcover bounds CONFIG
    sweepcover check CONFIG TIMESERIES_CSV

Exit codes: 0 success, 2 config error, 3 collision, 4 verdict failure,
5 density bound violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import tomli

from . import analysis, exprlang
from .partition import CollisionError, PartitionConfig, PartitionHistory, initial_state
from .region import (AssumptionViolation, DensityField, GeometryError, RegionSpec,
                     check_density_bounds, estimate_density_bounds)
from .sweep import SweepConfig, SweepOutcome, run_dsca

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COLLISION = 3
EXIT_VERDICT = 4
EXIT_ASSUMPTION = 5

_TOP_KEYS = {"sigma", "q", "partition", "region", "density", "outputs"}
_PARTITION_KEYS = {"n", "kappa", "epsilon", "v", "dt", "mass_mode", "recompute_every",
                   "quad_resolution", "initial_x"}
_REGION_KEYS = {"g_a", "g_b", "l"}
_DENSITY_KEYS = {"rho", "rho_lower", "rho_upper"}
_OUTPUT_KEYS = {"out_dir", "frames", "frame_stride"}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    sweep: SweepConfig
    q: int
    out_dir: Path
    frames: bool
    frame_stride: int
    raw: dict


def _table(doc: dict, key: str, allowed: set, required: bool = True) -> dict:
    if key not in doc:
        if required:
            raise ConfigError(key, "missing section")
        return {}
    tbl = doc[key]
    if not isinstance(tbl, dict):
        raise ConfigError(key, "expected a table")
    extra = set(tbl) - allowed
    if extra:
        raise ConfigError(f"{key}.{sorted(extra)[0]}", "unknown key")
    return tbl


def _get(tbl: dict, prefix: str, key: str, kind, default=None):
    name = f"{prefix}.{key}" if prefix else key
    if key not in tbl:
        if default is None:
            raise ConfigError(name, "missing value")
        return default
    val = tbl[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if kind is str and isinstance(val, str):
        return val
    if kind is bool and isinstance(val, bool):
        return val
    raise ConfigError(name, f"expected {kind.__name__}, got {type(val).__name__}")


def load_config(path) -> ExperimentConfig:
    """Parse a TOML experiment file.

    Missing density bounds are estimated from samples of rho over the region.
    Raises :class:`ConfigError` (naming the field) or
    :class:`~sweepcover.region.AssumptionViolation`.
    """
    path = Path(path)
    try:
        doc = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("file", f"parse error: {exc}") from exc
    except OSError as exc:
        raise ConfigError("file", str(exc)) from exc
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown key")

    reg = _table(doc, "region", _REGION_KEYS)
    length = _get(reg, "region", "l", float)
    if not length > 0:
        raise ConfigError("region.l", "must be positive")
    try:
        region = RegionSpec.from_sources(_get(reg, "region", "g_a", str),
                                         _get(reg, "region", "g_b", str), length)
    except exprlang.ExprError as exc:
        raise ConfigError("region", str(exc)) from exc
    except GeometryError as exc:
        raise ConfigError("region", str(exc)) from exc

    den = _table(doc, "density", _DENSITY_KEYS)
    rho_src = _get(den, "density", "rho", str)
    try:
        rho_expr = exprlang.parse(rho_src, {"x", "y"})
    except exprlang.ExprError as exc:
        raise ConfigError("density.rho", str(exc)) from exc
    if "rho_lower" in den and "rho_upper" in den:
        lo = _get(den, "density", "rho_lower", float)
        hi = _get(den, "density", "rho_upper", float)
        density = DensityField(rho_expr, lo, hi, rho_src)
        check_density_bounds(density, region)
    else:
        lo, hi = estimate_density_bounds(rho_expr, region)
        lo = _get(den, "density", "rho_lower", float, lo)
        hi = _get(den, "density", "rho_upper", float, hi)
        density = DensityField(rho_expr, lo, hi, rho_src)

    part = _table(doc, "partition", _PARTITION_KEYS)
    pkw = {}
    for key in ("kappa", "epsilon", "v", "dt", "quad_resolution"):
        if key in part or key in ("kappa", "epsilon", "v"):
            pkw[key] = _get(part, "partition", key, float)
    pkw["n"] = _get(part, "partition", "n", int)
    if "mass_mode" in part:
        pkw["mass_mode"] = _get(part, "partition", "mass_mode", str)
    if "recompute_every" in part:
        pkw["recompute_every"] = _get(part, "partition", "recompute_every", int)
    try:
        pcfg = PartitionConfig(**pkw)
    except ValueError as exc:
        field = str(exc).split(":")[0]
        raise ConfigError(f"partition.{field}", str(exc)) from exc
    initial_x = None
    if "initial_x" in part:
        ix = part["initial_x"]
        if not isinstance(ix, list) or not all(isinstance(v, (int, float)) for v in ix):
            raise ConfigError("partition.initial_x", "expected an array of numbers")
        initial_x = tuple(float(v) for v in ix)

    sigma = _get(doc, "", "sigma", float)
    q = _get(doc, "", "q", int)
    if q < 1:
        raise ConfigError("q", "must be a positive integer")
    try:
        sweep = SweepConfig(sigma, pcfg, region, density, initial_x)
    except ValueError as exc:
        field = str(exc).split(":")[0]
        prefix = "" if field == "sigma" else "partition."
        raise ConfigError(prefix + field, str(exc)) from exc
    if initial_x is not None:
        try:
            initial_state(pcfg, region, density, initial_x)
        except ValueError as exc:
            raise ConfigError("partition.initial_x", str(exc)) from exc

    out = _table(doc, "outputs", _OUTPUT_KEYS, required=False)
    out_dir = Path(_get(out, "outputs", "out_dir", str, "out"))
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir
    frames = _get(out, "outputs", "frames", bool, False) if "frames" in out else False
    stride = _get(out, "outputs", "frame_stride", int, 100)
    if stride < 1:
        raise ConfigError("outputs.frame_stride", "must be >= 1")
    return ExperimentConfig(sweep, q, out_dir, frames, stride, doc)


def _num(x):
    if x is None:
        return None
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    return float(x)


def report_dict(cfg: ExperimentConfig, outcome: Optional[SweepOutcome],
                report: analysis.BoundReport, verdict: Optional[analysis.Verdict],
                collision: Optional[CollisionError] = None) -> dict:
    s = cfg.sweep
    doc = {
        "config": {
            "n": s.partition.n, "kappa": s.partition.kappa, "epsilon": s.partition.epsilon,
            "v": s.partition.v, "sigma": s.sigma, "dt": s.partition.dt, "q": cfg.q,
            "mass_mode": s.partition.mass_mode,
            "recompute_every": s.partition.recompute_every,
            "quad_resolution": s.partition.quad_resolution,
            "g_a": s.region.left.source, "g_b": s.region.right.source, "l": s.region.length_l,
            "rho": s.density.source, "rho_lower": s.density.rho_lower,
            "rho_upper": s.density.rho_upper,
            "initial_x": None if s.initial_x is None else list(s.initial_x),
        },
        "bounds": {name: _num(getattr(report, name)) for name in (
            "lambda_min", "lambda_max", "xi", "delta_t_bound", "rect_bound",
            "collision_threshold", "q", "H0", "T_p", "zeta_times", "zeta_samples",
            "iss_times", "iss_envelope")},
    }
    if outcome is not None:
        doc["outcome"] = {name: _num(getattr(outcome, name)) for name in (
            "T_p", "T_star", "T_actual", "delta_T", "finish_times", "masses_at_Tp",
            "swept_at_Tp", "total_mass", "assumption_violated", "H_series",
            "residual_times", "residual_series")}
    if verdict is not None:
        doc["verdict"] = {
            "passed": verdict.passed,
            "checks": {k: {"passed": c.passed,
                           "first_violation_time": _num(c.first_violation_time),
                           "worst": _num(c.worst)} for k, c in verdict.checks.items()},
        }
    doc["collision"] = None if collision is None else {
        "t": collision.t, "bar_index": collision.index, "x": collision.x.tolist()}
    return doc


def csv_header(n: int) -> list:
    return (["t"] + [f"x_{i}" for i in range(n + 1)] + [f"m_{i}" for i in range(1, n + 1)]
            + ["H", "envelope"] + [f"e_{i}" for i in range(1, n + 1)])


def _rows(history: PartitionHistory, envelope: np.ndarray, outcome: Optional[SweepOutcome],
          stride: int):
    K = len(history.t) - 1
    if outcome is None:
        times = history.t
        resid = np.full((K + 1, history.n), np.nan)
    else:
        times = outcome.residual_times
        resid = outcome.residual_series
    last = len(times) - 1
    for j, t in enumerate(times):
        if j % stride and j != K and j != last:
            continue
        k = min(j, K)
        env = envelope[k] if k < len(envelope) else float("nan")
        yield ([t] + list(history.x[k]) + list(history.m[k]) + [history.H[k], env]
               + list(resid[j]))


def write_timeseries(path: Path, history: PartitionHistory, envelope: np.ndarray,
                     outcome: Optional[SweepOutcome], stride: int):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(history.n))
        for row in _rows(history, envelope, outcome, stride):
            w.writerow([repr(float(v)) for v in row])


def emit_outputs(history: PartitionHistory, outcome: Optional[SweepOutcome],
                 report: analysis.BoundReport, cfg: ExperimentConfig,
                 verdict: Optional[analysis.Verdict] = None,
                 collision: Optional[CollisionError] = None,
                 out_dir: Optional[Path] = None) -> list:
    out_dir = Path(out_dir or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ts_path = out_dir / "timeseries.csv"
    write_timeseries(ts_path, history, report.iss_envelope, outcome, cfg.frame_stride)
    rep_path = out_dir / "report.json"
    doc = report_dict(cfg, outcome, report, verdict, collision)
    rep_path.write_text(json.dumps(doc, indent=1) + "\n")
    written = [ts_path, rep_path]
    if cfg.frames:
        from .frames import write_frames
        written += write_frames(out_dir / "frames", cfg.sweep, history, outcome,
                                cfg.frame_stride)
    return written


def run(cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> int:
    s = cfg.sweep
    try:
        outcome = run_dsca(s)
    except CollisionError as exc:
        hist = exc.history
        rep = analysis.build_report(s, cfg.q, float(hist.H[0]), hist.t)
        emit_outputs(hist, None, rep, cfg, None, exc, out_dir)
        print(f"collision: {exc}", file=sys.stderr)
        return EXIT_COLLISION
    hist = outcome.history
    rep = analysis.build_report(s, cfg.q, float(hist.H[0]), hist.t)
    verdict = analysis.verify_trajectory(hist, rep)
    emit_outputs(hist, outcome, rep, cfg, verdict, None, out_dir)
    if outcome.assumption_violated.any():
        idle = [i + 1 for i in np.nonzero(outcome.assumption_violated)[0]]
        print(f"note: agents {idle} ran out of workload before partition ended",
              file=sys.stderr)
    if not verdict.passed:
        for name, c in verdict.checks.items():
            if not c.passed:
                print(f"verdict failure: {name} first violated at t = "
                      f"{c.first_violation_time:.6g} (worst {c.worst:.6g})", file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


def bounds(cfg: ExperimentConfig) -> dict:
    s = cfg.sweep
    st = initial_state(s.partition, s.region, s.density, s.initial_x)
    rep = analysis.build_report(s, cfg.q, analysis.energy(st.m))
    return {name: _num(getattr(rep, name)) for name in (
        "lambda_min", "lambda_max", "xi", "delta_t_bound", "rect_bound",
        "collision_threshold", "q", "H0", "T_p")} | {"zeta_max": float(np.max(rep.zeta_samples))}


def read_timeseries(path) -> tuple[list, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return header, data


def check(cfg: ExperimentConfig, ts_path) -> tuple[int, dict]:
    """Re-verify the partition-phase rows of a recorded timeseries."""
    s = cfg.sweep
    n = s.partition.n
    header, data = read_timeseries(ts_path)
    if header != csv_header(n):
        raise ConfigError("timeseries", f"header does not match n = {n}")
    T_p = s.partition.partition_time(s.region)
    data = data[data[:, 0] <= T_p]
    t = data[:, 0]
    x = data[:, 1:n + 2]
    m = data[:, n + 2:2 * n + 2]
    H = np.array([analysis.energy(row) for row in m])
    hist = PartitionHistory(t, x, m, H, np.diff(m, axis=1) * s.partition.kappa, [],
                            s.partition, T_p)
    rep = analysis.build_report(s, cfg.q, float(H[0]), t)
    verdict = analysis.verify_trajectory(hist, rep)
    doc = {"passed": verdict.passed, "rows": int(len(t)),
           "checks": {k: {"passed": c.passed, "first_violation_time": c.first_violation_time,
                          "worst": c.worst} for k, c in verdict.checks.items()}}
    return (EXIT_OK if verdict.passed else EXIT_VERDICT), doc


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sweepcover", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="simulate and write timeseries.csv and report.json")
    p_run.add_argument("config")
    p_run.add_argument("--out-dir", type=Path, default=None)
    p_b = sub.add_parser("bounds", help="evaluate the theoretical bounds only")
    p_b.add_argument("config")
    p_c = sub.add_parser("check", help="re-verify a recorded timeseries")
    p_c.add_argument("config")
    p_c.add_argument("timeseries")
    args = ap.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.cmd == "run":
            return run(cfg, args.out_dir)
        if args.cmd == "bounds":
            print(json.dumps(bounds(cfg), indent=1))
            return EXIT_OK
        code, doc = check(cfg, args.timeseries)
        print(json.dumps(doc, indent=1))
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"density assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
