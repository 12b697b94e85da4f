"""CSV and plot-data output, with bound overlays for sweeps."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..bounds import BoundSpec, Setting, lower_bound
from .experiment import ROW_COLUMNS, ExperimentResult, SweepResult

AGG_COLUMNS = ("setting", "statistic", "value")
PLOT_COLUMNS = ("curve", "x", "y", "y_lo", "y_hi")


class EmitError(OSError):
    """The output location cannot be written."""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _prepare(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EmitError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _write(path: Path, header, rows) -> Path:
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror}") from None
    return path


def row_records(rows) -> list:
    return [[getattr(r, c) for c in ROW_COLUMNS] for r in rows]


def _results(result) -> list:
    if isinstance(result, SweepResult):
        return [(p.result.rows[0].setting if p.result.rows else f"{result.config.name}[{i}]",
                 p.result) for i, p in enumerate(result.points)]
    if result is None:
        return []
    return [(result.config.name, result)]


def aggregate_records(result) -> list:
    out = []
    for label, res in _results(result):
        for k in sorted(res.aggregates):
            out.append([label, k, float(res.aggregates[k])])
    if isinstance(result, SweepResult):
        out.append([result.config.name, "slope", result.slope if result.slope is not None else math.nan])
    return out


def bound_spec_for(result: SweepResult, value: float, point) -> BoundSpec | None:
    cfg = result.config
    b = cfg.bounds
    setting = b.setting if b is not None and b.setting else {
        "standard": "standard_simple" if cfg.sweep.metric == "median_time_to_eps" else "standard_cumulative",
        "corrupted_samples": "corrupted_samples",
        "corrupted_final_point": "corrupted_final_point"}[cfg.setting]
    c, k, a = cfg.hard_class, cfg.kernel, cfg.algorithm
    C = cfg.adversary.C if cfg.adversary is not None else None
    T = cfg.T
    if cfg.sweep.param == "C":
        C = value
    elif cfg.sweep.param == "T":
        T = value
    return BoundSpec(Setting(setting), k.family, eps=point.eps, B=c.B,
                     noise_var=cfg.noise_var if cfg.noise_var > 0 else 1.0,
                     delta=min(a.delta, 0.33), d=c.d, nu=k.nu, l=k.lengthscale, C=C,
                     xi=c.xi, T=T, knob=b.knob if b is not None else 1.0,
                     flags=dict(b.flags) if b is not None else {})


def plot_records(result) -> list:
    """``(curve, x, y, y_lo, y_hi)`` rows; sweeps also get the bound curve on the same x."""
    out = []
    if isinstance(result, SweepResult):
        metric = result.config.sweep.metric
        ys = []
        for p in result.points:
            lo, hi = _spread(p.result, metric)
            out.append(["empirical", p.x, p.y, lo, hi])
            ys.append(p.y)
        bound = []
        for p in result.points:
            try:
                bound.append(lower_bound(bound_spec_for(result, p.value, p)))
            except ValueError:
                bound.append(math.nan)
        bound = np.array(bound)
        b = result.config.bounds
        if b is not None and b.fit_knob:
            ok = np.isfinite(bound) & np.isfinite(ys) & (bound > 0) & (np.array(ys) > 0)
            if ok.any():
                bound = bound * math.exp(np.mean(np.log(np.array(ys)[ok]) - np.log(bound[ok])))
        for p, y in zip(result.points, bound):
            out.append(["bound", p.x, float(y), float(y), float(y)])
        return out
    for label, res in _results(result):
        by_member = {}
        for r in res.rows:
            if not r.error:
                by_member.setdefault(r.member, []).append(r.R_T)
        for m in sorted(by_member):
            v = np.array(by_member[m])
            out.append([f"{label}:R_T", float(m), float(np.median(v)),
                        float(np.quantile(v, 0.25)), float(np.quantile(v, 0.75))])
    return out


def _spread(res: ExperimentResult, metric: str) -> tuple[float, float]:
    ok = [r for r in res.rows if not r.error]
    if metric == "success_rate":
        return res.aggregates["success_lo"], res.aggregates["success_hi"]
    if metric == "median_time_to_eps":
        v = np.array([np.inf if r.time_to_eps is None else r.time_to_eps for r in ok], float)
    elif metric.endswith("simple_regret"):
        v = np.array([r.simple_regret for r in ok])
    else:
        v = np.array([r.R_T for r in ok])
    if v.size == 0:
        return math.nan, math.nan
    return float(np.quantile(v, 0.25)), float(np.quantile(v, 0.75))


def emit(result, fmt: str, out_dir) -> list:
    """Write ``result`` as ``csv`` (rows + aggregates) or ``plotdata``; returns the paths."""
    if fmt not in ("csv", "plotdata"):
        raise ValueError(f"unknown format {fmt!r}")
    out = _prepare(out_dir)
    if fmt == "plotdata":
        return [_write(out / "plotdata.csv", PLOT_COLUMNS, plot_records(result))]
    rows = result.rows if result is not None else []
    return [_write(out / "rows.csv", ROW_COLUMNS, row_records(rows)),
            _write(out / "aggregates.csv", AGG_COLUMNS, aggregate_records(result))]


def read_aggregates(path) -> dict:
    """Parse an ``aggregates.csv`` back into ``{setting: {statistic: value}}``."""
    out = {}
    with Path(path).open() as fh:
        for rec in csv.DictReader(fh):
            out.setdefault(rec["setting"], {})[rec["statistic"]] = float(rec["value"])
    return out


def read_rows(path) -> list:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


def write_json(obj, path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror}") from None
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")
