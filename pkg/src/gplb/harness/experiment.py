"""Monte-Carlo runs over class members and replicates, and parameter sweeps."""

from __future__ import annotations

import functools
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..adversaries import AdversaryState, robust_optimum, xi_regret
from ..algorithms import Oracle, gp_ucb_run, random_run, time_to_epsilon
from ..bounds import class_size, invert_horizon
from ..hard_instances import (HardClass, build_final_point_class, build_simplified_matern_class,
                              build_standard_class)
from ..kernels import Kernel, NumericalFailure, unit_grid
from .config import ExperimentConfig, from_dict
from .stats import finite_median, loglog_slope, wilson_interval

ROW_COLUMNS = ("setting", "kind", "member", "replicate", "T", "R_T", "simple_regret",
               "xi_regret", "time_to_eps", "spent", "success", "error")
NOISELESS_MODEL_VAR = 1e-4


def kernel_of(cfg: ExperimentConfig) -> Kernel:
    k = cfg.kernel
    return Kernel.se(k.lengthscale) if k.family == "se" else Kernel.matern(k.nu, k.lengthscale)


def cert_grid_of(cfg: ExperimentConfig) -> np.ndarray:
    c = cfg.hard_class
    per_axis = c.cert_grid or {1: 256, 2: 64}.get(c.d, 16)
    return unit_grid(per_axis, c.d)


def build_class(cfg: ExperimentConfig) -> HardClass:
    return _build_class_cached(json.dumps(cfg.to_dict(), sort_keys=True))


@functools.lru_cache(maxsize=16)
def _build_class_cached(key: str) -> HardClass:
    cfg = from_dict(json.loads(key))
    k, c = kernel_of(cfg), cfg.hard_class
    grid = cert_grid_of(cfg)
    if c.kind == "standard":
        return build_standard_class(k, c.eps, c.B, c.d, c.kappa, grid, c.require_certified)
    if c.kind == "simplified_matern":
        return build_simplified_matern_class(k.nu, k.lengthscale, c.eps, c.B, c.d, c.kappa,
                                             grid, c.require_certified)
    return build_final_point_class(k, c.xi, c.eps, c.B, c.d, c.eta, c.kappa,
                                   c.plateau_resolution, grid, c.require_certified)


def cell_seed(master: int, point: int, member: int, replicate: int) -> np.random.SeedSequence:
    """Stream for one (sweep point, member, replicate): spawn key splitting of the master seed."""
    return np.random.SeedSequence(master, spawn_key=(point, member, replicate))


def member_plan(cfg: ExperimentConfig, n_members: int) -> list[tuple[int, int]]:
    if cfg.members == "all":
        return [(m, r) for m in range(n_members) for r in range(cfg.replicates)]
    if cfg.members == "cycle":
        return [(r % n_members, r) for r in range(cfg.replicates)]
    bad = [m for m in cfg.members if not 0 <= m < n_members]
    if bad:
        raise ValueError(f"members: index {bad[0]} outside [0, {n_members})")
    return [(m, r) for m in cfg.members for r in range(cfg.replicates)]


@dataclass
class Row:
    setting: str
    kind: str
    member: int
    replicate: int
    T: int = 0
    R_T: float = math.nan
    simple_regret: float = math.nan
    xi_regret: float = math.nan
    time_to_eps: int | None = None
    spent: float = 0.0
    success: bool = False
    error: str = ""
    counts: list = field(default_factory=list, repr=False)

    @property
    def key(self) -> tuple[int, int]:
        return self.member, self.replicate


def run_trajectory(cfg: ExperimentConfig, cls: HardClass, f, seed: np.random.SeedSequence,
                   T: int | None = None):
    """One player run against ``f`` (+ noise, + adversary) under ``cfg``."""
    T = cfg.T if T is None else T
    noise_ss, tie_ss = seed.spawn(2)
    adv = None
    if cfg.adversary is not None:
        B0 = cfg.adversary.B0 if cfg.adversary.B0 is not None else 8.0 * cls.eps
        adv = AdversaryState(cfg.adversary.C, B0)
    oracle = Oracle(f, cfg.noise_var, adv, seed=np.random.default_rng(noise_ss))
    grid = unit_grid(cfg.grid.acquisition, cls.d)
    a = cfg.algorithm
    if a.name == "random":
        return random_run(oracle, T, grid, np.random.default_rng(tie_ss), cls.partition), adv
    model_var = a.model_noise_var or (cfg.noise_var if cfg.noise_var > 0 else NOISELESS_MODEL_VAR)
    stop = None
    if cfg.time_to_eps.early_stop:
        stop = cfg.time_to_eps.eps or cls.eps
    traj = gp_ucb_run(kernel_of(cfg), oracle, T, a.B or cls.B, model_var, a.delta, grid,
                      seed=np.random.default_rng(tie_ss), deterministic=a.deterministic,
                      reporting=a.reporting, partition=cls.partition, stop_eps=stop)
    return traj, adv


@functools.lru_cache(maxsize=64)
def _robust_best(key: str, member: int) -> float:
    cfg = from_dict(json.loads(key))
    cls = build_class(cfg)
    g = cfg.grid
    best, _ = robust_optimum(cls.members[member], unit_grid(g.evaluation, cls.d),
                             cls.params["xi"], g.perturbation)
    return best


def run_cell(cfg: ExperimentConfig, label: str, point: int, member: int, replicate: int) -> Row:
    cls = build_class(cfg)
    row = Row(label, cls.kind.value, member, replicate)
    try:
        f = cls.members[member]
        traj, adv = run_trajectory(cfg, cls, f, cell_seed(cfg.seed, point, member, replicate))
        eps_t = cfg.time_to_eps.eps or cls.eps
        row.T = traj.T
        row.R_T = traj.R_T
        row.spent = adv.spent if adv is not None else 0.0
        row.counts = traj.counts.tolist()
        if traj.T:
            row.simple_regret = traj.simple_regret()
            row.time_to_eps = time_to_epsilon(traj, f, eps_t, cfg.time_to_eps.rule)
            if cfg.setting == "corrupted_final_point":
                key = json.dumps(cfg.to_dict(), sort_keys=True)
                row.xi_regret = xi_regret(f, traj.returned_point, cls.params["xi"],
                                          cfg.grid.perturbation, best=_robust_best(key, member))
                row.success = bool(row.xi_regret <= cls.eps)
            else:
                row.success = bool(row.simple_regret <= cls.eps)
        else:
            row.R_T = 0.0
    except NumericalFailure as exc:
        row.error = f"NumericalFailure: {exc}"
    except Exception as exc:  # recorded per cell, never silently dropped
        row.error = f"{type(exc).__name__}: {exc}"
        row.error += " | " + traceback.format_exc(limit=1).strip().splitlines()[-1]
    return row


def _run_cell_packed(args):
    cfg_dict, label, point, member, replicate = args
    return run_cell(from_dict(cfg_dict), label, point, member, replicate)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    aggregates: dict
    class_info: dict

    @property
    def has_numerical_failure(self) -> bool:
        return any(r.error.startswith("NumericalFailure") for r in self.rows)


def aggregate(rows: list) -> dict:
    ok = [r for r in rows if not r.error]
    n = len(ok)
    succ = sum(r.success for r in ok)
    lo, hi = wilson_interval(succ, n) if n else (0.0, 1.0)
    RT = np.array([r.R_T for r in ok]) if n else np.zeros(0)
    sr = np.array([r.simple_regret for r in ok]) if n else np.zeros(0)
    xr = np.array([r.xi_regret for r in ok]) if n else np.zeros(0)

    def stat(fn, arr):
        arr = arr[~np.isnan(arr)]
        return float(fn(arr)) if arr.size else math.nan

    return {
        "n_rows": len(rows),
        "n_errors": len(rows) - n,
        "mean_R_T": stat(np.mean, RT),
        "median_R_T": stat(np.median, RT),
        "mean_simple_regret": stat(np.mean, sr),
        "median_simple_regret": stat(np.median, sr),
        "median_xi_regret": stat(np.median, xr),
        "median_time_to_eps": finite_median([r.time_to_eps for r in ok]) if n else math.nan,
        "success_rate": succ / n if n else math.nan,
        "success_lo": lo,
        "success_hi": hi,
        "max_spent": max((r.spent for r in ok), default=0.0),
    }


def class_summary(cls: HardClass) -> dict:
    return {"kind": cls.kind.value, "M": cls.M, "members": len(cls.members), "w": cls.w,
            "eps": cls.eps, "B": cls.B, "d": cls.d, "certified": cls.certified,
            "max_certificate": max(f.norm_certificate or 0.0 for f in cls.members)}


def run_experiment(cfg: ExperimentConfig, workers: int = 1, label: str | None = None,
                   point: int = 0) -> ExperimentResult:
    """All (member, replicate) cells of one configuration, in key order."""
    cls = build_class(cfg)
    plan = member_plan(cfg, len(cls.members))
    label = label or cfg.name
    if workers > 1 and len(plan) > 1:
        cfg_dict = cfg.to_dict()
        jobs = [(cfg_dict, label, point, m, r) for m, r in plan]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell_packed, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [run_cell(cfg, label, point, m, r) for m, r in plan]
    rows.sort(key=lambda r: r.key)
    return ExperimentResult(cfg, rows, aggregate(rows), class_summary(cls))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepPoint:
    value: float
    x: float
    y: float
    eps: float
    M: int
    result: ExperimentResult


@dataclass
class SweepResult:
    config: ExperimentConfig
    points: list
    slope: float | None
    intercept: float | None
    note: str

    @property
    def rows(self) -> list:
        return [r for p in self.points for r in p.result.rows]

    @property
    def has_numerical_failure(self) -> bool:
        return any(p.result.has_numerical_failure for p in self.points)


def eps_for_budget(cfg: ExperimentConfig, C: float, alpha: float) -> float:
    """Accuracy at which the horizon equals ``alpha C M(eps) / eps`` for this class family.

    Matern: ``M(eps) = (B / (2 eps kappa))^{d/nu}``, the continuous version of the
    class size.  SE: ``M(eps) = (log(B/eps))^{d/2}``.
    """
    c, k = cfg.hard_class, cfg.kernel
    if k.family == "matern":
        size = lambda e: (c.B / (2 * e * c.kappa)) ** (c.d / k.nu)
    else:
        size = lambda e: class_size("se", e, c.d, B=c.B)
    return invert_horizon(cfg.T, alpha * C, size, hi=min(0.49, c.B / 3))


def sweep_point_config(cfg: ExperimentConfig, value: float) -> ExperimentConfig:
    s = cfg.sweep
    if s.param == "eps":
        return cfg.replace(hard_class=replace(cfg.hard_class, eps=float(value)), sweep=None)
    if s.param == "T":
        return cfg.replace(T=int(value), sweep=None)
    new = cfg.replace(adversary=replace(cfg.adversary, C=float(value)), sweep=None)
    if s.alpha is not None:
        eps = eps_for_budget(cfg, float(value), s.alpha)
        new = new.replace(hard_class=replace(cfg.hard_class, eps=eps))
    return new


def scaling_sweep(cfg: ExperimentConfig, workers: int = 1) -> SweepResult:
    """One ``run_experiment`` per sweep value, then a log-log least-squares slope."""
    if cfg.sweep is None:
        raise ValueError("config has no sweep section")
    s = cfg.sweep
    points = []
    for i, v in enumerate(s.values):
        sub = sweep_point_config(cfg, v)
        res = run_experiment(sub, workers, label=f"{cfg.name}[{s.param}={v}]", point=i)
        x = 1.0 / v if s.invert_x else float(v)
        points.append(SweepPoint(float(v), x, res.aggregates[s.metric], sub.hard_class.eps,
                                 res.class_info["M"], res))
    slope, intercept, note = loglog_slope([p.x for p in points], [p.y for p in points])
    return SweepResult(cfg, points, slope, intercept, note)
