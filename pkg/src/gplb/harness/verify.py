"""Construction and lemma checks run against freshly built classes and trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..adversaries import corruptible_count
from ..algorithms import Oracle, gp_ucb_run
from ..bounds import divergence_decomposition, kl_gaussian, relating_check, tv_bound
from ..hard_instances import (ClassKind, eps_optimal_overlap, kl_table, lemma7_sums,
                              support_overlap, vbar_table)
from ..kernels import unit_grid
from ..rkhs import composite
from .config import ExperimentConfig
from .experiment import NOISELESS_MODEL_VAR, build_class, cell_seed, kernel_of, run_trajectory
from .stats import wilson_interval

PASS, FAIL, UNMET, SKIPPED = "pass", "fail", "hypotheses unmet", "skipped"


@dataclass
class Check:
    name: str
    status: str
    measured: dict = field(default_factory=dict)
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list

    @property
    def failed(self) -> list:
        return [c for c in self.checks if c.status == FAIL]

    @property
    def ok(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [c.__dict__ for c in self.checks]}


def overlap_grid(d: int, n_points: int) -> np.ndarray:
    per_axis = max(2, int(round(n_points ** (1.0 / d))))
    return unit_grid(per_axis, d)


def check_certification(cls) -> Check:
    certs = [f.norm_certificate for f in cls.members]
    worst = max(certs)
    return Check("certification", PASS if cls.certified and worst <= cls.B else FAIL,
                 {"max_certificate": worst, "B": cls.B, "components_within_B_over_3": cls.certified})


def check_geometry(cls, n_points: int) -> list:
    out = []
    grid = overlap_grid(cls.d, n_points)
    if cls.kind is ClassKind.SIMPLIFIED_MATERN:
        n = support_overlap(cls, grid)
        out.append(Check("support_disjoint", PASS if n == 0 else FAIL, {"overlap_points": n,
                                                                       "grid_points": len(grid)}))
    if cls.kind is not ClassKind.FINAL_POINT_ROBUST:
        n = eps_optimal_overlap(cls, grid)
        out.append(Check("eps_optimal_unique", PASS if n == 0 else FAIL,
                         {"shared_points": n, "grid_points": len(grid)}))
    return out


def check_lemma7(cls, per_region: int, bound: float) -> list:
    if cls.kind is ClassKind.FINAL_POINT_ROBUST:
        return []
    sums = lemma7_sums(vbar_table(cls, per_region), cls.eps)
    out = [Check("lemma7_sums", PASS if max(sums.values()) <= bound else FAIL,
                 dict(sums, bound=bound))]
    if cls.kind is ClassKind.SIMPLIFIED_MATERN:
        exact = abs(sums["row_sum"] - 2.0) <= 1e-9
        out.append(Check("lemma7_rows_exact", PASS if exact else FAIL, {"row_sum": sums["row_sum"]},
                         "single support per row: row sum is exactly 2 eps"))
    return out


def zero_sequence(cfg: ExperimentConfig, cls, T: int) -> np.ndarray:
    """Points a deterministic GP-UCB plays when every observation is 0."""
    a = cfg.algorithm
    zero = lambda X: np.zeros(len(np.atleast_2d(X)))
    model_var = a.model_noise_var or (cfg.noise_var if cfg.noise_var > 0 else NOISELESS_MODEL_VAR)
    traj = gp_ucb_run(kernel_of(cfg), Oracle(zero, 0.0), T, a.B or cls.B, model_var, a.delta,
                      unit_grid(cfg.grid.acquisition, cls.d))
    return traj.points


def check_corruptible(cfg: ExperimentConfig, cls) -> Check:
    alpha = cfg.verify.corruptible_alpha
    C = cfg.adversary.C
    T = int(math.floor(alpha * C * cls.M / cls.eps))
    pts = zero_sequence(cfg, cls, T)
    count = corruptible_count(cls, pts, C)
    forced = []
    noiseless = cfg.replace(noise_var=0.0, T=T)
    for m, f in enumerate(cls.members):
        traj, _ = run_trajectory(noiseless, cls, f, cell_seed(cfg.seed, 0, m, 0), T)
        forced.append(traj.R_T)
    big = int(sum(r >= T * cls.eps / 2 for r in forced))
    status = PASS if count >= cls.M / 2 and big >= cls.M / 2 - 1 else FAIL
    return Check("corruptible_count", status,
                 {"alpha": alpha, "T": T, "C": C, "M": cls.M, "corruptible": count,
                  "members_with_large_regret": big, "regret_threshold": T * cls.eps / 2,
                  "forced_regrets": forced})


def _event_rate(cfg, cls, f, judge, point, T, R):
    """Success count of ``judge(reported point)`` and mean region counts over ``R`` runs."""
    hits = 0
    counts = np.zeros(cls.partition.n_regions)
    for r in range(R):
        traj, _ = run_trajectory(cfg, cls, f, cell_seed(cfg.seed, point, 0, r), T)
        hits += bool(judge(traj.returned_point))
        counts += traj.counts
    return hits, counts / R


def region_kl(cls, diff, noise_var: float, per_region: int) -> np.ndarray:
    """``max_{x in R_j} diff(x)^2 / (2 sigma^2)`` for every partition cell."""
    part = cls.partition
    out = np.zeros(part.n_regions)
    for j in range(part.n_cells):
        v = np.max(np.abs(diff(part.subgrid(j, per_region))))
        out[j] = kl_gaussian(0.0, v, noise_var)
    return out


def check_relating(cfg: ExperimentConfig, cls) -> list:
    v = cfg.verify
    m, m2 = v.pair
    T = v.T or cfg.T
    R = v.replicates
    f = cls.members[m]
    bump2 = replace(cls.members[m2], height=2 * cls.members[m2].height, norm_certificate=None)
    f_alt = composite(f, bump2)
    peak = float(np.max(f(unit_grid(cfg.grid.acquisition, cls.d))))
    judge = lambda x: f.value(x) >= peak - cls.eps
    hits, EN = _event_rate(cfg, cls, f, judge, 1, T, R)
    hits_alt, _ = _event_rate(cfg, cls, f_alt, judge, 2, T, R)
    lo, _ = wilson_interval(hits, R)
    _, hi_alt = wilson_interval(hits_alt, R)
    delta_hat = max(1 - lo, hi_alt)
    Dbar = region_kl(cls, bump2, cfg.noise_var, cfg.grid.region)
    measured = {"pair": [m, m2], "T": T, "R": R, "P_f": hits / R, "P_f_alt": hits_alt / R,
                "delta_hat": delta_hat, "EN": EN.tolist(), "Dbar": Dbar.tolist()}
    checks = []
    if not delta_hat < 1 / 3:
        checks.append(Check("relating_lemma", UNMET, measured,
                            "success-probability hypotheses not met at the Wilson level"))
    else:
        lhs, rhs, holds = relating_check(EN, Dbar, delta_hat)
        measured.update(lhs=lhs, rhs=rhs)
        checks.append(Check("relating_lemma", PASS if holds else FAIL, measured))
    # divergence decomposition + total variation, against the zero function
    zero = replace(f, height=0.0, norm_certificate=None)
    hits0, EN0 = _event_rate(cfg, cls, zero, judge, 3, T, R)
    p0, pm = hits0 / R, hits / R
    D = divergence_decomposition(EN0, kl_table(cls, cfg.noise_var, cfg.grid.region)[m].tolist()
                                 + [0.0] * (cls.partition.n_regions - cls.partition.n_cells))
    se = math.sqrt(p0 * (1 - p0) / R + pm * (1 - pm) / R)
    gap = abs(pm - p0)
    bound = tv_bound(D) + 3 * se
    checks.append(Check("tv_divergence", PASS if gap <= bound else FAIL,
                        {"P_m": pm, "P_0": p0, "gap": gap, "divergence_bound": D,
                         "sqrt_bound": tv_bound(D), "mc_se": se, "EN0": EN0.tolist()}))
    return checks


def verify_lemmas(cfg: ExperimentConfig) -> VerifyReport:
    """Every applicable construction and lemma check for ``cfg``'s class."""
    cls = build_class(cfg)
    v = cfg.verify
    n_points = v.overlap_grid if v is not None else 10000
    checks = [check_certification(cls)]
    checks += check_geometry(cls, n_points)
    checks += check_lemma7(cls, cfg.grid.region, v.lemma7_max if v is not None else 8.0)
    if v is not None and v.corruptible_alpha is not None:
        if cfg.adversary is None:
            checks.append(Check("corruptible_count", SKIPPED, detail="no adversary configured"))
        else:
            checks.append(check_corruptible(cfg, cls))
    if v is not None and v.pair is not None:
        if cls.kind is ClassKind.FINAL_POINT_ROBUST or cfg.noise_var <= 0:
            checks.append(Check("relating_lemma", SKIPPED,
                                detail="needs a standard class and positive noise"))
        else:
            checks += check_relating(cfg, cls)
    return VerifyReport(checks)
