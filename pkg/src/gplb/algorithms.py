"""Bandit players on a finite grid: GP-UCB and a uniform-random baseline."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .adversaries import AdversaryState, corrupt_sample
from .kernels import (Kernel, _as_points, _tri_solve, cholesky_jitter, greedy_gain_curve,
                      kernel_matrix, rank1_update)

GRID_REFACTOR_EVERY = 256
REPORTING_RULES = ("posterior_mean", "best_observed")


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class Oracle:
    """Noisy (and optionally corrupted) evaluations of ``f`` on the player's grid."""

    f: object
    noise_var: float = 0.0
    adversary: AdversaryState | None = None
    seed: object = None

    def __post_init__(self):
        if self.noise_var < 0:
            raise ValueError("noise variance must be nonnegative")
        self.rng = make_rng(self.seed)
        self.noise_std = math.sqrt(self.noise_var)

    def observe(self, x, fx: float | None = None) -> tuple[float, float, float]:
        """``(f(x), y, y_tilde)`` for one query."""
        if fx is None:
            fx = float(self.f(_as_points(np.atleast_1d(np.asarray(x, float)).reshape(1, -1)))[0])
        y = fx + self.noise_std * float(self.rng.standard_normal()) if self.noise_std else fx
        yt = corrupt_sample(self.adversary, fx, y) if self.adversary is not None else y
        return fx, y, yt


@dataclass
class Trajectory:
    points: np.ndarray
    f_values: np.ndarray
    y: np.ndarray
    y_obs: np.ndarray
    regrets: np.ndarray
    picks: np.ndarray
    reports: np.ndarray
    grid: np.ndarray = field(repr=False)
    grid_values: np.ndarray = field(repr=False)
    f_star: float = 0.0
    regions: np.ndarray | None = None
    n_regions: int = 0
    spent: np.ndarray | None = None
    seed: object = None

    @property
    def T(self) -> int:
        return int(self.picks.shape[0])

    @property
    def R_T(self) -> float:
        return float(self.regrets.sum())

    @property
    def returned_point(self) -> np.ndarray | None:
        return self.grid[self.reports[-1]] if self.T else None

    @property
    def counts(self) -> np.ndarray:
        """Per-region sample counts ``N_j``."""
        if self.regions is None:
            raise ValueError("trajectory was run without a partition")
        return np.bincount(self.regions, minlength=self.n_regions)

    def simple_regret(self, t: int | None = None) -> float:
        """Gap of the point reported after ``t`` steps (default: the final one)."""
        if self.T == 0:
            return float("nan")
        t = self.T if t is None else t
        return float(self.f_star - self.grid_values[self.reports[t - 1]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.grid.shape[1]
        w.writerow(["t"] + [f"x{i}" for i in range(d)] + ["y", "y_tilde", "r_t", "j_t", "spent"])
        spent = self.spent if self.spent is not None else np.zeros(self.T)
        regions = self.regions if self.regions is not None else np.full(self.T, -1)
        for t in range(self.T):
            w.writerow([t + 1] + [repr(float(v)) for v in self.points[t]]
                       + [repr(float(self.y[t])), repr(float(self.y_obs[t])),
                          repr(float(self.regrets[t])), int(regions[t]), repr(float(spent[t]))])
        return buf.getvalue()


def beta_t(B: float, noise_var: float, gamma_prev: float, delta: float) -> float:
    """``(B + sigma sqrt(2 (gamma_{t-1} + log(e / delta))))^2``."""
    if not (B > 0 and noise_var > 0 and gamma_prev >= 0 and 0 < delta < 1):
        raise ValueError("need B > 0, noise_var > 0, gamma_prev >= 0 and 0 < delta < 1")
    return (B + math.sqrt(noise_var) * math.sqrt(2.0 * (gamma_prev + math.log(math.e / delta)))) ** 2


class GridPosterior:
    """Exact GP posterior restricted to a fixed grid, updated one observation at a time.

    Keeps the grid mean vector and covariance matrix.  Per-point observation
    counts and sums are a sufficient statistic, so the state is rebuilt from them
    every ``GRID_REFACTOR_EVERY`` updates to stop round-off from accumulating.
    """

    def __init__(self, k: Kernel, noise_var: float, grid):
        if not noise_var > 0:
            raise ValueError("model noise variance must be positive (use a small jitter)")
        self.grid = _as_points(grid)
        self.noise_var = float(noise_var)
        self.K = kernel_matrix(k, self.grid)
        G = self.grid.shape[0]
        self.mean = np.zeros(G)
        self.cov = np.array(self.K, order="F")
        self.counts = np.zeros(G)
        self.sums = np.zeros(G)
        self._since = 0

    @property
    def var(self) -> np.ndarray:
        return np.maximum(np.diag(self.cov), 0.0)

    def update(self, i: int, y: float) -> None:
        self.counts[i] += 1
        self.sums[i] += y
        self._since += 1
        if self._since >= GRID_REFACTOR_EVERY:
            self.refactor()
            return
        col = self.cov[:, i].copy()
        denom = col[i] + self.noise_var
        self.mean += col * ((y - self.mean[i]) / denom)
        rank1_update(self.cov, -1.0 / denom, col)

    def refactor(self) -> None:
        U = np.flatnonzero(self.counts)
        self._since = 0
        if U.size == 0:
            self.mean[:] = 0.0
            self.cov = np.array(self.K, order="F")
            return
        n = self.counts[U]
        A = self.K[np.ix_(U, U)] + np.diag(self.noise_var / n)
        L, _ = cholesky_jitter(A)
        V = _tri_solve(L, self.K[U, :])
        self.mean = V.T @ _tri_solve(L, self.sums[U] / n)
        self.cov = np.asfortranarray(self.K - V.T @ V)


def _gamma_sequence(k, noise_var, grid, T, gammas):
    if gammas is not None:
        g = np.asarray(gammas, dtype=float)
        if g.shape[0] < T:
            raise ValueError(f"gamma sequence has {g.shape[0]} entries, need at least {T}")
        return g
    gains, _ = greedy_gain_curve(k, noise_var, grid, max(T - 1, 0), replacement=True)
    return gains


def _finish(grid, fg, picks, fvals, ys, yobs, reports, oracle, seed, partition):
    f_star = float(fg.max())
    regions = partition.region_of(grid[picks]) if partition is not None and len(picks) else (
        np.zeros(0, dtype=int) if partition is not None else None)
    spent = None
    if oracle.adversary is not None:
        recent = np.asarray(oracle.adversary.log[len(oracle.adversary.log) - len(picks):])
        spent = oracle.adversary.spent - recent.sum() + np.cumsum(recent)
    return Trajectory(grid[picks], fvals, ys, yobs, f_star - fvals, picks, reports, grid, fg,
                      f_star, regions, partition.n_regions if partition is not None else 0,
                      spent, seed)


def gp_ucb_run(k: Kernel, oracle: Oracle, T: int, B: float, noise_var: float, delta: float,
               grid, seed=None, deterministic: bool = True, reporting: str = "posterior_mean",
               partition=None, gammas=None, stop_eps: float | None = None) -> Trajectory:
    """GP-UCB over ``grid``: query the argmax of ``mean + sqrt(beta_t) * std``.

    ``noise_var`` is the model's noise variance (also used in ``beta_t``).  Ties
    go to the lowest grid index when ``deterministic``; otherwise they are broken
    uniformly with a stream seeded by ``seed``.  ``reports[t]`` is the grid index
    the reporting rule would return after ``t + 1`` observations.  With
    ``stop_eps`` the run ends as soon as the reported point is ``stop_eps``-optimal
    (relative to the grid maximum of ``f``), so the trajectory may be shorter than ``T``.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if reporting not in REPORTING_RULES:
        raise ValueError(f"unknown reporting rule {reporting!r}; options {REPORTING_RULES}")
    grid = _as_points(grid)
    if grid.shape[0] == 0:
        raise ValueError("grid is empty")
    fg = np.asarray(oracle.f(grid), dtype=float)
    post = GridPosterior(k, noise_var, grid)
    gam = _gamma_sequence(k, noise_var, grid, T, gammas)
    tie_rng = None if deterministic else make_rng(seed)
    picks = np.zeros(T, dtype=np.int64)
    reports = np.zeros(T, dtype=np.int64)
    fvals, ys, yobs = np.zeros(T), np.zeros(T), np.zeros(T)
    best_obs = -np.inf
    best_idx = 0
    target = None if stop_eps is None else float(fg.max()) - stop_eps
    for t in range(T):
        root_beta = math.sqrt(beta_t(B, noise_var, gam[t], delta))
        ucb = post.mean + root_beta * np.sqrt(post.var)
        if deterministic:
            i = int(np.argmax(ucb))
        else:
            top = np.flatnonzero(ucb == ucb.max())
            i = int(top[tie_rng.integers(top.size)])
        fx, y, yt = oracle.observe(grid[i], fg[i])
        post.update(i, yt)
        picks[t], fvals[t], ys[t], yobs[t] = i, fx, y, yt
        if reporting == "posterior_mean":
            reports[t] = int(np.argmax(post.mean))
        else:
            if yt > best_obs:
                best_obs, best_idx = yt, i
            reports[t] = best_idx
        if target is not None and fg[reports[t]] >= target:
            n = t + 1
            return _finish(grid, fg, picks[:n], fvals[:n], ys[:n], yobs[:n], reports[:n],
                           oracle, seed, partition)
    return _finish(grid, fg, picks, fvals, ys, yobs, reports, oracle, seed, partition)


def random_run(oracle: Oracle, T: int, grid, seed=None, partition=None) -> Trajectory:
    """Uniform independent grid queries; reports the best observed point."""
    grid = _as_points(grid)
    if grid.shape[0] == 0:
        raise ValueError("grid is empty")
    rng = make_rng(seed)
    picks = rng.integers(grid.shape[0], size=T).astype(np.int64)
    fg = np.asarray(oracle.f(grid), dtype=float)
    fvals, ys, yobs = np.zeros(T), np.zeros(T), np.zeros(T)
    for t, i in enumerate(picks):
        fvals[t], ys[t], yobs[t] = oracle.observe(grid[i], fg[i])
    reports = picks[_running_argmax(yobs)]
    return _finish(grid, fg, picks, fvals, ys, yobs, reports, oracle, seed, partition)


def _running_argmax(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[0], dtype=np.int64)
    best = -np.inf
    arg = 0
    for t, val in enumerate(v):
        if val > best:
            best, arg = val, t
        out[t] = arg
    return out


def time_to_epsilon(traj: Trajectory, f, eps: float, rule: str = "first",
                    f_star: float | None = None) -> int | None:
    """Smallest ``t`` whose reported point is ``eps``-optimal for ``f``.

    ``rule="sustained"`` asks for the reported point to stay ``eps``-optimal from
    ``t`` through the end of the horizon.  ``f_star`` defaults to the grid max.
    """
    if rule not in ("first", "sustained"):
        raise ValueError(f"unknown rule {rule!r}")
    if traj.T == 0:
        return None
    fg = np.asarray(f(traj.grid), dtype=float)
    f_star = float(fg.max()) if f_star is None else f_star
    ok = f_star - fg[traj.reports] <= eps
    if rule == "first":
        hits = np.flatnonzero(ok)
        return int(hits[0]) + 1 if hits.size else None
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return int(bad[-1]) + 2 if bad.size else 1
