"""Corruption models: the push-to-zero budget adversary and final-point perturbation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import _as_points, unit_grid

BUDGET_TOL = 1e-12


@dataclass
class AdversaryState:
    """Budget adversary that cancels the function value until ``C`` is spent.

    ``B0`` bounds the per-step corruption magnitude.  ``log`` records the charge
    of every step (zeros once exhausted).
    """

    C: float
    B0: float = np.inf
    spent: float = 0.0
    active: bool = True
    log: list = field(default_factory=list)

    def __post_init__(self):
        if not self.C >= 0:
            raise ValueError(f"budget must be nonnegative, got {self.C}")
        if not self.B0 > 0:
            raise ValueError(f"per-step bound B0 must be positive, got {self.B0}")
        self.active = self.spent < self.C

    @classmethod
    def for_class(cls, C: float, eps: float) -> "AdversaryState":
        """Default per-step range ``8 eps``, which covers every class value."""
        return cls(C, B0=8.0 * eps)

    @property
    def remaining(self) -> float:
        return max(self.C - self.spent, 0.0)


def corrupt_sample(state: AdversaryState, f_value: float, y: float) -> float:
    """Observation after the adversary pushes ``f_value`` as far toward 0 as it can."""
    if abs(f_value) > state.B0:
        raise ValueError(f"|f(x)| = {abs(f_value):.4g} exceeds the per-step bound B0 = {state.B0:.4g}")
    if not state.active:
        state.log.append(0.0)
        return y
    need = abs(f_value)
    full = state.remaining >= need - BUDGET_TOL
    charge = min(need, state.remaining)
    out = y - f_value if full else y - np.sign(f_value) * charge
    state.spent = min(state.spent + charge, state.C)
    if state.C - state.spent <= BUDGET_TOL:
        state.spent = state.C
        state.active = False
    state.log.append(charge)
    return float(out)


def corruptible_count(cls, sampled, C: float) -> int:
    """Members whose accumulated ``sum_t |f_j(x_t)|`` stays strictly below ``C``."""
    sampled = np.asarray(sampled, dtype=float)
    if sampled.size == 0:
        return len(cls.members)
    vals = np.abs(cls.evaluate(_as_points(sampled.reshape(len(sampled), -1))))
    return int(np.sum(vals.sum(axis=1) < C))


def _ball_points(x: np.ndarray, xi: float, per_axis: int) -> np.ndarray:
    d = x.size
    lo = np.clip(x - xi, 0.0, 1.0)
    hi = np.clip(x + xi, 0.0, 1.0)
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    keep = np.linalg.norm(pts - x, axis=1) <= xi * (1 + 1e-12)
    return pts[keep].reshape(-1, d)


def perturbation_set(f, x, xi: float, grid_resolution: int = 64) -> np.ndarray:
    """Finite stand-in for ``{x' in [0,1]^d : |x - x'| <= xi}``.

    A regular sub-grid of the ball's bounding box, the point itself, and the
    function's critical points that fall inside the ball.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("x must lie in the unit cube")
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    parts = [x[None, :]]
    if xi > 0:
        parts.append(_ball_points(x, xi, grid_resolution))
        crit = getattr(f, "critical_points", lambda: [])()
        if crit:
            crit = np.array(crit, dtype=float).reshape(-1, x.size)
            inside = (np.linalg.norm(crit - x, axis=1) <= xi) & np.all((crit >= 0) & (crit <= 1), axis=1)
            parts.append(crit[inside])
    return np.vstack(parts)


def worst_case_value(f, x, xi: float, grid_resolution: int = 64) -> float:
    """Minimum of ``f`` over the ``xi``-ball around ``x`` (clipped to the cube)."""
    return float(np.min(f(perturbation_set(f, x, xi, grid_resolution))))


def worst_case_values(f, grid, xi: float, grid_resolution: int = 64) -> np.ndarray:
    grid = _as_points(grid)
    return np.array([worst_case_value(f, g, xi, grid_resolution) for g in grid])


def robust_optimum(f, grid, xi: float, grid_resolution: int = 64) -> tuple[float, int]:
    """``max`` of the worst-case value over ``grid`` and the index attaining it."""
    vals = worst_case_values(f, grid, xi, grid_resolution)
    i = int(np.argmax(vals))
    return float(vals[i]), i


def xi_regret(f, x, xi: float, grid_resolution: int = 64, eval_grid=None,
              best: float | None = None) -> float:
    """Worst-case gap between the best robust point on ``eval_grid`` and ``x``.

    ``best`` may carry a precomputed robust optimum for the same grid.  The
    evaluation grid defaults to 101 points per axis in d = 1 and 33 otherwise.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if best is None:
        if eval_grid is None:
            eval_grid = unit_grid(101 if x.size == 1 else 33, x.size)
        best, _ = robust_optimum(f, eval_grid, xi, grid_resolution)
    return max(best - worst_case_value(f, x, xi, grid_resolution), 0.0)
