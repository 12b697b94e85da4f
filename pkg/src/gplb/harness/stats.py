"""Interval estimates and log-log fits."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm

Z95 = float(norm.ppf(0.975))


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    if not 0 <= successes <= n:
        raise ValueError(f"successes = {successes} outside [0, {n}]")
    z = Z95 if confidence == 0.95 else float(norm.ppf(0.5 + confidence / 2))
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def loglog_slope(x, y) -> tuple[float | None, float | None, str]:
    """Least-squares slope and intercept of ``log y`` on ``log x``.

    Returns ``(None, None, reason)`` with fewer than three usable points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if ok.sum() < 3:
        return None, None, f"slope not computed: {int(ok.sum())} usable points (< 3)"
    slope, intercept = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
    note = "" if ok.all() else f"{int((~ok).sum())} points dropped (non-positive or infinite)"
    return float(slope), float(intercept), note


def finite_median(values) -> float:
    """Median where ``None`` counts as +inf (a run that never got there)."""
    arr = np.array([np.inf if v is None else v for v in values], dtype=float)
    if arr.size == 0:
        return math.nan
    arr = arr[~np.isnan(arr)]
    return float(np.median(arr)) if arr.size else math.nan
