"""Stationary kernels, GP posterior inference and information gain.

Everything here works on points of the unit cube stored as ``(n, d)`` float
arrays.  Kernels have unit variance, so ``k(x, x) == 1``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.blas import dger
from scipy.special import gamma as gamma_fn
from scipy.special import kv

JITTER_START = 1e-10
JITTER_MAX = 1e-6
REFACTOR_EVERY = 64


class NumericalFailure(RuntimeError):
    """Raised when a kernel matrix cannot be factorized even at maximum jitter."""


class Family(str, Enum):
    SE = "se"
    MATERN = "matern"


@dataclass(frozen=True)
class Kernel:
    family: Family
    lengthscale: float
    nu: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.family is Family.MATERN:
            if self.nu is None or not self.nu > 0:
                raise ValueError(f"Matern kernel needs nu > 0, got {self.nu}")
        elif self.nu is not None:
            raise ValueError("nu is only meaningful for the Matern family")

    @classmethod
    def se(cls, lengthscale: float) -> "Kernel":
        return cls(Family.SE, lengthscale)

    @classmethod
    def matern(cls, nu: float, lengthscale: float) -> "Kernel":
        return cls(Family.MATERN, lengthscale, float(nu))

    def profile(self, r: np.ndarray) -> np.ndarray:
        """Kernel value as a function of distance ``r >= 0``."""
        r = np.asarray(r, dtype=float)
        if self.family is Family.SE:
            return np.exp(-0.5 * (r / self.lengthscale) ** 2)
        return _matern_profile(r, self.nu, self.lengthscale)

    def __call__(self, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
        """Cross-covariance matrix between the rows of ``X`` and ``Y``."""
        X = _as_points(X)
        Y = X if Y is None else _as_points(Y)
        return self.profile(pairwise_distances(X, Y))

    def to_dict(self) -> dict:
        out = {"family": self.family.value, "lengthscale": self.lengthscale}
        if self.nu is not None:
            out["nu"] = self.nu
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "Kernel":
        return cls(Family(spec["family"]), float(spec["lengthscale"]),
                   None if spec.get("nu") is None else float(spec["nu"]))


def _matern_profile(r: np.ndarray, nu: float, l: float) -> np.ndarray:
    if nu == 0.5:
        return np.exp(-r / l)
    if nu == 1.5:
        z = np.sqrt(3.0) * r / l
        return (1.0 + z) * np.exp(-z)
    if nu == 2.5:
        z = np.sqrt(5.0) * r / l
        return (1.0 + z + z * z / 3.0) * np.exp(-z)
    z = np.sqrt(2.0 * nu) * r / l
    out = np.ones_like(z)
    pos = z > 0
    zp = z[pos]
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        vals = 2.0 ** (1.0 - nu) / gamma_fn(nu) * zp**nu * kv(nu, zp)
    # kv underflows to 0 for huge arguments and z**nu*kv -> 1 as z -> 0
    vals = np.where(np.isfinite(vals), vals, 0.0)
    tiny = zp < 1e-12
    vals[tiny] = 1.0
    out[pos] = vals
    return out


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if X.size and X.shape[0] > 0 else X.reshape(0, 1)
    if X.ndim != 2:
        raise ValueError(f"expected an (n, d) array of points, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    return X


def pairwise_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def eval_kernel(k: Kernel, x, x2) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise ValueError("kernel inputs must be finite")
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    return float(k.profile(np.array([np.linalg.norm(x - x2)]))[0])


def kernel_matrix(k: Kernel, X) -> np.ndarray:
    X = _as_points(X)
    if X.shape[0] == 0:
        raise ValueError("kernel_matrix needs at least one point")
    K = k(X)
    np.fill_diagonal(K, 1.0)
    return 0.5 * (K + K.T)


def cholesky_jitter(A: np.ndarray, start: float = JITTER_START,
                    max_jitter: float = JITTER_MAX) -> tuple[np.ndarray, float]:
    """Cholesky factor of ``A + jitter*I`` with the smallest jitter that works.

    Jitter starts at ``start`` and doubles until ``max_jitter``.
    """
    n = A.shape[0]
    jitter = start
    eye = np.eye(n)
    while True:
        try:
            return np.linalg.cholesky(A + jitter * eye), jitter
        except np.linalg.LinAlgError:
            if jitter >= max_jitter:
                raise NumericalFailure(
                    f"Cholesky failed for a {n}x{n} matrix at jitter {jitter:.1e}") from None
            jitter = min(2.0 * jitter, max_jitter)


def rank1_update(A: np.ndarray, alpha: float, u: np.ndarray) -> np.ndarray:
    """In-place ``A += alpha * u u^T`` for a symmetric Fortran-ordered ``A`` (BLAS dger)."""
    out = dger(alpha, u, u, a=A, overwrite_a=1)
    if out is not A:
        A[...] = out
    return A


def _tri_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_triangular(L, b, lower=True, check_finite=False)


@dataclass(frozen=True)
class PosteriorState:
    """GP regression state on observed pairs ``(X, y)``.

    Holds the Cholesky factor ``L`` of ``K + (noise_var + jitter) I`` and the
    whitened targets ``L^{-1} y``.  ``extend`` returns a new state; the factor
    is grown by one row per observation and rebuilt from scratch every
    ``REFACTOR_EVERY`` extensions.
    """

    kernel: Kernel
    noise_var: float
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)
    white_y: np.ndarray = field(repr=False)
    jitter: float = JITTER_START
    steps_since_refactor: int = 0

    @classmethod
    def empty(cls, kernel: Kernel, noise_var: float, d: int) -> "PosteriorState":
        if noise_var < 0:
            raise ValueError("noise variance must be nonnegative")
        return cls(kernel, float(noise_var), np.zeros((0, d)), np.zeros(0),
                   np.zeros((0, 0)), np.zeros(0))

    @classmethod
    def from_data(cls, kernel: Kernel, noise_var: float, X, y) -> "PosteriorState":
        X = _as_points(X)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"|X| = {X.shape[0]} but |y| = {y.shape[0]}")
        if X.shape[0] == 0:
            return cls.empty(kernel, noise_var, X.shape[1])
        return cls._factorized(kernel, float(noise_var), X, y)

    @classmethod
    def _factorized(cls, kernel, noise_var, X, y) -> "PosteriorState":
        A = kernel_matrix(kernel, X) + noise_var * np.eye(X.shape[0])
        L, jitter = cholesky_jitter(A)
        return cls(kernel, noise_var, X, y, L, _tri_solve(L, y), jitter, 0)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def extend(self, x, y_new: float) -> "PosteriorState":
        x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
        X = np.vstack([self.X, x])
        y = np.append(self.y, float(y_new))
        if self.n == 0 or self.steps_since_refactor + 1 >= REFACTOR_EVERY:
            return self._factorized(self.kernel, self.noise_var, X, y)
        k_new = self.kernel(self.X, x)[:, 0]
        l12 = _tri_solve(self.L, k_new)
        l22_sq = 1.0 + self.noise_var + self.jitter - l12 @ l12
        if not l22_sq > 0:
            return self._factorized(self.kernel, self.noise_var, X, y)
        l22 = np.sqrt(l22_sq)
        n = self.n
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self.L
        L[n, :n] = l12
        L[n, n] = l22
        white = np.append(self.white_y, (y_new - l12 @ self.white_y) / l22)
        return PosteriorState(self.kernel, self.noise_var, X, y, L, white,
                              self.jitter, self.steps_since_refactor + 1)

    def predict(self, Q) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and variances at the rows of ``Q``."""
        Q = _as_points(Q)
        if self.n == 0:
            return np.zeros(Q.shape[0]), np.ones(Q.shape[0])
        V = _tri_solve(self.L, self.kernel(self.X, Q))
        mean = V.T @ self.white_y
        var = 1.0 - np.einsum("ij,ij->j", V, V)
        return mean, np.maximum(var, 0.0)


def gp_posterior(state: PosteriorState, k: Kernel | None, q) -> tuple[float, float]:
    if k is not None and k != state.kernel:
        raise ValueError("kernel does not match the posterior state")
    mean, var = state.predict(np.atleast_1d(np.asarray(q, dtype=float)).reshape(1, -1))
    return float(mean[0]), float(var[0])


def info_gain(k: Kernel, noise_var: float, X) -> float:
    """``0.5 * log det(I + K / noise_var)`` via a triangular factor."""
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    K = kernel_matrix(k, X)
    L, _ = cholesky_jitter(np.eye(K.shape[0]) + K / noise_var)
    return float(np.sum(np.log(np.diag(L))))


def greedy_gain_curve(k: Kernel, noise_var: float, grid, T: int,
                      replacement: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Greedy information-gain sequence over a finite grid.

    Returns ``(gains, picks)`` where ``gains[t]`` is the information gain of the
    first ``t`` greedy picks (so ``gains[0] == 0``).  The marginal gain of a point
    is ``0.5 * log(1 + var / noise_var)`` under the current posterior, so the
    greedy pick is the max-variance point, ties going to the lowest index.
    """
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    grid = _as_points(grid)
    G = grid.shape[0]
    if not replacement and T > G:
        raise ValueError(f"T = {T} exceeds the grid size {G}")
    return _gain_curve_cached(k, float(noise_var), grid.tobytes(), grid.shape, int(T),
                              bool(replacement))


@functools.lru_cache(maxsize=32)
def _gain_curve_cached(k, noise_var, grid_bytes, shape, T, replacement):
    grid = np.frombuffer(grid_bytes, dtype=float).reshape(shape)
    cov = np.asfortranarray(kernel_matrix(k, grid))
    gains = np.zeros(T + 1)
    picks = np.zeros(T, dtype=np.int64)
    taken = np.zeros(shape[0], dtype=bool)
    for t in range(T):
        var = np.maximum(np.diag(cov), 0.0)
        if not replacement:
            var[taken] = -np.inf
        i = int(np.argmax(var))
        picks[t] = i
        taken[i] = True
        gains[t + 1] = gains[t] + 0.5 * np.log1p(max(var[i], 0.0) / noise_var)
        col = cov[:, i].copy()
        rank1_update(cov, -1.0 / (col[i] + noise_var), col)
    gains.setflags(write=False)
    picks.setflags(write=False)
    return gains, picks


def max_info_gain_greedy(k: Kernel, noise_var: float, grid, T: int) -> float:
    """Greedy estimate of the maximum information gain over ``T`` distinct grid points."""
    grid = _as_points(grid)
    if T > grid.shape[0]:
        raise ValueError(f"T = {T} exceeds the grid size {grid.shape[0]}")
    if T < 1:
        raise ValueError("T must be positive")
    _, picks = greedy_gain_curve(k, noise_var, grid, T)
    # recompute exactly from the selected subset
    return info_gain(k, noise_var, grid[np.asarray(picks)])


def unit_grid(per_axis: int, d: int) -> np.ndarray:
    """Regular grid with ``per_axis`` nodes per axis (endpoints included), C order."""
    axis = np.linspace(0.0, 1.0, per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
