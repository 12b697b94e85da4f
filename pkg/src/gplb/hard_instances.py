"""The hard function classes, their grid partitions and the region tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from .kernels import Family, Kernel, _as_points, cholesky_jitter, kernel_matrix, unit_grid
from .rkhs import (FunctionInstance, InstanceTooWide, Shape, ball_plateau, composite,
                   constant_shift, make_se_bump, matern_width, spatial_bump)

SCHEMA_VERSION = 1
# SE bumps drop below half height at w*sqrt(2 ln 2) ~ 1.177 w; centres 2.5 w apart
# keep every point eps-optimal for at most one member
SE_SPACING = 2.5
BOUNDARY_TOL = 1e-9


class EmptyClass(ValueError):
    """The requested parameters leave room for no member at all."""


class CertificationError(ValueError):
    """A member's norm certificate exceeds its budget."""


class ClassKind(str, Enum):
    STANDARD_SE = "standard_se"
    STANDARD_MATERN = "standard_matern"
    SIMPLIFIED_MATERN = "simplified_matern"
    FINAL_POINT_ROBUST = "final_point_robust"


@dataclass(frozen=True)
class Partition:
    """``n^d`` axis-aligned cells of side ``side`` tiling the box ``[lo, lo + n side]^d``.

    When the box is smaller than the unit cube the remainder of the cube is one
    extra region with index ``n^d``.
    """

    n: int
    d: int
    lo: float = 0.0
    side: float = 0.0

    def __post_init__(self):
        if self.side == 0.0:
            object.__setattr__(self, "side", 1.0 / self.n)

    @property
    def n_cells(self) -> int:
        return self.n**self.d

    @property
    def has_rest(self) -> bool:
        return self.lo > BOUNDARY_TOL or self.lo + self.n * self.side < 1 - BOUNDARY_TOL

    @property
    def n_regions(self) -> int:
        return self.n_cells + (1 if self.has_rest else 0)

    def centers(self) -> np.ndarray:
        axis = self.lo + (np.arange(self.n) + 0.5) * self.side
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_bounds(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.array(np.unravel_index(j, (self.n,) * self.d))
        lo = self.lo + idx * self.side
        return lo, lo + self.side

    def region_of(self, X) -> np.ndarray:
        X = _as_points(X)
        if np.any(X < -BOUNDARY_TOL) or np.any(X > 1 + BOUNDARY_TOL):
            raise ValueError("point outside the unit cube")
        u = (X - self.lo) / self.side
        inside = np.all((u >= -BOUNDARY_TOL) & (u <= self.n + BOUNDARY_TOL), axis=1)
        # boundary points go to the lower cell
        idx = np.clip(np.ceil(u - BOUNDARY_TOL).astype(int) - 1, 0, self.n - 1)
        lin = np.ravel_multi_index(tuple(idx.T), (self.n,) * self.d)
        return np.where(inside, lin, self.n_cells)

    def subgrid(self, j: int, per_axis: int) -> np.ndarray:
        """Regular sub-grid of cell ``j`` (cell boundary and centre included)."""
        lo, hi = self.cell_bounds(j)
        axes = [np.union1d(np.linspace(a, b, per_axis), [(a + b) / 2]) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class HardClass:
    kind: ClassKind
    kernel: Kernel
    eps: float
    B: float
    d: int
    w: float
    members: tuple[FunctionInstance, ...]
    partition: Partition
    params: dict = field(default_factory=dict)
    certified: bool = True

    @property
    def M(self) -> int:
        """Number of members carrying a bump or spike (``f_0`` not counted)."""
        return self.partition.n_cells

    @property
    def has_base(self) -> bool:
        return self.kind is ClassKind.FINAL_POINT_ROBUST

    def __len__(self) -> int:
        return len(self.members)

    def member_region(self, m: int) -> int | None:
        """Partition cell holding the peak (or spike) of member ``m``."""
        if self.has_base:
            return None if m == 0 else m - 1
        return m

    def region_of(self, x) -> int:
        return int(self.partition.region_of(np.atleast_1d(np.asarray(x, float)).reshape(1, -1))[0])

    def evaluate(self, X) -> np.ndarray:
        """Values of every member at the rows of ``X``: shape ``(len(members), n)``."""
        X = _as_points(X)
        return np.stack([f(X) for f in self.members])

    def to_manifest(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind.value,
            "kernel": self.kernel.to_dict(),
            "eps": self.eps, "B": self.B, "d": self.d, "w": self.w,
            "partition": {"n": self.partition.n, "d": self.partition.d,
                          "lo": self.partition.lo, "side": self.partition.side},
            "params": dict(self.params),
            "certified": self.certified,
            "members": [f.to_dict() for f in self.members],
        }

    @classmethod
    def from_manifest(cls, spec: dict) -> "HardClass":
        if spec.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema {spec.get('schema_version')!r}")
        p = spec["partition"]
        return cls(ClassKind(spec["kind"]), Kernel.from_dict(spec["kernel"]),
                   float(spec["eps"]), float(spec["B"]), int(spec["d"]), float(spec["w"]),
                   tuple(FunctionInstance.from_dict(m) for m in spec["members"]),
                   Partition(int(p["n"]), int(p["d"]), float(p["lo"]), float(p["side"])),
                   dict(spec["params"]), bool(spec["certified"]))


def default_cert_grid(d: int) -> np.ndarray:
    return unit_grid({1: 256, 2: 64}.get(d, 16), d)


def certificates(k: Kernel, fs, grid) -> np.ndarray:
    """Min-norm certificates of several functions sharing one factorization."""
    grid = _as_points(grid)
    V = np.stack([f(grid) for f in fs], axis=1)
    L, _ = cholesky_jitter(kernel_matrix(k, grid))
    A = solve_triangular(L, V, lower=True, check_finite=False)
    return np.sqrt(np.einsum("ij,ij->j", A, A))


def _certify(k, fs, grid, budget, require):
    certs = certificates(k, fs, grid)
    ok = bool(np.all(certs <= budget))
    if require and not ok:
        worst = int(np.argmax(certs))
        raise CertificationError(
            f"member {worst} certificate {certs[worst]:.4g} exceeds budget {budget:.4g}")
    return tuple(f.with_certificate(c) for f, c in zip(fs, certs)), ok


def cells_per_axis(w: float) -> int:
    """``floor(1/w)`` guarded against round-off (``1/0.1`` may land below 10)."""
    return int(math.floor(1.0 / w + BOUNDARY_TOL))


def _grid_geometry(w: float, d: int) -> Partition:
    n = cells_per_axis(w)
    if n < 1:
        raise EmptyClass(f"width {w:.4g} exceeds the unit cube: no member fits")
    return Partition(n, d)


def build_standard_class(k: Kernel, eps: float, B: float, d: int, kappa: float | None = None,
                         cert_grid=None, require_certified: bool = True) -> HardClass:
    """Shifted copies of one bump centred on a uniform grid of cells.

    Matern: spatial bumps of diameter ``w = (2 eps kappa / B)^(1/nu)``.  SE: Gaussian
    bumps of width ``l`` (the narrowest with finite norm) on cells of side
    ``SE_SPACING * l``.  Every member must certify at most ``B/3``.
    """
    if not (eps > 0 and B > 0):
        raise ValueError("eps and B must be positive")
    if k.family is Family.MATERN:
        if kappa is None:
            raise ValueError("Matern classes need the calibrated constant kappa")
        w = matern_width(eps, B, k.nu, kappa)
        part = _grid_geometry(w, d)
        members = [spatial_bump(c, 2 * eps, w / 2) for c in part.centers()]
        kind = ClassKind.STANDARD_MATERN
        params = {"kappa": kappa}
    else:
        wg = k.lengthscale
        if 2 * eps > B / 3:
            raise ValueError(f"eps/B = {eps / B:.3g} too large: SE member norm 2 eps exceeds B/3")
        w = SE_SPACING * wg
        part = _grid_geometry(w, d)
        members = [make_se_bump(eps, c, wg, k.lengthscale) for c in part.centers()]
        kind = ClassKind.STANDARD_SE
        params = {"bump_width": wg}
    grid = default_cert_grid(d) if cert_grid is None else cert_grid
    members, ok = _certify(k, members, grid, B / 3, require_certified)
    return HardClass(kind, k, eps, B, d, w, members, part, params, ok)


def build_simplified_matern_class(nu: float, l: float, eps: float, B: float, d: int,
                                  kappa: float, cert_grid=None,
                                  require_certified: bool = True) -> HardClass:
    """Bounded-support bumps, one per grid cell, with pairwise disjoint supports."""
    k = Kernel.matern(nu, l)
    base = build_standard_class(k, eps, B, d, kappa, cert_grid, require_certified)
    return HardClass(ClassKind.SIMPLIFIED_MATERN, k, eps, B, d, base.w, base.members,
                     base.partition, base.params, base.certified)


def build_final_point_class(k: Kernel, xi: float, eps: float, B: float, d: int,
                            eta: float = 0.01, kappa: float | None = None,
                            plateau_resolution: int | None = None, cert_grid=None,
                            require_certified: bool = True) -> HardClass:
    """``f_m = -2 eps + b - s_m`` with ``b`` a plateau of height ``2 eps`` on a ball.

    The ball has radius ``(3 - eta) xi / 2`` (taper half-width ``eta xi / 2``), so a
    central "plain" ball of radius ``(1/2 - eta) xi`` keeps worst-case value 0
    under ``f_0``.  Spikes ``s_m`` of depth ``4 eps`` sit on a cubic grid inscribed
    in the plain ball.  Members are ordered ``f_0, f_1, ..., f_M``.
    """
    if not 0 < xi < 0.5:
        raise ValueError("xi must lie in (0, 1/2)")
    if not 0 < eta < 0.25:
        raise ValueError("eta must lie in (0, 1/4)")
    r_ball = (3 - eta) * xi / 2
    w0 = eta * xi / 2
    plain = (0.5 - eta) * xi
    centre = np.full(d, 0.5)
    if k.family is Family.MATERN:
        if kappa is None:
            raise ValueError("Matern classes need the calibrated constant kappa")
        ws = matern_width(2 * eps, B, k.nu, kappa)
        mollifier = "bump"
        spike_spacing = ws
    else:
        w0 = max(w0, k.lengthscale)
        if w0 > r_ball / 2:
            raise ValueError(f"SE lengthscale {k.lengthscale} too large for xi = {xi}")
        mollifier = "gaussian"
        ws = k.lengthscale
        spike_spacing = SE_SPACING * ws
    if spike_spacing > 0.1 * xi + BOUNDARY_TOL:
        raise InstanceTooWide(f"spike width {spike_spacing:.4g} is not below 0.1*xi = {0.1 * xi:.4g}")
    side_total = 2 * plain / math.sqrt(d)
    n = int(math.floor(side_total / spike_spacing + BOUNDARY_TOL))
    if n < 1:
        raise EmptyClass("no spike fits inside the plain region")
    part = Partition(n, d, lo=0.5 - side_total / 2, side=side_total / n)
    if plateau_resolution is None:
        plateau_resolution = max({1: 512, 2: 256}.get(d, 128), int(math.ceil(16 / (2 * w0))))
    c = constant_shift(-2 * eps)
    b = ball_plateau(r_ball, w0, plateau_resolution, d=d, height=2 * eps,
                     mollifier=mollifier, center=centre)
    if k.family is Family.MATERN:
        spikes = [spatial_bump(p, -4 * eps, ws / 2) for p in part.centers()]
    else:
        spikes = [FunctionInstance(Shape.SE_BUMP, -4 * eps, tuple(float(v) for v in p), ws, d=d)
                  for p in part.centers()]
    grid = default_cert_grid(d) if cert_grid is None else cert_grid
    comps, ok_c = _certify(k, [c, b] + spikes, grid, B / 3, require_certified)
    c, b, spikes = comps[0], comps[1], comps[2:]
    members = [composite(c, b)] + [composite(c, b, s) for s in spikes]
    members, ok_m = _certify(k, members, grid, B, require_certified)
    params = {"xi": xi, "eta": eta, "ball_radius": r_ball, "taper": w0,
              "plain_radius": plain, "plain_outer_radius": 0.5 * xi,
              "spike_width": ws, "plateau_resolution": plateau_resolution}
    if kappa is not None:
        params["kappa"] = kappa
    return HardClass(ClassKind.FINAL_POINT_ROBUST, k, eps, B, d, spike_spacing, members,
                     part, params, ok_c and ok_m)


# ---------------------------------------------------------------------------
# region tables
# ---------------------------------------------------------------------------

def vbar_table(cls: HardClass, grid_per_region: int = 32) -> np.ndarray:
    """``vbar[m, j]`` = max over a sub-grid of cell ``j`` of ``|f_m|``.

    Rows follow ``cls.members`` (including ``f_0`` for the robust class); columns
    are the grid cells of the partition.
    """
    if grid_per_region < 16:
        raise ValueError("grid_per_region must be at least 16")
    part = cls.partition
    out = np.zeros((len(cls.members), part.n_cells))
    for j in range(part.n_cells):
        pts = part.subgrid(j, grid_per_region)
        out[:, j] = np.max(np.abs(cls.evaluate(pts)), axis=1)
    return out


def kl_table(cls: HardClass, noise_var: float, grid_per_region: int = 32) -> np.ndarray:
    """Per-region maximum Gaussian KL to the zero function: ``vbar^2 / (2 sigma^2)``."""
    if not noise_var > 0:
        raise ValueError("noise variance must be positive for KL tables")
    return vbar_table(cls, grid_per_region) ** 2 / (2.0 * noise_var)


def region_of(cls: HardClass, x) -> int:
    return cls.region_of(x)


def lemma7_sums(vbar: np.ndarray, eps: float) -> dict:
    """Worst-case row sums, column sums and column square-sums, scaled by eps."""
    return {
        "row_sum": float(np.max(vbar.sum(axis=1)) / eps),
        "col_sum": float(np.max(vbar.sum(axis=0)) / eps),
        "col_sq_sum": float(np.max((vbar**2).sum(axis=0)) / eps**2),
    }


def member_peaks(cls: HardClass, grid) -> np.ndarray:
    """Maximum of each member over ``grid`` together with its critical points."""
    vals = cls.evaluate(grid).max(axis=1)
    for m, f in enumerate(cls.members):
        pts = f.critical_points()
        if pts:
            vals[m] = max(vals[m], float(np.max(f(np.array(pts)))))
    return vals


def eps_optimal_overlap(cls: HardClass, grid) -> int:
    """Number of grid points that are eps-optimal for two or more members."""
    grid = _as_points(grid)
    vals = cls.evaluate(grid)
    peaks = member_peaks(cls, grid)
    optimal = vals >= (peaks - cls.eps)[:, None]
    return int(np.sum(optimal.sum(axis=0) >= 2))


def support_overlap(cls: HardClass, grid) -> int:
    """Number of grid points where two or more members are non-zero."""
    vals = cls.evaluate(grid)
    return int(np.sum((vals != 0).sum(axis=0) >= 2))
