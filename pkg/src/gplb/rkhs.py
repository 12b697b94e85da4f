"""Hard-instance building blocks and RKHS-norm certification.

Two independent routes to the norm of a function ``f``:

* ``min_norm_certificate`` -- ``sqrt(v^T K^{-1} v)`` for the values ``v`` of ``f``
  on a finite grid.  This is the norm of the minimum-norm interpolant, hence a
  lower bound on the RKHS norm on the domain, non-decreasing as the grid grows.
* ``fourier_norm`` -- the norm of the (radial) function on all of ``R^d``,
  computed from its Fourier transform and the kernel's spectral density.  The
  restriction to ``[0, 1]^d`` can only be smaller, so this is an upper bound on
  every grid certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import integrate
from scipy.linalg import solve_triangular
from scipy.special import betainc, gamma as gamma_fn, jv

from .kernels import Family, Kernel, _as_points, cholesky_jitter, kernel_matrix

H0 = math.exp(-1.0)  # bump(0)


class InstanceTooWide(ValueError):
    """The bump width needed for the norm budget leaves no room in the unit cube."""


class Shape(str, Enum):
    SPATIAL_BUMP = "spatial_bump"
    SE_BUMP = "se_bump"
    BALL_PLATEAU = "ball_plateau"
    CONSTANT = "constant_shift"
    COMPOSITE = "composite"


def bump_profile(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1.0
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        out[inside] = np.exp(-1.0 / (1.0 - rho[inside] ** 2))
    return out


def bump(z) -> float:
    """The d-dimensional bump ``exp(-1/(1-|z|^2))`` on the open unit ball, 0 outside."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return float(bump_profile(np.array([np.linalg.norm(z)]))[0])


@dataclass(frozen=True)
class FunctionInstance:
    """An evaluable function on the unit cube.

    ``height`` is the signed peak value (plateau value for ``BALL_PLATEAU``,
    the constant for ``CONSTANT``).  ``width`` is the support radius for spatial
    bumps, the Gaussian width for SE bumps, and the ball radius for plateaus;
    ``taper`` is the plateau's half-width of transition.
    """

    shape: Shape
    height: float
    center: tuple[float, ...] | None = None
    width: float = 0.0
    taper: float = 0.0
    d: int = 1
    mollifier: str = "bump"
    resolution: int = 0
    components: tuple["FunctionInstance", ...] = ()
    norm_certificate: float | None = None
    _table: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False,
                                                        compare=False)

    @property
    def sign(self) -> int:
        return 1 if self.height >= 0 else -1

    def __call__(self, X) -> np.ndarray:
        X = _as_points(X)
        if self.shape is Shape.CONSTANT:
            return np.full(X.shape[0], self.height)
        if self.shape is Shape.COMPOSITE:
            out = np.zeros(X.shape[0])
            for comp in self.components:
                out += comp(X)
            return out
        rho = np.linalg.norm(X - np.asarray(self.center), axis=1)
        return self.radial(rho)

    def radial(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.shape is Shape.SPATIAL_BUMP:
            return self.height / H0 * bump_profile(rho / self.width)
        if self.shape is Shape.SE_BUMP:
            return self.height * np.exp(-0.5 * (rho / self.width) ** 2)
        if self.shape is Shape.BALL_PLATEAU:
            radii, vals = self._table
            return self.height * np.interp(rho, radii, vals, right=0.0)
        raise TypeError(f"{self.shape} is not radial")

    def value(self, x) -> float:
        return float(self(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))[0])

    def support_radius(self) -> float:
        """Radius outside which the function is identically zero (inf if none)."""
        if self.shape is Shape.SPATIAL_BUMP:
            return self.width
        if self.shape is Shape.BALL_PLATEAU and self.mollifier == "bump":
            return self.width + self.taper
        return math.inf

    def critical_points(self) -> list[np.ndarray]:
        """Points where the function attains its extreme values."""
        if self.shape is Shape.COMPOSITE:
            return [p for c in self.components for p in c.critical_points()]
        if self.center is None:
            return []
        return [np.asarray(self.center, dtype=float)]

    def with_certificate(self, value: float) -> "FunctionInstance":
        return replace(self, norm_certificate=float(value))

    def to_dict(self) -> dict:
        out = {"shape": self.shape.value, "height": self.height}
        if self.center is not None:
            out["center"] = list(self.center)
        if self.shape in (Shape.SPATIAL_BUMP, Shape.SE_BUMP, Shape.BALL_PLATEAU):
            out["width"] = self.width
        if self.shape is Shape.BALL_PLATEAU:
            out.update(taper=self.taper, d=self.d, mollifier=self.mollifier,
                       resolution=self.resolution)
        if self.shape is Shape.COMPOSITE:
            out["components"] = [c.to_dict() for c in self.components]
        if self.norm_certificate is not None:
            out["norm_certificate"] = self.norm_certificate
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "FunctionInstance":
        shape = Shape(spec["shape"])
        cert = spec.get("norm_certificate")
        center = tuple(spec["center"]) if "center" in spec else None
        if shape is Shape.COMPOSITE:
            comps = tuple(cls.from_dict(c) for c in spec["components"])
            return cls(shape, 0.0, components=comps, norm_certificate=cert)
        if shape is Shape.BALL_PLATEAU:
            base = ball_plateau(spec["width"], spec["taper"], spec["resolution"],
                                d=spec["d"], height=spec["height"],
                                mollifier=spec["mollifier"])
            return replace(base, center=center, norm_certificate=cert)
        return cls(shape, float(spec["height"]), center=center,
                   width=float(spec.get("width", 0.0)), d=len(center) if center else 1,
                   norm_certificate=cert)


def spatial_bump(center, height: float, radius: float) -> FunctionInstance:
    center = tuple(float(c) for c in np.atleast_1d(center))
    if not radius > 0:
        raise ValueError("bump radius must be positive")
    return FunctionInstance(Shape.SPATIAL_BUMP, float(height), center, float(radius),
                            d=len(center))


def matern_width(eps: float, B: float, nu: float, kappa: float) -> float:
    """Bump width ``(2 eps kappa / B)^(1/nu)`` at which the norm budget is met."""
    if not (eps > 0 and B > 0 and kappa > 0 and nu > 0):
        raise ValueError("eps, B, kappa and nu must be positive")
    return (2.0 * eps * kappa / B) ** (1.0 / nu)


def make_matern_bump(eps: float, B: float, k: Kernel, center, kappa: float,
                     diameter: bool = False) -> FunctionInstance:
    """Spatial bump of peak ``2 eps`` whose width follows the Matern budget rule.

    By default the support radius is the width ``w``.  With ``diameter=True`` the
    width is the support diameter (radius ``w/2``), which is how the hard classes
    tile ``floor(1/w)^d`` cells with disjoint supports.
    """
    if k.family is not Family.MATERN:
        raise ValueError("make_matern_bump needs a Matern kernel")
    w = matern_width(eps, B, k.nu, kappa)
    if w >= 0.5:
        raise InstanceTooWide(f"width {w:.4g} >= 1/2: eps/B too large for kappa={kappa}")
    return spatial_bump(center, 2.0 * eps, w / 2.0 if diameter else w)


def make_se_bump(eps: float, center, w: float, l: float) -> FunctionInstance:
    """Gaussian-shape stand-in ``2 eps exp(-r^2 / (2 w^2))`` for the SE kernel."""
    if w < l:
        raise ValueError(f"SE bump width {w} below the lengthscale {l}: norm would blow up")
    center = tuple(float(c) for c in np.atleast_1d(center))
    return FunctionInstance(Shape.SE_BUMP, 2.0 * eps, center, float(w), d=len(center))


def se_half_height_radius(w: float) -> float:
    """Radius at which an SE bump falls to half its peak."""
    return w * math.sqrt(2.0 * math.log(2.0))


def constant_shift(value: float) -> FunctionInstance:
    return FunctionInstance(Shape.CONSTANT, float(value))


def composite(*components: FunctionInstance) -> FunctionInstance:
    return FunctionInstance(Shape.COMPOSITE, 0.0, components=tuple(components))


# ---------------------------------------------------------------------------
# ball plateau: mollifier convolved with a ball indicator, tabulated radially
# ---------------------------------------------------------------------------

MIN_TAPER_CELLS = 8


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _cap_fraction(t: np.ndarray, d: int) -> np.ndarray:
    """Fraction of the unit sphere S^{d-1} with first coordinate >= t (d >= 2)."""
    t = np.clip(t, -1.0, 1.0)
    half = 0.5 * betainc((d - 1) / 2.0, 0.5, 1.0 - t * t)
    return np.where(t >= 0, half, 1.0 - half)


def _mollifier(kind: str, w0: float):
    if kind == "bump":
        return (lambda s: bump_profile(np.asarray(s) / w0)), w0
    if kind == "gaussian":
        return (lambda s: np.exp(-0.5 * (np.asarray(s) / w0) ** 2)), 8.0 * w0
    raise ValueError(f"unknown mollifier {kind!r}")


def _ball_convolution(rho: float, r: float, w0: float, d: int, kind: str) -> float:
    """(mollifier * ball_r)(x) at |x| = rho, by one radial quadrature."""
    g, reach = _mollifier(kind, w0)
    if d == 1:
        lo, hi = max(rho - r, -reach), min(rho + r, reach)
        if hi <= lo:
            return 0.0
        return integrate.quad(lambda y: float(g(abs(y))), lo, hi, limit=200,
                              epsabs=1e-14, epsrel=1e-11)[0]

    def integrand(s):
        if rho == 0.0:
            frac = 1.0 if s <= r else 0.0
        elif s == 0.0:
            frac = 1.0 if rho <= r else 0.0
        else:
            frac = float(_cap_fraction(np.array((rho**2 + s**2 - r**2) / (2 * rho * s)), d))
        return float(g(s)) * s ** (d - 1) * frac

    pts = [p for p in (abs(r - rho), r + rho) if 0 < p < reach]
    val = integrate.quad(integrand, 0.0, reach, points=pts or None, limit=200,
                         epsabs=1e-14, epsrel=1e-11)[0]
    return _sphere_area(d) * val


def ball_plateau(r: float, w0: float, grid_resolution: int, d: int = 1,
                 height: float = 1.0, mollifier: str = "bump",
                 center=None) -> FunctionInstance:
    """Radially tabulated ``mollifier * ball`` normalized to plateau value ``height``.

    With the bump mollifier the result equals ``height`` for ``|x| <= r - w0``,
    vanishes for ``|x| >= r + w0`` and decreases monotonically in between.
    ``grid_resolution`` is the number of table nodes per unit radius.
    """
    if not (0 < w0 <= r / 2):
        raise ValueError(f"need 0 < w0 <= r/2, got r={r}, w0={w0}")
    cells = 2.0 * w0 * grid_resolution
    if cells < MIN_TAPER_CELLS:
        raise ValueError(f"resolution {grid_resolution} gives {cells:.1f} cells across the "
                         f"taper; need at least {MIN_TAPER_CELLS}")
    _, reach = _mollifier(mollifier, w0)
    lo, hi = max(r - reach, 0.0), r + reach
    n = max(int(math.ceil((hi - lo) * grid_resolution)), 2) + 1
    radii = np.linspace(lo, hi, n)
    vals = np.array([_ball_convolution(x, r, w0, d, mollifier) for x in radii])
    peak = _ball_convolution(0.0, r, w0, d, mollifier)
    vals = np.minimum(vals / peak, 1.0)
    vals[-1] = 0.0 if mollifier == "bump" else vals[-1]
    # running minimum removes quadrature jitter so the taper is non-increasing
    vals = np.minimum.accumulate(vals)
    if lo > 0:
        radii = np.concatenate([[0.0], radii])
        vals = np.concatenate([[1.0], vals])
    radii.setflags(write=False)
    vals.setflags(write=False)
    center = tuple(float(c) for c in np.atleast_1d(center)) if center is not None \
        else tuple([0.0] * d)
    return FunctionInstance(Shape.BALL_PLATEAU, float(height), center, float(r),
                            taper=float(w0), d=d, mollifier=mollifier,
                            resolution=int(grid_resolution), _table=(radii, vals))


# ---------------------------------------------------------------------------
# norm certification
# ---------------------------------------------------------------------------

def min_norm_certificate(k: Kernel, f, grid) -> float:
    """Norm of the minimum-norm interpolant of ``f`` on ``grid``."""
    grid = _as_points(grid)
    if grid.shape[0] == 0:
        raise ValueError("certificate grid is empty")
    v = f(grid) if callable(f) else np.asarray(f, dtype=float)
    if not np.any(v):
        return 0.0
    L, _ = cholesky_jitter(kernel_matrix(k, grid))
    a = solve_triangular(L, v, lower=True, check_finite=False)
    return float(np.sqrt(a @ a))


def spectral_density(k: Kernel, s, d: int) -> np.ndarray:
    """Spectral density of ``k`` on ``R^d`` at frequency radius ``s`` (cycles)."""
    s = np.asarray(s, dtype=float)
    l = k.lengthscale
    if k.family is Family.SE:
        return (2 * math.pi * l * l) ** (d / 2) * np.exp(-2 * math.pi**2 * l * l * s * s)
    nu = k.nu
    const = (2**d * math.pi ** (d / 2) * gamma_fn(nu + d / 2) * (2 * nu) ** nu
             / (gamma_fn(nu) * l ** (2 * nu)))
    return const * (2 * nu / l**2 + 4 * math.pi**2 * s * s) ** (-(nu + d / 2))


def hankel_transform(profile, support: float, d: int, s: np.ndarray,
                     nodes: int = 1200) -> np.ndarray:
    """Fourier transform of a radial function with compact (or truncated) support."""
    x, wts = np.polynomial.legendre.leggauss(nodes)
    r = 0.5 * support * (x + 1.0)
    wts = 0.5 * support * wts
    g = profile(r)
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    order = d / 2 - 1
    chunk = 512
    for i in range(0, s.size, chunk):
        sc = s[i:i + chunk]
        arg = 2 * math.pi * np.outer(sc, r)
        if d == 1:
            out[i:i + chunk] = 2.0 * (np.cos(arg) @ (g * wts))
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            ker = jv(order, arg) * r ** (d / 2) * sc[:, None] ** (1 - d / 2)
        val = 2 * math.pi * (ker @ (g * wts))
        zero = sc == 0
        if np.any(zero):
            val[zero] = _sphere_area(d) * np.sum(g * wts * r ** (d - 1))
        out[i:i + chunk] = val
    return out


def _ball_ft(r: float, d: int, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    zero = s == 0
    out[zero] = math.pi ** (d / 2) * r**d / math.gamma(d / 2 + 1)
    sp = s[~zero]
    out[~zero] = r ** (d / 2) * jv(d / 2, 2 * math.pi * r * sp) / sp ** (d / 2)
    return out


def fourier_norm(k: Kernel, f: FunctionInstance, d: int | None = None,
                 s_max: float | None = None, n_freq: int = 8001) -> float:
    """RKHS norm of ``f`` as a function on ``R^d`` (an upper bound on the domain norm).

    Composite functions get the triangle-inequality bound.  Constants and spatial
    bumps under the SE kernel have infinite norm on ``R^d``.
    """
    if f.shape is Shape.COMPOSITE:
        return float(sum(fourier_norm(k, c, d, s_max, n_freq) for c in f.components))
    if f.shape is Shape.CONSTANT:
        return 0.0 if f.height == 0 else math.inf
    d = d if d is not None else (len(f.center) if f.center else f.d)
    if f.height == 0:
        return 0.0
    # the norm on R^d is translation invariant, so translates share one transform
    key = (k.family, k.nu, k.lengthscale, f.shape, f.height, f.width, f.taper, f.mollifier,
           d, s_max, n_freq)
    if key not in _NORM_CACHE:
        if len(_NORM_CACHE) >= 256:
            _NORM_CACHE.clear()
        _NORM_CACHE[key] = _radial_norm(k, f, d, s_max, n_freq)
    return _NORM_CACHE[key]


_NORM_CACHE: dict = {}


def _radial_norm(k: Kernel, f: FunctionInstance, d: int, s_max, n_freq: int) -> float:
    if k.family is Family.SE:
        if f.shape is Shape.SE_BUMP:
            w, l = f.width, k.lengthscale
            if 2 * w * w <= l * l:
                return math.inf
            return abs(f.height) * (w * w / (l * math.sqrt(2 * w * w - l * l))) ** (d / 2)
        if f.shape is Shape.SPATIAL_BUMP or f.mollifier == "bump":
            return math.inf
    scale = min(f.width if f.shape is not Shape.BALL_PLATEAU else f.taper, k.lengthscale)
    if s_max is None:
        s_max = 60.0 / scale
    s = np.linspace(0.0, s_max, n_freq)
    if f.shape is Shape.SPATIAL_BUMP:
        F = hankel_transform(lambda r: f.height / H0 * bump_profile(r / f.width),
                             f.width, d, s)
    elif f.shape is Shape.SE_BUMP:
        w = f.width
        F = f.height * (2 * math.pi * w * w) ** (d / 2) * np.exp(-2 * math.pi**2 * w * w * s * s)
    else:
        peak = _ball_convolution(0.0, f.width, f.taper, d, f.mollifier)
        if f.mollifier == "gaussian":
            # untruncated Gaussian; the tabulated one is cut at 8 w0 (relative change ~1e-14)
            w0, l = f.taper, k.lengthscale
            amp = f.height / peak * (2 * math.pi * w0 * w0) ** (d / 2) * _ball_ft(f.width, d, s)
            if k.family is Family.SE:
                if 2 * w0 * w0 <= l * l:
                    return math.inf
                ratio = (amp * amp / (2 * math.pi * l * l) ** (d / 2)
                         * np.exp(-2 * math.pi**2 * (2 * w0 * w0 - l * l) * s * s))
                val = integrate.trapezoid(ratio * s ** (d - 1) * _sphere_area(d), s)
                return float(math.sqrt(max(val, 0.0)))
            F = amp * np.exp(-2 * math.pi**2 * w0 * w0 * s * s)
        else:
            g, reach = _mollifier(f.mollifier, f.taper)
            coarse = np.linspace(0.0, s_max, 4001)
            G0 = np.interp(s, coarse, hankel_transform(g, reach, d, coarse))
            F = f.height / peak * G0 * _ball_ft(f.width, d, s)
    dens = spectral_density(k, s, d)
    integrand = F * F / dens * s ** (d - 1) * _sphere_area(d)
    val = integrate.trapezoid(integrand, s)
    return float(math.sqrt(max(val, 0.0)))


def calibrate_kappa(k: Kernel, d: int, eps: float, B: float, grid,
                    target_fraction: float = 1.0 / 3.0, tol: float = 1e-3) -> float:
    """Smallest ``kappa`` whose class member (diameter-``w`` bump) certifies <= target.

    The certificate is computed on ``grid`` for a bump centred in the cube; the
    search is a bisection in log-kappa.
    """
    grid = _as_points(grid)
    target = target_fraction * B
    centre = np.full(d, 0.5)

    def cert(kappa):
        w = matern_width(eps, B, k.nu, kappa)
        return min_norm_certificate(k, spatial_bump(centre, 2 * eps, w / 2), grid)

    lo, hi = 1e-3, 1.0
    while cert(hi) > target:
        lo, hi = hi, hi * 2
        if matern_width(eps, B, k.nu, hi) >= 0.5:
            raise InstanceTooWide("no kappa meets the budget before the bump fills the cube")
    while hi / lo > 1 + tol:
        mid = math.sqrt(lo * hi)
        if cert(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi
