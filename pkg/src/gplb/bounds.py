"""Lower/upper bound evaluators and the change-of-measure lemma checkers.

The asymptotic bounds carry unspecified constants.  Each evaluator exposes that
constant as ``knob`` (default 1), so only shapes and ratios are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .algorithms import beta_t
from .kernels import Family


class PreconditionError(ValueError):
    """A bound's stated parameter range or asserted assumption does not hold."""


class Setting(str, Enum):
    STANDARD_SIMPLE = "standard_simple"
    STANDARD_CUMULATIVE = "standard_cumulative"
    CORRUPTED_SAMPLES = "corrupted_samples"
    CORRUPTED_FINAL_POINT = "corrupted_final_point"


def kl_gaussian(mu1: float, mu2: float, noise_var: float) -> float:
    """KL divergence between ``N(mu1, s^2)`` and ``N(mu2, s^2)``."""
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    return (mu1 - mu2) ** 2 / (2.0 * noise_var)


def relating_check(EN, Dbar, delta: float) -> tuple[float, float, bool]:
    """``sum_j E[N_j] Dbar_j >= log(1 / (2.4 delta))`` as ``(lhs, rhs, holds)``.

    Only meaningful once the caller has established that the event has
    probability at least ``1 - delta`` under one instance and at most ``delta``
    under the other.
    """
    EN = np.asarray(EN, dtype=float)
    Dbar = np.asarray(Dbar, dtype=float)
    if EN.shape != Dbar.shape:
        raise ValueError(f"length mismatch: {EN.shape} vs {Dbar.shape}")
    if not 0 < delta < 1 / 3:
        raise ValueError(f"delta must lie in (0, 1/3), got {delta}")
    lhs = float(EN @ Dbar)
    rhs = math.log(1.0 / (2.4 * delta))
    return lhs, rhs, lhs >= rhs


def divergence_decomposition(EN0, Dbar_m) -> float:
    """Upper bound ``sum_j E_0[N_j] Dbar_m^j`` on the divergence of the two output laws."""
    EN0 = np.asarray(EN0, dtype=float)
    Dbar_m = np.asarray(Dbar_m, dtype=float)
    if EN0.shape != Dbar_m.shape:
        raise ValueError(f"length mismatch: {EN0.shape} vs {Dbar_m.shape}")
    return float(EN0 @ Dbar_m)


def tv_bound(divergence: float, value_range: float = 1.0) -> float:
    """``|E_m[a] - E_0[a]| <= A sqrt(D)`` for a statistic with range ``A``."""
    return value_range * math.sqrt(max(divergence, 0.0))


@dataclass(frozen=True)
class BoundSpec:
    """Parameters of one lower bound.

    ``flags`` holds user-asserted assumptions that have no testable finite form.
    ``"eps_over_B_small"`` and ``"small_implied_constant"`` count as asserted
    unless set to false.  ``"C_range"`` must be set to admit ``C > sqrt(T)``.
    Flags are echoed into output metadata.
    """

    setting: Setting
    family: Family
    eps: float | None = None
    B: float = 1.0
    noise_var: float = 1.0
    delta: float = 0.1
    d: int = 1
    nu: float | None = None
    l: float | None = None
    C: float | None = None
    xi: float | None = None
    T: float | None = None
    knob: float = 1.0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting(self.setting))
        object.__setattr__(self, "family", Family(self.family))
        if not self.knob > 0:
            raise PreconditionError("knob must be positive")
        if self.family is Family.MATERN and not (self.nu and self.nu > 0):
            raise PreconditionError("Matern bounds need nu > 0")

    def metadata(self) -> dict:
        return {"setting": self.setting.value, "family": self.family.value,
                "knob": self.knob, "flags": dict(self.flags)}


def _need(cond: bool, message: str) -> None:
    if not cond:
        raise PreconditionError(message)


def _check(spec: BoundSpec) -> None:
    s = spec.setting
    if s in (Setting.STANDARD_SIMPLE, Setting.STANDARD_CUMULATIVE):
        _need(0 < spec.delta < 1 / 3, f"delta = {spec.delta} outside (0, 1/3)")
    if s is Setting.CORRUPTED_FINAL_POINT:
        _need(0 < spec.delta < 1, f"delta = {spec.delta} outside (0, 1)")
        _need(spec.xi is not None and 0 < spec.xi < 0.5, f"xi = {spec.xi} outside (0, 1/2)")
    if s in (Setting.STANDARD_SIMPLE, Setting.CORRUPTED_FINAL_POINT):
        _need(spec.eps is not None and 0 < spec.eps < 0.5, f"eps = {spec.eps} outside (0, 1/2)")
        _need(spec.B > spec.eps, "eps/B must be small: need eps < B")
        _need(spec.noise_var > 0, "noise variance must be positive")
        _need(spec.flags.get("eps_over_B_small", True),
              "assumption 'eps/B sufficiently small' asserted false")
    if s is Setting.STANDARD_CUMULATIVE:
        _need(spec.T is not None and spec.T >= 1, "T must be at least 1")
        _need(spec.noise_var > 0, "noise variance must be positive")
        _need(spec.flags.get("small_implied_constant", True),
              "assumption 'sigma^2 log(1/delta) / B^2 = O(T) with a small constant' asserted false")
    if s is Setting.CORRUPTED_SAMPLES:
        _need(spec.T is not None and spec.T >= 2, "T must be at least 2")
        _need(spec.C is not None and spec.C >= 1, f"C = {spec.C} must be at least 1")
        if not spec.flags.get("C_range", False):
            _need(spec.C <= math.sqrt(spec.T),
                  f"C = {spec.C} exceeds sqrt(T) = {math.sqrt(spec.T):.4g}; "
                  "assert flag 'C_range' to override")


def lower_bound(spec: BoundSpec) -> float:
    """Evaluate the lower bound of ``spec.setting`` with ``spec.knob`` as its constant."""
    _check(spec)
    s, d, nu = spec.setting, spec.d, spec.nu
    L = math.log(1.0 / spec.delta)
    se = spec.family is Family.SE
    if s in (Setting.STANDARD_SIMPLE, Setting.CORRUPTED_FINAL_POINT):
        ratio = spec.B / spec.eps
        size = math.log(ratio) ** (d / 2) if se else ratio ** (d / nu)
        return spec.knob * spec.noise_var / spec.eps**2 * size * L
    if s is Setting.STANDARD_CUMULATIVE:
        T, sL = spec.T, spec.noise_var * L
        if se:
            inner = spec.B**2 * T / sL
            _need(inner > 1, "B^2 T / (sigma^2 log(1/delta)) must exceed 1")
            return spec.knob * math.sqrt(T * spec.noise_var * math.log(inner) ** (d / 2) * L)
        p = 2 * nu + d
        return spec.knob * spec.B ** (d / p) * T ** ((nu + d) / p) * sL ** (nu / p)
    C, T = spec.C, spec.T
    if se:
        return spec.knob * C * math.log(T) ** (d / 2)
    return spec.knob * C ** (nu / (d + nu)) * T ** (d / (d + nu))


def gpucb_constant(noise_var: float) -> float:
    """``C_1 = 8 / log(1 + 1/sigma^2)``."""
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    return 8.0 / math.log1p(1.0 / noise_var)


def upper_bound_gpucb(T: int, B: float, noise_var: float, delta: float, gamma_T: float) -> float:
    """``sqrt(C_1 T beta_T gamma_T)`` with ``beta_T`` built from ``gamma_{T-1} <= gamma_T``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    return math.sqrt(gpucb_constant(noise_var) * T * beta_t(B, noise_var, gamma_T, delta) * gamma_T)


# ---------------------------------------------------------------------------
# horizon / accuracy inversion for the corrupted-samples construction
# ---------------------------------------------------------------------------

def class_size(family: Family, eps: float, d: int, nu: float | None = None,
               B: float = 1.0, knob: float = 1.0) -> float:
    """Continuous class-size scaling: ``(log(B/eps))^{d/2}`` (SE) or ``(B/eps)^{d/nu}``."""
    family = Family(family)
    if family is Family.SE:
        return knob * math.log(B / eps) ** (d / 2)
    return knob * (B / eps) ** (d / nu)


def horizon_for(eps: float, C: float, size) -> float:
    """``T = C M(eps) / eps`` with ``size`` the class-size function ``M``."""
    return C * size(eps) / eps


def invert_horizon(T: float, C: float, size, lo: float = 1e-12, hi: float = 0.5) -> float:
    """Solve ``T = C M(eps) / eps`` for ``eps`` by bracketing root-finding (log scale)."""
    if not (T > 0 and C > 0):
        raise ValueError("T and C must be positive")

    def g(u):
        e = math.exp(u)
        return math.log(horizon_for(e, C, size)) - math.log(T)

    a, b = math.log(lo), math.log(hi)
    if g(a) * g(b) > 0:
        raise ValueError(f"no eps in [{lo}, {hi}] gives T = {T} for C = {C}")
    return math.exp(brentq(g, a, b, xtol=1e-14, rtol=1e-14))


def inversion_shape(family: Family, T: float, C: float, d: int, nu: float | None = None) -> float:
    """Closed-form shape of the inverted accuracy: ``(C/T)(log T)^{d/2}`` or ``(C/T)^{nu/(d+nu)}``."""
    if Family(family) is Family.SE:
        return C / T * math.log(T) ** (d / 2)
    return (C / T) ** (nu / (d + nu))
