"""Versioned JSON experiment configs with strict key checking."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1
SETTINGS = ("standard", "corrupted_samples", "corrupted_final_point")
CLASS_KINDS = ("standard", "simplified_matern", "final_point_robust")
SWEEP_PARAMS = ("eps", "C", "T")
METRICS = ("median_R_T", "mean_R_T", "median_time_to_eps", "median_simple_regret",
           "success_rate")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class KernelConfig:
    family: str
    lengthscale: float
    nu: float | None = None


@dataclass(frozen=True)
class ClassConfig:
    kind: str
    eps: float
    B: float
    d: int = 1
    kappa: float | None = None
    xi: float | None = None
    eta: float = 0.01
    require_certified: bool = True
    cert_grid: int | None = None
    plateau_resolution: int | None = None


@dataclass(frozen=True)
class AlgorithmConfig:
    name: str = "gp_ucb"
    deterministic: bool = True
    delta: float = 0.1
    reporting: str = "posterior_mean"
    model_noise_var: float | None = None
    B: float | None = None


@dataclass(frozen=True)
class AdversaryConfig:
    C: float
    B0: float | None = None


@dataclass(frozen=True)
class SweepConfig:
    param: str
    values: tuple
    metric: str = "median_R_T"
    invert_x: bool = False
    alpha: float | None = None


@dataclass(frozen=True)
class GridConfig:
    acquisition: int = 256
    evaluation: int = 101
    perturbation: int = 64
    region: int = 32


@dataclass(frozen=True)
class TimeToEpsConfig:
    rule: str = "first"
    eps: float | None = None
    early_stop: bool = False


@dataclass(frozen=True)
class VerifyConfig:
    pair: tuple | None = None
    T: int | None = None
    replicates: int = 400
    corruptible_alpha: float | None = None
    lemma7_max: float = 8.0
    overlap_grid: int = 10000


@dataclass(frozen=True)
class BoundsConfig:
    setting: str | None = None
    knob: float = 1.0
    fit_knob: bool = False
    flags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    setting: str
    kernel: KernelConfig
    hard_class: ClassConfig
    algorithm: AlgorithmConfig = AlgorithmConfig()
    noise_var: float = 0.0
    adversary: AdversaryConfig | None = None
    T: int = 100
    sweep: SweepConfig | None = None
    replicates: int = 1
    members: typing.Any = "all"
    seed: int = 0
    grid: GridConfig = GridConfig()
    time_to_eps: TimeToEpsConfig = TimeToEpsConfig()
    verify: VerifyConfig | None = None
    bounds: BoundsConfig | None = None
    output: str | None = None
    schema_version: int = SCHEMA_VERSION

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _prune(dataclasses.asdict(self))


def _prune(obj):
    if isinstance(obj, dict):
        return {k: _prune(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_prune(v) for v in obj]
    return obj


def _section_type(tp):
    """Dataclass type inside ``X`` or ``X | None``, else None."""
    if dataclasses.is_dataclass(tp):
        return tp
    for arg in typing.get_args(tp):
        if dataclasses.is_dataclass(arg):
            return arg
    return None


def _build(cls, raw, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(raw).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown key")
    kwargs = {}
    for name, f in fields.items():
        where = f"{path}.{name}" if path else name
        if name not in raw:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{where}: required field missing")
            continue
        value = raw[name]
        sub = _section_type(hints[name])
        if sub is not None and value is not None:
            value = _build(sub, value, where)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


def _positive(value, where, allow_zero=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and (
        value >= 0 if allow_zero else value > 0)
    if not ok:
        raise ConfigError(f"{where}: must be {'nonnegative' if allow_zero else 'positive'}, got {value!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fail fast on any cross-field or range violation."""
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported {cfg.schema_version!r} (expected {SCHEMA_VERSION})")
    if cfg.setting not in SETTINGS:
        raise ConfigError(f"setting: {cfg.setting!r} not in {SETTINGS}")
    k = cfg.kernel
    if k.family not in ("se", "matern"):
        raise ConfigError(f"kernel.family: {k.family!r} not in ('se', 'matern')")
    _positive(k.lengthscale, "kernel.lengthscale")
    if k.family == "matern":
        _positive(k.nu, "kernel.nu")
    elif k.nu is not None:
        raise ConfigError("kernel.nu: only valid for the Matern family")
    c = cfg.hard_class
    if c.kind not in CLASS_KINDS:
        raise ConfigError(f"hard_class.kind: {c.kind!r} not in {CLASS_KINDS}")
    _positive(c.eps, "hard_class.eps")
    _positive(c.B, "hard_class.B")
    if c.d not in (1, 2, 3):
        raise ConfigError(f"hard_class.d: must be 1, 2 or 3, got {c.d!r}")
    if k.family == "matern" and c.kappa is None:
        raise ConfigError("hard_class.kappa: required for Matern classes")
    if c.kind == "simplified_matern" and k.family != "matern":
        raise ConfigError("hard_class.kind: simplified_matern needs a Matern kernel")
    if c.kind == "final_point_robust":
        if c.xi is None or not 0 < c.xi < 0.5:
            raise ConfigError(f"hard_class.xi: must lie in (0, 1/2), got {c.xi!r}")
        if not 0 < c.eta < 0.25:
            raise ConfigError(f"hard_class.eta: must lie in (0, 1/4), got {c.eta!r}")
    if (cfg.setting == "corrupted_final_point") != (c.kind == "final_point_robust"):
        raise ConfigError("hard_class.kind: the final_point_robust class goes with "
                          "setting corrupted_final_point (and only there)")
    a = cfg.algorithm
    if a.name not in ("gp_ucb", "random"):
        raise ConfigError(f"algorithm.name: {a.name!r} not in ('gp_ucb', 'random')")
    if not 0 < a.delta < 1:
        raise ConfigError(f"algorithm.delta: must lie in (0, 1), got {a.delta!r}")
    if a.reporting not in ("posterior_mean", "best_observed"):
        raise ConfigError(f"algorithm.reporting: unknown rule {a.reporting!r}")
    if a.model_noise_var is not None:
        _positive(a.model_noise_var, "algorithm.model_noise_var")
    _positive(cfg.noise_var, "noise_var", allow_zero=True)
    if cfg.setting == "corrupted_samples":
        if cfg.adversary is None:
            raise ConfigError("adversary: required for setting corrupted_samples")
        if not a.deterministic:
            raise ConfigError("algorithm.deterministic: the budget adversary needs a deterministic player")
    if cfg.adversary is not None:
        if cfg.setting != "corrupted_samples":
            raise ConfigError("adversary: only valid for setting corrupted_samples")
        _positive(cfg.adversary.C, "adversary.C", allow_zero=True)
        if cfg.adversary.B0 is not None:
            _positive(cfg.adversary.B0, "adversary.B0")
    if not isinstance(cfg.T, int) or cfg.T < 0:
        raise ConfigError(f"T: must be a nonnegative integer, got {cfg.T!r}")
    if not isinstance(cfg.replicates, int) or cfg.replicates < 1:
        raise ConfigError(f"replicates: must be a positive integer, got {cfg.replicates!r}")
    if not (cfg.members in ("all", "cycle") or (
            isinstance(cfg.members, tuple) and all(isinstance(m, int) for m in cfg.members))):
        raise ConfigError(f"members: 'all', 'cycle' or a list of indices, got {cfg.members!r}")
    if not isinstance(cfg.seed, int) or cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {cfg.seed!r}")
    if cfg.sweep is not None:
        s = cfg.sweep
        if s.param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep.param: {s.param!r} not in {SWEEP_PARAMS}")
        if s.metric not in METRICS:
            raise ConfigError(f"sweep.metric: {s.metric!r} not in {METRICS}")
        if not s.values:
            raise ConfigError("sweep.values: empty")
        for v in s.values:
            _positive(v, "sweep.values")
        if s.param == "C" and cfg.adversary is None:
            raise ConfigError("sweep.param: C sweeps need an adversary section")
        if s.alpha is not None:
            _positive(s.alpha, "sweep.alpha")
            if s.param != "C":
                raise ConfigError("sweep.alpha: only used to derive eps from C")
    t = cfg.time_to_eps
    if t.rule not in ("first", "sustained"):
        raise ConfigError(f"time_to_eps.rule: {t.rule!r} not in ('first', 'sustained')")
    if t.eps is not None:
        _positive(t.eps, "time_to_eps.eps")
    g = cfg.grid
    for name in ("acquisition", "evaluation", "perturbation"):
        if not isinstance(getattr(g, name), int) or getattr(g, name) < 2:
            raise ConfigError(f"grid.{name}: must be an integer >= 2")
    if not isinstance(g.region, int) or g.region < 16:
        raise ConfigError("grid.region: must be an integer >= 16")
    if cfg.verify is not None and cfg.verify.pair is not None:
        if len(cfg.verify.pair) != 2 or cfg.verify.pair[0] == cfg.verify.pair[1]:
            raise ConfigError("verify.pair: must be two distinct member indices")
    return cfg


def from_dict(raw: dict) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, raw, ""))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return from_dict(raw)
