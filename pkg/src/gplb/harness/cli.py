"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verify-lemmas failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..bounds import PreconditionError, lower_bound
from ..hard_instances import CertificationError, EmptyClass
from ..kernels import NumericalFailure
from ..rkhs import InstanceTooWide
from .config import ConfigError, load_config
from .emit import EmitError, PLOT_COLUMNS, _write, bound_spec_for, emit, write_json
from .experiment import SweepPoint, SweepResult, build_class, run_experiment, scaling_sweep, sweep_point_config
from .verify import verify_lemmas

log = logging.getLogger("gplb")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gplb", description="GP bandit hard-instance testbed")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("build-class", "build and certify the configured class"),
                        ("run", "run one experiment"),
                        ("sweep", "run the configured sweep and fit a log-log slope"),
                        ("verify-lemmas", "construction and lemma checks"),
                        ("bounds", "evaluate bound curves for the configured sweep"),
                        ("emit", "run (or sweep) and write the chosen output format")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--seed", type=int, default=None, help="override the master seed")
        s.add_argument("--out", type=Path, default=None, help="output directory")
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--format", choices=("csv", "plotdata"), default="csv")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _out_dir(args, cfg) -> Path:
    if args.out is not None:
        return args.out
    return Path(cfg.output) if cfg.output else Path("results") / cfg.name


def _run_or_sweep(cfg, workers):
    return scaling_sweep(cfg, workers) if cfg.sweep is not None else run_experiment(cfg, workers)


def _summary(result) -> dict:
    if isinstance(result, SweepResult):
        return {"sweep": [{"value": p.value, "x": p.x, "y": p.y, "eps": p.eps, "M": p.M}
                          for p in result.points],
                "slope": result.slope, "note": result.note}
    return {"class": result.class_info, "aggregates": result.aggregates}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed: must be an unsigned 64-bit integer")
            cfg = cfg.replace(seed=args.seed)
        out = _out_dir(args, cfg)
        if args.command == "build-class":
            cls = build_class(cfg)
            path = write_json(cls.to_manifest(), _prepare_dir(out) / "class.json")
            print(f"{cls.kind.value}: M={cls.M} w={cls.w:.6g} certified={cls.certified} -> {path}")
            return EXIT_OK
        if args.command == "verify-lemmas":
            report = verify_lemmas(cfg)
            write_json(report.to_dict(), _prepare_dir(out) / "verify.json")
            for c in report.checks:
                print(f"{c.status.upper():17s} {c.name}")
            return EXIT_OK if report.ok else EXIT_VERIFY
        if args.command == "bounds":
            return _bounds(cfg, out)
        if args.command in ("run", "sweep", "emit"):
            if args.command == "sweep" and cfg.sweep is None:
                raise ConfigError("sweep: config has no sweep section")
            if args.command == "run" and cfg.sweep is not None:
                cfg = cfg.replace(sweep=None)
            result = _run_or_sweep(cfg, args.workers)
            paths = emit(result, args.format, out)
            write_json(_summary(result), out / "summary.json")
            for p in paths:
                print(p)
            if isinstance(result, SweepResult):
                print(f"slope={result.slope} {result.note}".strip())
            return EXIT_NUMERICAL if result.has_numerical_failure else EXIT_OK
    except (ConfigError, PreconditionError, CertificationError, EmptyClass, InstanceTooWide) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except EmitError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


def _prepare_dir(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EmitError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _bounds(cfg, out: Path) -> int:
    """Bound curve over the sweep values (or the single configured point)."""
    if cfg.sweep is None:
        raise ConfigError("bounds: config needs a sweep section to define the x-axis")
    rows = []
    fake = SweepResult(cfg, [], None, None, "")
    for v in cfg.sweep.values:
        sub = sweep_point_config(cfg, v)
        point = SweepPoint(float(v), 1.0 / v if cfg.sweep.invert_x else float(v), 0.0,
                           sub.hard_class.eps, 0, None)
        y = lower_bound(bound_spec_for(fake, float(v), point))
        rows.append(["bound", point.x, y, y, y])
    path = _write(_prepare_dir(out) / "bounds.csv", PLOT_COLUMNS, rows)
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
