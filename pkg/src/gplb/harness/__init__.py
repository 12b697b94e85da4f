"""Experiment orchestration: configs, Monte-Carlo runs, sweeps, lemma checks and output."""

from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .emit import emit, read_aggregates, read_rows
from .experiment import (ExperimentResult, SweepResult, build_class, run_experiment,
                         scaling_sweep)
from .stats import loglog_slope, wilson_interval
from .verify import VerifyReport, verify_lemmas

__all__ = ["ConfigError", "ExperimentConfig", "ExperimentResult", "SweepResult", "VerifyReport",
           "build_class", "emit", "from_dict", "load_config", "loglog_slope", "read_aggregates",
           "read_rows", "run_experiment", "scaling_sweep", "verify_lemmas", "wilson_interval"]
