"""Experiment harness: config, event loop, transports, metrics and CLI."""

from .config import ConfigError, ExperimentConfig, RunMode, TopologyConfig, load_topology, with_run_options
from .experiment import Experiment, ExperimentResult, run_experiment
from .metrics import compute_handoff_duration, compute_intervals
from .report import compare_modes, emit_comparison, emit_run

__all__ = [
    "ConfigError",
    "Experiment",
    "ExperimentConfig",
    "ExperimentResult",
    "RunMode",
    "TopologyConfig",
    "compare_modes",
    "compute_handoff_duration",
    "compute_intervals",
    "emit_comparison",
    "emit_run",
    "load_topology",
    "run_experiment",
    "with_run_options",
]
