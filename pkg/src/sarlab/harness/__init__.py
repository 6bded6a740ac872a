"""Experiment orchestration: configs, training runs, sweeps, logs, charts and traces."""

from .config import ConfigError, ExperimentConfig, load_config
from .experiment import Trainer, load_agent, run_experiment, sweep_delta, train_seed
from .plot import plot, plot_runlogs, probe_chart
from .runlog import COLUMNS, HEADER_LINE, CsvWriter, SchemaError, ci95_half, read_csv
from .trace import MaskError, export_trace

__all__ = [
    "COLUMNS", "ConfigError", "CsvWriter", "ExperimentConfig", "HEADER_LINE", "MaskError",
    "SchemaError", "Trainer", "ci95_half", "export_trace", "load_agent", "load_config", "plot",
    "plot_runlogs", "probe_chart", "read_csv", "run_experiment", "sweep_delta", "train_seed",
]
