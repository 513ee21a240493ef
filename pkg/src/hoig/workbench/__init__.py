"""Datasets, experiment runners and the command-line interface."""

from .data import Dataset, SyntheticConfig, generate_synthetic, load_csv
from .experiments import (
    STRUCTURE_THRESHOLD,
    ExperimentReport,
    run_realestate_experiment,
    run_synthetic_experiment,
    write_report,
)

__all__ = [
    "Dataset",
    "ExperimentReport",
    "STRUCTURE_THRESHOLD",
    "SyntheticConfig",
    "generate_synthetic",
    "load_csv",
    "run_realestate_experiment",
    "run_synthetic_experiment",
    "write_report",
]
