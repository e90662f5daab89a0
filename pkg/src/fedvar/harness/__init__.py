"""Experiment harness: config files, panel ingestion, runners, and the CLI."""

from .config import KINDS, ExperimentConfig, PanelSpec, config_hash
from .experiments import run_experiment
from .panels import load_panel, write_panel

__all__ = [
    "KINDS",
    "ExperimentConfig",
    "PanelSpec",
    "config_hash",
    "load_panel",
    "run_experiment",
    "write_panel",
]
