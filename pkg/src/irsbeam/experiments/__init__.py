"""Seeded Monte-Carlo drivers, configuration and the ``irsbeam`` CLI."""

from .config import ConfigError, ExperimentConfig, load_config
from .trial import TrialRecord, run_trial

__all__ = ["ConfigError", "ExperimentConfig", "TrialRecord", "load_config", "run_trial"]
