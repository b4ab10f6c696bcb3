"""Experiment orchestration, fits, acceptance suite and command line."""

from .config import ExperimentConfig
from .fit import FitResult, Transform, fit_exponent

__all__ = ["ExperimentConfig", "FitResult", "Transform", "fit_exponent"]
