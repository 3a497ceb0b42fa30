"""Numerical laboratory for the quantum Zeno effect and its limits under
indirect, wave-zone measurement."""

from .analysis import SurvivalSeries, compare_survival, fit_exponential, fit_short_time
from .field_model import DetectorConfig, FieldModel, FieldModelConfig, KernelSpec, run_experiment
from .matrix_models import ToyModel, ZenoRunSpec, build_friedrichs, build_two_level, projective_zeno, survival_series

__version__ = "0.1.0"

__all__ = [
    "DetectorConfig",
    "FieldModel",
    "FieldModelConfig",
    "KernelSpec",
    "SurvivalSeries",
    "ToyModel",
    "ZenoRunSpec",
    "build_friedrichs",
    "build_two_level",
    "compare_survival",
    "fit_exponential",
    "fit_short_time",
    "projective_zeno",
    "run_experiment",
    "survival_series",
]
