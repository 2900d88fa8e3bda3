"""Conductance-based cell models, their scalar reductions and condition sweeps."""

from .model import (
    FullDynamics,
    GateSpec,
    IonicModel,
    ModelFileError,
    ReductionRule,
    bundled_model,
    bundled_model_names,
    cubic_pseudo_model,
    load_model,
    parse_model,
)
from .reduction import (
    NotExcitableError,
    ReducedCurrent,
    ReductionError,
    RestingState,
    extract_landmarks,
    full_dynamics,
    reduce_to_1d,
    resting_state,
    time_constant_report,
)

__all__ = [
    "FullDynamics",
    "GateSpec",
    "IonicModel",
    "ModelFileError",
    "ReductionRule",
    "bundled_model",
    "bundled_model_names",
    "cubic_pseudo_model",
    "load_model",
    "parse_model",
    "NotExcitableError",
    "ReducedCurrent",
    "ReductionError",
    "RestingState",
    "extract_landmarks",
    "full_dynamics",
    "reduce_to_1d",
    "resting_state",
    "time_constant_report",
]
