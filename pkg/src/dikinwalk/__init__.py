"""Soft-threshold Dikin walk sampler for log-concave densities on polytopes."""

from dikinwalk.errors import (
    ConfigError,
    DimensionMismatch,
    NotInterior,
    NotPositiveDefinite,
    StaleState,
    TargetEvaluationError,
    UnsupportedDimension,
    UnsupportedValidation,
)
from dikinwalk.polytope import (
    Polytope,
    augmented,
    build_hypercube,
    build_l1_ball,
    build_simplex,
    contains_interior,
    slack,
)
from dikinwalk.walk import Mode, TargetFunction, WalkConfig, hyperparams, run

__all__ = [
    "ConfigError",
    "DimensionMismatch",
    "Mode",
    "NotInterior",
    "NotPositiveDefinite",
    "Polytope",
    "StaleState",
    "TargetEvaluationError",
    "TargetFunction",
    "UnsupportedDimension",
    "UnsupportedValidation",
    "WalkConfig",
    "augmented",
    "build_hypercube",
    "build_l1_ball",
    "build_simplex",
    "contains_interior",
    "hyperparams",
    "run",
    "slack",
]

__version__ = "0.1.0"
