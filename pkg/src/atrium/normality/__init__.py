"""4-D kernel-density normality model with a ring-buffer training set."""

from ._dispatch import ACTIVE_BACKEND, BACKENDS, get_backend
from .model import (
    DEFAULT_DIMS,
    DEFAULT_RING_CAPACITY,
    DEFAULT_SIGMA,
    DEFAULT_TRUNCATION_RADIUS,
    MAX_GAP_SECONDS,
    REFERENCE_STEP_LENGTH,
    SNAPSHOT_MAGIC,
    STEP_SECONDS,
    DepositRecord,
    EmptyBins,
    EmptySteps,
    GridTransform,
    NormalityArray,
    NormalityModel,
    SnapshotError,
    TooFewPoints,
    TooFewValues,
    TrainingRing,
    TrajectoryStep,
    UnknownRecord,
    detect_threshold,
    kernel,
    resample,
    resample_trajectory,
    ring_update,
    split_on_gaps,
    velocity_weight,
)

__all__ = [
    "ACTIVE_BACKEND",
    "BACKENDS",
    "DEFAULT_DIMS",
    "DEFAULT_RING_CAPACITY",
    "DEFAULT_SIGMA",
    "DEFAULT_TRUNCATION_RADIUS",
    "MAX_GAP_SECONDS",
    "REFERENCE_STEP_LENGTH",
    "SNAPSHOT_MAGIC",
    "STEP_SECONDS",
    "DepositRecord",
    "EmptyBins",
    "EmptySteps",
    "GridTransform",
    "NormalityArray",
    "NormalityModel",
    "SnapshotError",
    "TooFewPoints",
    "TooFewValues",
    "TrainingRing",
    "TrajectoryStep",
    "UnknownRecord",
    "detect_threshold",
    "get_backend",
    "kernel",
    "resample",
    "resample_trajectory",
    "ring_update",
    "split_on_gaps",
    "velocity_weight",
]
