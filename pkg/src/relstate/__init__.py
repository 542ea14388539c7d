"""Relative-state quantum mechanics over non-orthonormal bases."""

from . import errors, linalg
from ._kernels import BACKEND
from .core import (
    BasisFamily,
    EntangledState,
    RelativeDistribution,
    SubsystemState,
    conditional_project,
    partial_trace_metric,
    relative_expectation,
    state_from_dict,
    state_to_dict,
    swap_roles,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BasisFamily",
    "EntangledState",
    "RelativeDistribution",
    "SubsystemState",
    "conditional_project",
    "errors",
    "linalg",
    "partial_trace_metric",
    "relative_expectation",
    "state_from_dict",
    "state_to_dict",
    "swap_roles",
]
