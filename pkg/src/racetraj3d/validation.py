"""Exceptions and input-checking helpers shared across the package."""

from __future__ import annotations

import numpy as np


class TrackFormatError(ValueError):
    """Malformed track file row."""


class TrackValidationError(ValueError):
    """Track samples violate geometric invariants."""


class GgValidationError(ValueError):
    """gg lookup table is incomplete or out of range."""


class RacingLineError(ValueError):
    """Racing line could not be generated or evaluated."""


class SamplingError(ValueError):
    pass


class TransformDomainError(ValueError):
    """Curvilinear state outside the domain of the Cartesian transform."""


class SelectionError(ValueError):
    pass


class ScenarioAborted(RuntimeError):
    """Simulation stopped after too many consecutive soft-fallback cycles."""


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        kind = "positive" if strict else "non-negative"
        raise ValueError(f"{name} must be {kind}, got {value!r}")
    return value


def check_fraction(value, name):
    value = float(value)
    if not 0.0 <= value < 1.0:
        raise ValueError(f"{name} must lie in [0, 1), got {value!r}")
    return value


def check_state_array(x, name, ndim=1):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_increasing(arr, name):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D array")
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr
