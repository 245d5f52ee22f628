"""Small input-checking helpers shared by the solvers and estimators."""

import numbers

import numpy as np


def check_positive(value, name, strict=True):
    """Return ``value`` as float after checking it is (strictly) positive."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def check_in_interval(value, name, low, high, closed="neither"):
    """Check ``low < value < high`` with optional closed ends ('left', 'right', 'both')."""
    value = float(value)
    lo_ok = value >= low if closed in ("left", "both") else value > low
    hi_ok = value <= high if closed in ("right", "both") else value < high
    if not (lo_ok and hi_ok):
        lb = "[" if closed in ("left", "both") else "("
        rb = "]" if closed in ("right", "both") else ")"
        raise ValueError(f"{name}={value} not in {lb}{low}, {high}{rb}")
    return value


def check_int(value, name, minimum=0):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def as_float_vector(x, name="x", size=None):
    """Copy ``x`` into a contiguous 1-D float64 array and check it is finite."""
    arr = np.array(x, dtype=np.float64).ravel()
    if size is not None and arr.size != size:
        raise ValueError(f"{name} has size {arr.size}, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_pm1_labels(y):
    """Map labels to {-1, +1}: strictly positive -> +1, everything else -> -1."""
    y = np.asarray(y, dtype=np.float64).ravel()
    return np.where(y > 0, 1.0, -1.0)
