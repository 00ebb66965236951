"""Exceptions and small input-validation helpers shared across modules."""

import numpy as np


class ParameterError(ValueError):
    """An argument is outside the range an operation accepts."""


class DegenerateInputError(ValueError):
    """Input is well-formed but carries no usable information (e.g. zero variance)."""


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_int(value, name, minimum=None):
    if isinstance(value, (bool, np.bool_)) or int(value) != value:
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_finite(arr, name):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains NaN or Inf")
    return arr


def check_binary_matrix(Y, name="Y"):
    """Return ``Y`` as a 2-D uint8 array after checking every entry is 0 or 1."""
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2:
        raise ParameterError(f"{name} must be 2-D, got shape {Y.shape}")
    if Y.size and not np.all((Y == 0) | (Y == 1)):
        raise ParameterError(f"{name} must contain only 0 and 1")
    return Y.astype(np.uint8)


def integer_sample_count(seconds, rate):
    """``round(seconds * rate)`` with a tolerance for float products like 2.5e-3 * 450e3."""
    return int(np.floor(seconds * rate + 0.5))
