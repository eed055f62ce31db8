"""Shared input-validation helpers and error types."""

import numpy as np


class ConfigurationError(ValueError):
    """Raised when geometry, grid, or stage configuration is inconsistent."""


class ContainerFormatError(ValueError):
    """Raised on a malformed tensor container; carries the failing byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def as_float_array(x, name="array"):
    """Coerce to a float64 ndarray and reject non-finite values."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_finite(arr, name="array"):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_shape(arr, shape, name="array"):
    if tuple(arr.shape) != tuple(shape):
        raise ConfigurationError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr
