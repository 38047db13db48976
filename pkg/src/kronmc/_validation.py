"""Input validation helpers shared by the public functions and estimators."""

import numpy as np

from .exceptions import DimensionMismatch


def check_matrix(M, name="matrix", allow_nonfinite=False):
    """Return ``M`` as a 2-D float64 array, rejecting NaN/Inf entries."""
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionMismatch(f"{name} must be non-empty, got shape {arr.shape}")
    if not allow_nonfinite and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def check_mask(mask, shape=None, name="mask"):
    """Return ``mask`` as a 2-D boolean array, optionally checking its shape."""
    arr = np.asarray(mask)
    if arr.dtype != np.bool_:
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ValueError(f"{name} must contain only 0/1 or boolean values")
        arr = arr.astype(bool)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_positive_int(value, name):
    if isinstance(value, (bool, np.bool_)) or int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
