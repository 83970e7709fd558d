"""Small input-validation helpers shared across modules."""

from __future__ import annotations

import numpy as np


def as_float_vector(value, length: int, name: str) -> np.ndarray:
    """Coerce to a float64 vector of the given length (scalars broadcast)."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(length, float(arr))
    if arr.shape != (length,):
        raise ValueError(f"{name} must have shape ({length},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_nonnegative(arr: np.ndarray, name: str) -> None:
    if np.any(arr < 0):
        raise ValueError(f"{name} must be componentwise nonnegative")


def check_positive_scalar(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_link_index(i: int, n_links: int) -> int:
    i = int(i)
    if not 0 <= i < n_links:
        raise IndexError(f"link index {i} out of range for {n_links} links")
    return i
