"""Small input-validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError


def check_sequences(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D array of sequences (rows = samples, cols = steps)."""
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D (samples x steps), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be non-empty, got shape {arr.shape}")
    if np.issubdtype(arr.dtype, np.integer):
        return arr.astype(np.int64, copy=False)
    if np.issubdtype(arr.dtype, np.floating):
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"{name} contains non-finite values")
        return arr.astype(np.float64, copy=False)
    raise ConfigError(f"{name} must be integer tokens or real values, got dtype {arr.dtype}")


def check_paired(X: np.ndarray, y, x_name: str = "X", y_name: str = "y") -> np.ndarray:
    """Validate targets against inputs; returns the coerced target array."""
    arr = check_sequences(y, y_name)
    if arr.shape[0] != X.shape[0]:
        raise DimensionError(
            f"{x_name} and {y_name} disagree on sample count: {X.shape[0]} vs {arr.shape[0]}"
        )
    return arr


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, (int, np.integer)) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_tokens_in_range(arr: np.ndarray, low: int, high: int, name: str) -> None:
    if arr.min() < low or arr.max() > high:
        raise ConfigError(
            f"{name} tokens must lie in [{low}, {high}], got range "
            f"[{arr.min()}, {arr.max()}]"
        )
