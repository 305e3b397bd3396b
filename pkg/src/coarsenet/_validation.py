"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np


class InputError(ValueError):
    """Raised when caller-supplied data or parameters violate a contract."""


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InputError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InputError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_ratio(value, name: str = "ratio") -> float:
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} must be a real number, got {value!r}") from exc
    if not 0.0 < value <= 1.0:
        raise InputError(f"{name} must lie in (0, 1], got {value}")
    return value


def check_fraction(value, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0 or not np.isfinite(value):
        raise InputError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_matrix(X, name: str = "X", n_rows: int | None = None) -> np.ndarray:
    """Return ``X`` as a finite 2-d float64 array, optionally checking row count."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if n_rows is not None and X.shape[0] != n_rows:
        raise InputError(f"{name} has {X.shape[0]} rows, expected {n_rows}")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains non-finite values")
    return X


def check_node_ids(ids, n: int, name: str = "node ids") -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise InputError(f"{name} reference nodes outside [0, {n})")
    return ids
