"""Small input checks shared by the estimators and the physics modules."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array, check_consistent_length


def check_probability(value: float, name: str = "value") -> float:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


def check_counts(x) -> np.ndarray:
    """1-d array of non-negative integer photon counts."""
    arr = check_array(np.asarray(x).reshape(-1, 1), dtype=None, ensure_all_finite=True)
    arr = arr.ravel()
    if arr.size and (np.any(arr < 0) or np.any(np.asarray(arr) != np.round(arr))):
        raise ValueError("photon counts must be non-negative integers")
    return arr.astype(np.int64)


def check_xy(x, y, sample_weight=None, *, min_points: int = 1):
    """Validate a 1-d regression problem; returns float arrays."""
    x = check_array(np.asarray(x, dtype=float).reshape(-1, 1), ensure_min_samples=min_points).ravel()
    y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), ensure_min_samples=min_points).ravel()
    check_consistent_length(x, y)
    if sample_weight is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(sample_weight, dtype=float).ravel()
        check_consistent_length(y, w)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
    return x, y, w
