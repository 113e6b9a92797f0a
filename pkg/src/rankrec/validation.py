"""Input validation helpers used by the public entry points."""

import numpy as np


def as_score_vector(scores, name="scores"):
    """Coerce to a 1-D float64 array and reject non-finite entries."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_binary_labels(labels, name="labels"):
    """Coerce to a 1-D int8 array with entries in {0, 1}."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    out = arr.astype(np.int8, copy=True)
    if arr.size and (np.any(out < 0) or np.any(out > 1) or np.any(out != arr)):
        raise ValueError(f"{name} must contain only 0/1 entries")
    return out


def check_same_length(a, b, name_a="first", name_b="second"):
    if len(a) != len(b):
        raise ValueError(
            f"{name_a} and {name_b} must have equal length ({len(a)} vs {len(b)})"
        )


def check_fitted(estimator, attribute="model_"):
    """Raise if the estimator has not been fitted yet."""
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )
