"""Input validation helpers shared by the estimators and the stats toolkit."""

import numpy as np

from .errors import (
    DegenerateLabelsError,
    EmptyInputError,
    LengthMismatchError,
    StatsError,
)


def check_hu_slice(X):
    """Return ``X`` as a finite 2-D float array."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D slice, got shape {X.shape}")
    if not np.issubdtype(X.dtype, np.floating):
        X = X.astype(np.float32)
    if not np.all(np.isfinite(X)):
        raise ValueError("slice contains non-finite values")
    return X


def check_hu_volume(X):
    """Return ``X`` as a finite (depth, rows, cols) float array.

    A single 2-D slice is promoted to depth 1.
    """
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[np.newaxis]
    if X.ndim != 3:
        raise ValueError(f"expected a (depth, rows, cols) volume, got shape {X.shape}")
    if not np.issubdtype(X.dtype, np.floating):
        X = X.astype(np.float32)
    if not np.all(np.isfinite(X)):
        raise ValueError("volume contains non-finite values")
    return X


def check_mask(mask):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {mask.shape}")
    return mask.astype(bool, copy=False)


def check_radius(radius):
    if int(radius) != radius or radius < 1:
        raise ValueError(f"radius must be an integer >= 1, got {radius!r}")
    return int(radius)


def check_scores(x, name="scores"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise StatsError(f"{name} must be 1-D, got shape {x.shape}")
    if x.size == 0:
        raise EmptyInputError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise StatsError(f"{name} contains non-finite values")
    return x


def check_labels(y, name="labels"):
    y = np.asarray(y)
    if y.ndim != 1:
        raise StatsError(f"{name} must be 1-D, got shape {y.shape}")
    if y.size == 0:
        raise EmptyInputError(f"{name} is empty")
    if not np.all((y == 0) | (y == 1)):
        raise StatsError(f"{name} must contain only 0/1")
    return y.astype(np.int64)


def check_consistent_length(*arrays):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise LengthMismatchError(f"inconsistent lengths: {sorted(lengths)}")


def check_both_classes(y):
    n_pos = int(np.sum(y))
    if n_pos == 0 or n_pos == len(y):
        raise DegenerateLabelsError("need at least one positive and one negative label")
    return n_pos, len(y) - n_pos


def check_probabilities(p, name="probs"):
    p = check_scores(p, name)
    if np.any((p < 0) | (p > 1)):
        raise StatsError(f"{name} must lie in [0, 1]")
    return p
