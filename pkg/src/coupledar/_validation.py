"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np

from .exceptions import DimensionMismatchError, InvalidPanelError


def check_counts(a, name="counts", ndim=None):
    """Return ``a`` as an int64 array after checking it holds nonnegative integers."""
    arr = np.asarray(a)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatchError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.issubdtype(arr.dtype, np.number):
            raise InvalidPanelError(f"{name} must be numeric")
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise InvalidPanelError(f"{name} must contain integers")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise InvalidPanelError(f"{name} must be nonnegative")
    return arr


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_xy(X, y):
    """Validate estimator-style inputs.

    ``X`` has shape ``(n_steps, n_groups)`` (one row per time step, as in
    scikit-learn) and ``y`` has shape ``(n_steps,)``. Returns the group
    matrix transposed to ``(n_groups, n_steps)`` together with ``y``.
    """
    X = check_counts(X, "X", ndim=2)
    y = check_counts(y, "y", ndim=1)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatchError(
            f"X has {X.shape[0]} time steps but y has {y.shape[0]}"
        )
    return np.ascontiguousarray(X.T), y
