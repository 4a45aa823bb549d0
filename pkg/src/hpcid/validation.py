"""Input validation helpers for the estimator-facing API."""

import numpy as np

from .errors import SchemaMismatchError


def as_float_matrix(X, name="X"):
    """Coerce to a 2-D float64 array, rejecting NaN/inf."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def as_label_vector(y, n_rows=None, name="y"):
    """Coerce to a 1-D int64 label array, optionally checking length."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.floor(y)):
            raise ValueError(f"{name} must hold integer class labels")
    y = y.astype(np.int64)
    if n_rows is not None and len(y) != n_rows:
        raise ValueError(f"{name} has {len(y)} entries for {n_rows} rows")
    return y


def check_n_features(X, expected, context="input"):
    """Raise SchemaMismatchError unless X has the expected column count."""
    if X.shape[1] != expected:
        raise SchemaMismatchError(
            f"{context} has {X.shape[1]} features, expected {expected}"
        )
    return X


def check_fitted(estimator, attribute):
    """Raise if the estimator has not been fitted yet."""
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )
