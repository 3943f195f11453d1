"""Input checks shared by every estimator in the package."""

import numpy as np
from sklearn.utils.validation import check_array

PROBA_TOL = 1e-9


def check_features(X, n_features=None, *, allow_empty=False):
    """Return ``X`` as a finite float64 2-D array, optionally checking its width.

    A single 1-D row is promoted to shape ``(1, f)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if allow_empty and X.ndim == 2 and X.shape[0] == 0:
        if n_features is not None and X.shape[1] != n_features:
            raise ValueError(f"dimension mismatch: expected {n_features} features, got {X.shape[1]}")
        return X
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"dimension mismatch: expected {n_features} features, got {X.shape[1]}")
    return X


def check_labels(y, n_samples, n_classes=None):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(f"expected {n_samples} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integer class indices")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError("labels must be non-negative class indices")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise ValueError(f"label {int(y.max())} out of range for {n_classes} classes")
    return y


def check_proba(proba):
    """Validate a (n, c) matrix of probability rows."""
    P = np.asarray(proba, dtype=np.float64)
    if P.ndim == 1:
        P = P.reshape(1, -1)
    if P.ndim != 2 or P.shape[1] < 1:
        raise ValueError(f"probabilities must be a (n, c) matrix, got shape {P.shape}")
    if not np.isfinite(P).all() or (P < -PROBA_TOL).any() or (P > 1 + PROBA_TOL).any():
        raise ValueError("probabilities must be finite and within [0, 1]")
    if (np.abs(P.sum(axis=1) - 1.0) > PROBA_TOL).any():
        raise ValueError("probability rows must sum to 1")
    return P


def argmax_lowest(P):
    """Row-wise argmax; ``np.argmax`` already returns the lowest index on ties."""
    return np.argmax(P, axis=1)
