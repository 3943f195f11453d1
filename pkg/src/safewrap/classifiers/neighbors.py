import numpy as np

from ..data import Standardizer
from ..persistence import register
from .base import BaseClassifier

CHUNK_ELEMENTS = 1 << 22


def nearest_rows(reference, queries, k):
    """Indices of the ``k`` nearest reference rows per query (Euclidean).

    Distances are exact squared differences; equal distances resolve to the
    lowest reference index.
    """
    n, f = reference.shape
    k = min(k, n)
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    step = max(1, CHUNK_ELEMENTS // max(1, n * f))
    for start in range(0, queries.shape[0], step):
        Q = queries[start:start + step]
        d = ((reference[None, :, :] - Q[:, None, :]) ** 2).sum(axis=2)
        out[start:start + step] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


@register
class KNearest(BaseClassifier):
    """k-nearest-neighbors on standardized features; proba = neighbor class frequencies."""

    def __init__(self, k=5, n_classes=None):
        self.k = k
        self.n_classes = n_classes

    def _fit(self, X, y, w):
        if X.shape[0] >= 2:
            self.scaler_ = Standardizer().fit(X)
            self.reference_ = self.scaler_.transform(X)
        else:
            self.scaler_ = None
            self.reference_ = X.copy()
        self.reference_labels_ = y.copy()

    def _proba(self, X):
        Q = self.scaler_.transform(X) if self.scaler_ is not None else X
        idx = nearest_rows(self.reference_, Q, self.k)
        labels = self.reference_labels_[idx]
        P = np.zeros((X.shape[0], self.n_classes_))
        for k in range(self.n_classes_):
            P[:, k] = (labels == k).mean(axis=1)
        return P
