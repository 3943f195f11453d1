import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..validation import argmax_lowest, check_features, check_labels


class ClassifierError(ValueError):
    pass


class BaseClassifier(ClassifierMixin, BaseEstimator):
    """Shared fit/predict plumbing for the reference classifiers.

    Labels are dense class indices. ``n_classes`` fixes the class count when
    a training subset may miss some classes; otherwise it is ``max(y) + 1``.
    Subclasses implement ``_fit`` and ``_proba``.
    """

    requires_all_classes = False

    def fit(self, X, y, sample_weight=None):
        X = check_features(X)
        y = check_labels(y, X.shape[0], self.n_classes)
        c = self.n_classes if self.n_classes is not None else int(y.max()) + 1
        if c < 2:
            raise ClassifierError("class_count < 2")
        if self.requires_all_classes:
            missing = np.setdiff1d(np.arange(c), y)
            if missing.size:
                raise ClassifierError(f"{type(self).__name__}: class {int(missing[0])} absent from training data")
        if sample_weight is None:
            sample_weight = np.ones(X.shape[0])
        sample_weight = np.asarray(sample_weight, dtype=np.float64)
        self.n_classes_ = c
        self.classes_ = np.arange(c)
        self.n_features_in_ = X.shape[1]
        self._fit(X, y, sample_weight)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "n_classes_")
        X = check_features(X, self.n_features_in_)
        return self._proba(X)

    def predict(self, X):
        return argmax_lowest(self.predict_proba(X))


def softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def class_weights(y, n_classes, mode):
    """Per-sample weights; ``'balanced'`` weighs class k by n / (c_present * n_k)."""
    if mode is None:
        return np.ones(y.shape[0])
    if mode != "balanced":
        raise ClassifierError(f"unknown class_weight {mode!r}")
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    present = np.count_nonzero(counts)
    w = np.zeros(n_classes)
    w[counts > 0] = y.shape[0] / (present * counts[counts > 0])
    return w[y]

