"""Naive Bayes variants for arbitrary real-valued tabular features.

Discrete variants need non-negative or binary inputs, so BernoulliNB
binarizes at the per-feature training median and Multinomial/Complement
shift every feature by its training minimum.
"""

import numpy as np
from scipy.special import logsumexp

from ..persistence import register
from .base import BaseClassifier, ClassifierError, softmax

VAR_FLOOR = 1e-9


def _class_priors(y, w, c):
    totals = np.bincount(y, weights=w, minlength=c)
    return totals, np.log(totals / totals.sum())


def _posterior(jll):
    return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))


@register
class GaussianNB(BaseClassifier):
    """Gaussian likelihood per feature and class; variances floored at ``var_floor``."""

    requires_all_classes = True

    def __init__(self, var_floor=VAR_FLOOR, n_classes=None):
        self.var_floor = var_floor
        self.n_classes = n_classes

    def _fit(self, X, y, w):
        c = self.n_classes_
        totals, self.class_log_prior_ = _class_priors(y, w, c)
        onehot = np.zeros((X.shape[0], c))
        onehot[np.arange(X.shape[0]), y] = w
        self.theta_ = onehot.T @ X / totals[:, None]
        self.var_ = np.maximum(onehot.T @ X ** 2 / totals[:, None] - self.theta_ ** 2,
                               self.var_floor)

    def joint_log_likelihood(self, X):
        jll = np.empty((X.shape[0], self.n_classes_))
        for k in range(self.n_classes_):
            ll = -0.5 * (np.log(2.0 * np.pi * self.var_[k]) + (X - self.theta_[k]) ** 2 / self.var_[k])
            jll[:, k] = self.class_log_prior_[k] + ll.sum(axis=1)
        return jll

    def _proba(self, X):
        return _posterior(self.joint_log_likelihood(X))


@register
class BernoulliNB(BaseClassifier):
    """Bernoulli NB over features binarized as ``x > training median``."""

    requires_all_classes = True

    def __init__(self, alpha=1.0, n_classes=None):
        self.alpha = alpha
        self.n_classes = n_classes

    def _fit(self, X, y, w):
        c = self.n_classes_
        self.median_ = np.median(X, axis=0)
        B = (X > self.median_).astype(np.float64)
        totals, self.class_log_prior_ = _class_priors(y, w, c)
        onehot = np.zeros((X.shape[0], c))
        onehot[np.arange(X.shape[0]), y] = w
        p = (onehot.T @ B + self.alpha) / (totals[:, None] + 2.0 * self.alpha)
        self.feature_log_prob_ = np.log(p)
        self.feature_log_neg_prob_ = np.log1p(-p)

    def _proba(self, X):
        B = (X > self.median_).astype(np.float64)
        jll = (B @ self.feature_log_prob_.T + (1.0 - B) @ self.feature_log_neg_prob_.T
               + self.class_log_prior_)
        return _posterior(jll)


class _ShiftedCountNB(BaseClassifier):
    requires_all_classes = True

    def __init__(self, alpha=1.0, n_classes=None):
        self.alpha = alpha
        self.n_classes = n_classes

    def _shifted(self, X):
        # Values below the training minimum would be negative counts; clip them to zero.
        return np.maximum(X - self.shift_, 0.0)

    def _counts(self, X, y, w):
        self.shift_ = X.min(axis=0)
        Xs = X - self.shift_
        if (Xs < 0).any():
            raise ClassifierError(f"{type(self).__name__}: negative features after shift")
        onehot = np.zeros((X.shape[0], self.n_classes_))
        onehot[np.arange(X.shape[0]), y] = w
        return onehot.T @ Xs


@register
class MultinomialNB(_ShiftedCountNB):
    """Multinomial NB on min-shifted features with Laplace smoothing."""

    def _fit(self, X, y, w):
        counts = self._counts(X, y, w)
        _, self.class_log_prior_ = _class_priors(y, w, self.n_classes_)
        smoothed = counts + self.alpha
        self.feature_log_prob_ = np.log(smoothed / smoothed.sum(axis=1, keepdims=True))

    def _proba(self, X):
        return _posterior(self._shifted(X) @ self.feature_log_prob_.T + self.class_log_prior_)


@register
class ComplementNB(_ShiftedCountNB):
    """Complement NB: weights come from feature counts of all *other* classes."""

    def _fit(self, X, y, w):
        counts = self._counts(X, y, w)
        _, self.class_log_prior_ = _class_priors(y, w, self.n_classes_)
        comp = counts.sum(axis=0) + self.alpha - counts
        self.feature_log_prob_ = -np.log(comp / comp.sum(axis=1, keepdims=True))

    def _proba(self, X):
        return softmax(self._shifted(X) @ self.feature_log_prob_.T)
