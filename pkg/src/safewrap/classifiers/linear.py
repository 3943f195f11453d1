import numpy as np
from scipy.special import logsumexp

from ..persistence import register
from .base import BaseClassifier, softmax

RIDGE = 1e-6


@register
class LinearDiscriminant(BaseClassifier):
    """LDA with pooled within-class covariance (divisor n - c) plus a diagonal ridge."""

    requires_all_classes = True

    def __init__(self, ridge=RIDGE, n_classes=None):
        self.ridge = ridge
        self.n_classes = n_classes

    def _fit(self, X, y, w):
        c, f = self.n_classes_, X.shape[1]
        totals = np.bincount(y, weights=w, minlength=c)
        self.priors_ = totals / totals.sum()
        self.means_ = np.stack([np.average(X[y == k], axis=0, weights=w[y == k]) for k in range(c)])
        centered = X - self.means_[y]
        dof = max(totals.sum() - c, 1.0)
        cov = (centered * w[:, None]).T @ centered / dof + self.ridge * np.eye(f)
        prec_means = np.linalg.solve(cov, self.means_.T).T
        self.coef_ = prec_means
        self.intercept_ = -0.5 * np.einsum("kf,kf->k", self.means_, prec_means) + np.log(self.priors_)

    def _proba(self, X):
        Z = X @ self.coef_.T + self.intercept_
        return np.exp(Z - logsumexp(Z, axis=1, keepdims=True))


@register
class LogisticRegression(BaseClassifier):
    """Multinomial logistic regression trained by full-batch gradient descent.

    Features are z-scored internally with the training mean/std so a fixed
    learning rate behaves the same on any feature scale. Weights start at zero,
    which makes training deterministic.
    """

    requires_all_classes = True

    def __init__(self, epochs=500, learning_rate=0.1, n_classes=None, random_state=None):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.n_classes = n_classes
        self.random_state = random_state

    def _fit(self, X, y, w):
        n, f = X.shape
        c = self.n_classes_
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std < 1e-12, 1.0, std)
        Z = (X - self.mean_) / self.scale_
        Y = np.zeros((n, c))
        Y[np.arange(n), y] = 1.0
        sw = w / w.sum()
        W = np.zeros((f, c))
        b = np.zeros(c)
        for _ in range(self.epochs):
            G = (softmax(Z @ W + b) - Y) * sw[:, None]
            W -= self.learning_rate * (Z.T @ G)
            b -= self.learning_rate * G.sum(axis=0)
        self.coef_ = W
        self.intercept_ = b

    def _proba(self, X):
        return softmax(((X - self.mean_) / self.scale_) @ self.coef_ + self.intercept_)
