"""Fully connected autoencoder with an ``f, f/2, f/4, f/2, f`` layer schedule."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .persistence import register
from .validation import check_features

FULL_BATCH_LIMIT = 1024
MINI_BATCH = 256


class DivergenceError(RuntimeError):
    pass


def layer_schedule(f):
    if f < 1:
        raise ValueError("autoencoder needs at least one feature")
    half, quarter = max(1, f // 2), max(1, f // 4)
    return [f, half, quarter, half, f]


def init_params(sizes, rng):
    """Glorot-uniform weights, zero biases."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append((rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return params


def forward(params, X):
    """Return the list of layer activations, input first; ReLU hidden, identity output."""
    acts = [X]
    for i, (W, b) in enumerate(params):
        Z = acts[-1] @ W + b
        acts.append(Z if i == len(params) - 1 else np.maximum(Z, 0.0))
    return acts


def loss_and_grads(params, X):
    """Mean squared reconstruction error over all entries, and its gradients."""
    acts = forward(params, X)
    diff = acts[-1] - X
    loss = float(np.mean(diff ** 2))
    delta = 2.0 * diff / diff.size
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i:
            delta = (delta @ W.T) * (acts[i] > 0)
    return loss, grads


@register
class Autoencoder(BaseEstimator):
    """MLP autoencoder trained by SGD with momentum on standardized rows.

    Batches are the full dataset up to 1024 rows, otherwise seeded
    mini-batches of 256. ``loss_history_`` holds the training MSE per epoch.
    """

    def __init__(self, epochs=200, learning_rate=0.01, momentum=0.9, random_state=0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        X = check_features(X)
        n, f = X.shape
        sizes = layer_schedule(f)
        rng = np.random.default_rng(self.random_state)
        params = init_params(sizes, rng)
        velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        history = []
        # overflow surfaces as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(self.epochs):
                if n <= FULL_BATCH_LIMIT:
                    batches = [np.arange(n)]
                else:
                    perm = rng.permutation(n)
                    batches = [perm[i:i + MINI_BATCH] for i in range(0, n, MINI_BATCH)]
                for rows in batches:
                    _, grads = loss_and_grads(params, X[rows])
                    for i, ((W, b), (gW, gb), (vW, vb)) in enumerate(zip(params, grads, velocity)):
                        vW = self.momentum * vW - self.learning_rate * gW
                        vb = self.momentum * vb - self.learning_rate * gb
                        velocity[i] = (vW, vb)
                        params[i] = (W + vW, b + vb)
                loss = float(np.mean((forward(params, X)[-1] - X) ** 2))
                if not np.isfinite(loss):
                    raise DivergenceError(f"autoencoder training diverged at epoch {epoch}")
                history.append(loss)
        self.layer_sizes_ = sizes
        self.weights_ = [W for W, _ in params]
        self.biases_ = [b for _, b in params]
        self.loss_history_ = history
        self.n_features_in_ = f
        return self

    @property
    def params(self):
        return list(zip(self.weights_, self.biases_))

    def reconstruct(self, X):
        check_is_fitted(self, "weights_")
        X = check_features(X, self.n_features_in_)
        return forward(self.params, X)[-1]

    def reconstruction_error(self, X):
        """Per-row mean squared error between ``X`` and its reconstruction."""
        X = check_features(X, getattr(self, "n_features_in_", None))
        return np.mean((self.reconstruct(X) - X) ** 2, axis=1)


def train_autoencoder(X, epochs=200, learning_rate=0.01, seed=0):
    return Autoencoder(epochs=epochs, learning_rate=learning_rate, random_state=seed).fit(X)
