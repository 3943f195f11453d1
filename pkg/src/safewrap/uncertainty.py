"""Uncertainty measures scored per data point, and the ensemble that stacks them.

Every measure follows the same small protocol::

    measure.fit(X, y, classifier)        # offline set-up, possibly a no-op
    measure.score(X, proba, predicted)   # -> (n,) float array

``proba`` is the wrapped classifier's probability matrix for ``X`` and
``predicted`` its row-wise argmax. Measures that need no offline set-up
accept ``X=None`` at fit time.
"""

import time

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator, clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .autoencoder import Autoencoder
from .classifiers import (BernoulliNB, ComplementNB, DecisionTree, GaussianNB, LinearDiscriminant,
                          LogisticRegression, MultinomialNB, RandomForest, nearest_rows)
from .data import STD_FLOOR, Standardizer
from .persistence import register
from .validation import argmax_lowest, check_features, check_labels, check_proba

REFERENCE_LAYOUT = ("UM1", "UM2", "UM3", "UM4", "UM5", "UM6_ST", "UM6_NB", "UM6_TR", "UM7", "UM8", "UM9")
CONSTANT_TOL = 1e-9


class MeasureError(RuntimeError):
    """A measure failed to fit; the message is prefixed with the measure name."""


def normalized_entropy(P):
    """Shannon entropy of each probability row divided by ``log(c)``; ``0 log 0 = 0``."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim == 1:
        P = P.reshape(1, -1)
    c = P.shape[1]
    if c < 2:
        raise ValueError("entropy needs at least 2 classes")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, -P * np.log(P), 0.0)
    return np.clip(terms.sum(axis=1) / np.log(c), 0.0, 1.0)


def predict_classes(classifier, X):
    """Black-box prediction: argmax of ``predict_proba`` with lowest-index ties."""
    return argmax_lowest(classifier.predict_proba(X))


def _with_class_count(estimator, n_classes):
    est = clone(estimator)
    if "n_classes" in est.get_params(deep=False):
        est.set_params(n_classes=n_classes)
    return est


def _class_count(y, classifier, n_classes):
    if n_classes is not None:
        return n_classes
    for attr in ("n_classes_", "classes_"):
        if hasattr(classifier, attr):
            v = getattr(classifier, attr)
            return int(v) if np.isscalar(v) else len(v)
    return int(np.max(y)) + 1


class Measure(BaseEstimator):
    kind = ""
    needs_setup = True

    def fit(self, X, y=None, classifier=None, n_classes=None):
        return self

    def score(self, X, proba, predicted):
        raise NotImplementedError


@register
class ConfidenceInterval(Measure):
    """Fraction of features falling strictly outside their training interval.

    ``method='normal'`` uses ``mean +/- z_w * std`` with ``z_w`` the two-sided
    normal quantile for ``confidence``; ``'quantile'`` uses empirical
    ``(1 - w)/2`` and ``(1 + w)/2`` quantiles. Constant features count as
    inside only when within 1e-9 of their mean.
    """

    kind = "UM1"

    def __init__(self, confidence=0.9, method="normal"):
        self.confidence = confidence
        self.method = method

    def fit(self, X, y=None, classifier=None, n_classes=None):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must lie in (0, 1), got {self.confidence}")
        X = check_features(X)
        if X.shape[0] < 2:
            raise ValueError("confidence intervals need at least 2 training rows")
        mean = X.mean(axis=0)
        std = X.std(axis=0, ddof=1)
        self.constant_ = std < STD_FLOOR
        if self.method == "normal":
            z = norm.ppf(0.5 + self.confidence / 2.0)
            self.lower_, self.upper_ = mean - z * std, mean + z * std
        elif self.method == "quantile":
            tail = (1.0 - self.confidence) / 2.0
            self.lower_, self.upper_ = np.quantile(X, [tail, 1.0 - tail], axis=0)
        else:
            raise ValueError(f"unknown interval method {self.method!r}")
        self.center_ = mean
        self.n_features_in_ = X.shape[1]
        return self

    def score(self, X, proba=None, predicted=None):
        check_is_fitted(self, "lower_")
        X = check_features(X, self.n_features_in_)
        outside = (X < self.lower_) | (X > self.upper_)
        const_out = np.abs(X - self.center_) > CONSTANT_TOL
        outside = np.where(self.constant_, const_out, outside)
        return outside.mean(axis=1)


@register
class MaxProbability(Measure):
    """Largest class probability of the wrapped classifier."""

    kind = "UM2"
    needs_setup = False

    def score(self, X, proba, predicted=None):
        return check_proba(proba).max(axis=1)


@register
class Entropy(Measure):
    """Normalized Shannon entropy of the wrapped classifier's probabilities."""

    kind = "UM3"
    needs_setup = False

    def score(self, X, proba, predicted=None):
        return normalized_entropy(check_proba(proba))


@register
class BayesianUncertainty(Measure):
    """Gaussian naive Bayes posterior reduced to a scalar.

    ``'max'`` reports the largest posterior; ``'entropy'`` its normalized entropy.
    """

    kind = "UM4"

    def __init__(self, reduction="max"):
        self.reduction = reduction

    def fit(self, X, y=None, classifier=None, n_classes=None):
        X = check_features(X)
        y = check_labels(y, X.shape[0])
        c = _class_count(y, classifier, n_classes)
        self.model_ = GaussianNB(n_classes=c).fit(X, y)
        return self

    def score(self, X, proba=None, predicted=None):
        check_is_fitted(self, "model_")
        posterior = self.model_.predict_proba(X)
        if self.reduction == "max":
            return posterior.max(axis=1)
        if self.reduction == "entropy":
            return normalized_entropy(posterior)
        raise ValueError(f"unknown reduction {self.reduction!r}")


def agreement_score(checker_proba, predicted):
    """Signed checker confidence: +/-(1 - entropy), positive when the checker agrees."""
    sign = np.where(argmax_lowest(checker_proba) == predicted, 1.0, -1.0)
    return sign * (1.0 - normalized_entropy(checker_proba))


@register
class CombinedUncertainty(Measure):
    """Agreement of one checker classifier with the wrapped prediction, in [-1, 1]."""

    kind = "UM5"

    def __init__(self, checker=None):
        self.checker = checker

    def fit(self, X, y=None, classifier=None, n_classes=None):
        X = check_features(X)
        y = check_labels(y, X.shape[0])
        c = _class_count(y, classifier, n_classes)
        checker = self.checker if self.checker is not None else RandomForest()
        self.checker_ = _with_class_count(checker, c).fit(X, y)
        return self

    def score(self, X, proba, predicted):
        check_is_fitted(self, "checker_")
        return agreement_score(self.checker_.predict_proba(X), np.asarray(predicted))


@register
class MultiCombinedUncertainty(Measure):
    """Mean of the single-checker agreement score over a set of checkers."""

    kind = "UM6"

    def __init__(self, checkers=None):
        self.checkers = checkers

    def fit(self, X, y=None, classifier=None, n_classes=None):
        if not self.checkers:
            raise ValueError("at least one checker classifier is required")
        X = check_features(X)
        y = check_labels(y, X.shape[0])
        c = _class_count(y, classifier, n_classes)
        self.checkers_ = [_with_class_count(chk, c).fit(X, y) for chk in self.checkers]
        return self

    def score(self, X, proba, predicted):
        check_is_fitted(self, "checkers_")
        predicted = np.asarray(predicted)
        total = np.zeros(predicted.shape[0])
        for chk in self.checkers_:
            total = total + agreement_score(chk.predict_proba(X), predicted)
        return total / len(self.checkers_)


@register
class FeatureBagging(Measure):
    """Largest vote share among classifiers trained on random feature/row subsets.

    Each of ``n_bags`` copies of ``base`` sees ``max(1, round(feature_fraction * f))``
    random features and a bootstrap sample of ``n`` rows.
    """

    kind = "UM7"

    def __init__(self, base=None, n_bags=10, feature_fraction=0.5, random_state=0):
        self.base = base
        self.n_bags = n_bags
        self.feature_fraction = feature_fraction
        self.random_state = random_state

    def fit(self, X, y=None, classifier=None, n_classes=None):
        if self.n_bags < 1:
            raise ValueError("n_bags must be >= 1")
        X = check_features(X)
        y = check_labels(y, X.shape[0])
        n, f = X.shape
        c = _class_count(y, classifier, n_classes)
        base = self.base if self.base is not None else DecisionTree()
        rng = np.random.default_rng(self.random_state)
        width = min(f, max(1, int(round(self.feature_fraction * f))))
        subsets, baggers = [], []
        for _ in range(self.n_bags):
            cols = np.sort(rng.choice(f, size=width, replace=False))
            rows = rng.integers(0, n, size=n)
            bagger = _with_class_count(base, c)
            if "random_state" in bagger.get_params(deep=False):
                bagger.set_params(random_state=int(rng.integers(2 ** 32)))
            baggers.append(bagger.fit(X[np.ix_(rows, cols)], y[rows]))
            subsets.append(cols)
        self.feature_subsets_ = subsets
        self.baggers_ = baggers
        self.n_classes_ = c
        self.n_features_in_ = f
        return self

    def votes(self, X):
        check_is_fitted(self, "baggers_")
        X = check_features(X, self.n_features_in_)
        V = np.zeros((X.shape[0], self.n_classes_))
        rows = np.arange(X.shape[0])
        for cols, bagger in zip(self.feature_subsets_, self.baggers_):
            V[rows, bagger.predict(X[:, cols])] += 1.0
        return V

    def score(self, X, proba=None, predicted=None):
        return self.votes(X).max(axis=1) / len(self.baggers_)


@register
class NeighborAgreement(Measure):
    """Share of the k nearest training rows that the wrapped classifier labels like ``dp``.

    Distances are Euclidean on standardized features; ties go to the lowest
    training row. ``k`` is clamped to the reference size (``k_`` records it).
    The wrapped classifier's predictions on the reference rows are computed
    once at fit time.
    """

    kind = "UM8"

    def __init__(self, k=19):
        self.k = k

    def fit(self, X, y=None, classifier=None, n_classes=None):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if classifier is None:
            raise ValueError("neighbor agreement needs the wrapped classifier")
        X = check_features(X)
        self.scaler_ = Standardizer().fit(X)
        self.reference_ = self.scaler_.transform(X)
        self.reference_predictions_ = predict_classes(classifier, X)
        self.k_ = min(self.k, X.shape[0])
        return self

    def neighbors(self, X):
        check_is_fitted(self, "reference_")
        return nearest_rows(self.reference_, self.scaler_.transform(X), self.k_)

    def score(self, X, proba, predicted):
        idx = self.neighbors(X)
        return (self.reference_predictions_[idx] == np.asarray(predicted)[:, None]).mean(axis=1)


@register
class ReconstructionLoss(Measure):
    """Autoencoder reconstruction MSE of the standardized row."""

    kind = "UM9"

    def __init__(self, autoencoder=None):
        self.autoencoder = autoencoder

    def fit(self, X, y=None, classifier=None, n_classes=None):
        X = check_features(X)
        self.scaler_ = Standardizer().fit(X)
        ae = self.autoencoder if self.autoencoder is not None else Autoencoder()
        self.autoencoder_ = clone(ae).fit(self.scaler_.transform(X))
        return self

    def score(self, X, proba=None, predicted=None):
        check_is_fitted(self, "autoencoder_")
        return self.autoencoder_.reconstruction_error(self.scaler_.transform(X))


def _derived_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), index]).generate_state(1)[0])


def reference_measures(random_state=0, n_trees=100, autoencoder_epochs=200):
    """The eleven-measure reference configuration, in output column order.

    Gradient-boosted checkers are replaced by the built-in
    random forest: UM5 uses one, and UM6_TR uses a tree plus a forest.
    """
    s = [_derived_seed(random_state, i) for i in range(6)]
    return [
        ("UM1", ConfidenceInterval(confidence=0.9)),
        ("UM2", MaxProbability()),
        ("UM3", Entropy()),
        ("UM4", BayesianUncertainty()),
        ("UM5", CombinedUncertainty(RandomForest(n_estimators=n_trees, random_state=s[0]))),
        ("UM6_ST", MultiCombinedUncertainty([GaussianNB(), LinearDiscriminant(), LogisticRegression()])),
        ("UM6_NB", MultiCombinedUncertainty([GaussianNB(), BernoulliNB(), MultinomialNB(), ComplementNB()])),
        ("UM6_TR", MultiCombinedUncertainty([DecisionTree(random_state=s[1]),
                                             RandomForest(n_estimators=n_trees, random_state=s[2])])),
        ("UM7", FeatureBagging(DecisionTree(), n_bags=10, feature_fraction=0.5, random_state=s[3])),
        ("UM8", NeighborAgreement(k=19)),
        ("UM9", ReconstructionLoss(Autoencoder(epochs=autoencoder_epochs, random_state=s[4]))),
    ]


@register
class UncertaintyEnsemble(BaseEstimator):
    """Fits a list of named measures and stacks their scores column-wise.

    ``transform`` queries the bound classifier's ``predict_proba`` once per
    batch and shares the result with every measure. A measure that raises or
    yields a non-finite value at scoring time contributes 0.0 for the
    affected rows and a fault record instead of aborting the batch.
    """

    def __init__(self, measures=None, random_state=0):
        self.measures = measures
        self.random_state = random_state

    def fit(self, X, y, classifier, n_classes=None):
        measures = self.measures if self.measures is not None else reference_measures(self.random_state)
        names = [name for name, _ in measures]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate measure names in {names}")
        fitted, fit_seconds = [], {}
        c = _class_count(y, classifier, n_classes)
        for name, measure in measures:
            start = time.perf_counter()
            try:
                fitted.append((name, clone(measure).fit(X, y, classifier=classifier, n_classes=c)))
            except Exception as exc:
                raise MeasureError(f"{name}: {exc}") from exc
            fit_seconds[name] = time.perf_counter() - start
        self.measures_ = fitted
        self.layout_ = tuple(names)
        self.classifier_ = classifier
        self.n_classes_ = c
        self.fit_seconds_ = fit_seconds
        return self

    def _check(self):
        check_is_fitted(self, "measures_")

    def score_with_faults(self, X, proba, timings=None):
        """Score rows given the wrapped classifier's probabilities.

        Returns ``(matrix, faults)``; each fault is a dict with ``measure``,
        ``rows`` (None for the whole column) and ``error``.
        """
        self._check()
        P = check_proba(proba)
        predicted = argmax_lowest(P)
        M = np.zeros((P.shape[0], len(self.measures_)))
        faults = []
        for j, (name, measure) in enumerate(self.measures_):
            start = time.perf_counter()
            try:
                col = np.asarray(measure.score(X, P, predicted), dtype=np.float64).reshape(-1)
                if col.shape[0] != P.shape[0]:
                    raise ValueError(f"returned {col.shape[0]} scores for {P.shape[0]} rows")
            except NotFittedError:
                raise
            except Exception as exc:  # scoring must stay total
                faults.append({"measure": name, "rows": None, "error": f"{type(exc).__name__}: {exc}"})
                continue
            bad = ~np.isfinite(col)
            if bad.any():
                faults.append({"measure": name, "rows": np.flatnonzero(bad).tolist(),
                               "error": "non-finite score"})
                col = np.where(bad, 0.0, col)
            M[:, j] = col
            if timings is not None:
                timings[name] = timings.get(name, 0.0) + time.perf_counter() - start
        return M, faults

    def transform_with_faults(self, X, timings=None):
        self._check()
        n_features = getattr(self.classifier_, "n_features_in_", None)
        X = check_features(X, n_features)
        return self.score_with_faults(X, self.classifier_.predict_proba(X), timings)

    def transform(self, X):
        return self.transform_with_faults(X)[0]


def fit_measure(name, measure, train_X, train_y, classifier, n_classes=None):
    try:
        return clone(measure).fit(train_X, train_y, classifier=classifier, n_classes=n_classes)
    except Exception as exc:
        raise MeasureError(f"{name}: {exc}") from exc


def compute_vector(ensemble, dp):
    """Measure vector for a single feature row."""
    return ensemble.transform(np.asarray(dp, dtype=np.float64).reshape(1, -1))[0]
