"""The safety wrapper: pass the wrapped prediction through unchanged, or omit it."""

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from .adjudicator import BaseAdjudicator, ForestAdjudicator, LayoutError, build_training_set
from .data import SplitSpec, split_indices
from .persistence import FORMAT_VERSION, estimator_from_dict, estimator_to_dict, register
from .uncertainty import UncertaintyEnsemble, reference_measures
from .validation import argmax_lowest, check_features, check_labels

OMITTED = -1


@dataclass(frozen=True)
class Predicted:
    label: int
    proba: np.ndarray
    measures: np.ndarray


@dataclass(frozen=True)
class Omitted:
    measures: np.ndarray
    omission_probability: float


@dataclass(frozen=True)
class WrapperMetrics:
    """Outcome probabilities of a wrapped classifier over a labeled test set.

    Built from integer counts so the row/column sums of the outcome table
    hold by construction: ``alpha`` and ``epsilon`` judge the raw classifier
    on every row, the ``_w`` variants only rows that were passed.
    """

    n: int
    n_correct: int
    n_omitted_correct: int
    n_omitted_misc: int

    @classmethod
    def from_outcomes(cls, correct, omitted):
        correct = np.asarray(correct, dtype=bool)
        omitted = np.asarray(omitted, dtype=bool)
        if correct.shape != omitted.shape or correct.ndim != 1:
            raise ValueError("correct and omitted must be 1-D masks of equal length")
        if correct.size == 0:
            raise ValueError("cannot evaluate on an empty test set")
        return cls(int(correct.size), int(correct.sum()), int((omitted & correct).sum()),
                   int((omitted & ~correct).sum()))

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")
        if not (0 <= self.n_omitted_correct <= self.n_correct <= self.n
                and 0 <= self.n_omitted_misc <= self.n - self.n_correct):
            raise ValueError(f"inconsistent counts {self}")

    @property
    def n_misc(self):
        return self.n - self.n_correct

    @property
    def n_omitted(self):
        return self.n_omitted_correct + self.n_omitted_misc

    @property
    def n_correct_passed(self):
        return self.n_correct - self.n_omitted_correct

    @property
    def n_misc_passed(self):
        return self.n_misc - self.n_omitted_misc

    alpha = property(lambda self: self.n_correct / self.n)
    epsilon = property(lambda self: self.n_misc / self.n)
    phi = property(lambda self: self.n_omitted / self.n)
    phi_c = property(lambda self: self.n_omitted_correct / self.n)
    phi_m = property(lambda self: self.n_omitted_misc / self.n)
    alpha_w = property(lambda self: self.n_correct_passed / self.n)
    epsilon_w = property(lambda self: self.n_misc_passed / self.n)

    def as_dict(self):
        return {
            "alpha": self.alpha, "epsilon": self.epsilon, "alpha_w": self.alpha_w,
            "epsilon_w": self.epsilon_w, "phi": self.phi, "phi_c": self.phi_c, "phi_m": self.phi_m,
            "n": self.n, "n_omitted": self.n_omitted, "n_correct_passed": self.n_correct_passed,
            "n_misc_passed": self.n_misc_passed,
        }


def omission_quality(metrics: WrapperMetrics):
    """Share of omissions that hit misclassifications, or None when nothing was omitted."""
    if metrics.n_omitted == 0:
        return None
    return metrics.n_omitted_misc / metrics.n_omitted


@register
class SafetyWrapper(ClassifierMixin, BaseEstimator):
    """Wraps an already trained classifier with measures and a binary adjudicator.

    ``fit`` never retrains ``classifier``. When ``adjudicator`` is unfitted,
    ``fit`` holds out ``holdout_fraction`` of the rows to build its training
    examples and fits the measures on the rest; a pre-trained adjudicator is
    used as-is and the measures see every row.

    ``predict`` returns the wrapped class, or ``OMITTED`` (-1) for omissions.
    """

    def __init__(self, classifier=None, measures=None, adjudicator=None, holdout_fraction=0.3,
                 random_state=0):
        self.classifier = classifier
        self.measures = measures
        self.adjudicator = adjudicator
        self.holdout_fraction = holdout_fraction
        self.random_state = random_state

    def fit(self, X, y):
        if self.classifier is None:
            raise ValueError("a trained classifier is required")
        X = check_features(X)
        y = check_labels(y, X.shape[0])
        clf = self.classifier
        adjudicator = self.adjudicator if self.adjudicator is not None else ForestAdjudicator(
            random_state=self.random_state)
        pretrained = hasattr(adjudicator, "layout_")
        ensemble = UncertaintyEnsemble(self.measures, random_state=self.random_state)
        c = len(clf.predict_proba(X[:1])[0])
        if pretrained:
            layout = tuple(name for name, _ in (self.measures or reference_measures(self.random_state)))
            if adjudicator.layout_ is not None and tuple(adjudicator.layout_) != layout:
                raise LayoutError(f"adjudicator layout {adjudicator.layout_} does not match "
                                  f"measures {layout}")
            self.ensemble_ = ensemble.fit(X, y, clf, n_classes=c)
            self.adjudicator_ = adjudicator
        else:
            fit_rows, adj_rows = split_indices(
                y, SplitSpec(self.holdout_fraction, self.random_state, stratified=True))
            self.ensemble_ = ensemble.fit(X[fit_rows], y[fit_rows], clf, n_classes=c)
            M, flags = build_training_set(clf, self.ensemble_, X[adj_rows], y[adj_rows])
            self.adjudicator_ = clone(adjudicator).fit(M, flags, layout=self.ensemble_.layout_)
        self.n_features_in_ = X.shape[1]
        self.n_classes_ = c
        self.classes_ = np.arange(c)
        return self

    @property
    def layout(self):
        return self.ensemble_.layout_

    def _run(self, X, misc_flags=None):
        check_is_fitted(self, "ensemble_")
        X = check_features(X, self.n_features_in_)
        proba = self.classifier.predict_proba(X)
        M, faults = self.ensemble_.score_with_faults(X, proba)
        if self.adjudicator_.uses_labels:
            estimate = self.adjudicator_.omission_probability(M, misc_flags)
        else:
            estimate = self.adjudicator_.omission_probability(M)
        omit = estimate >= self.adjudicator_.threshold
        return proba, M, estimate, omit, faults

    def predict_or_omit(self, X):
        """One ``Predicted`` or ``Omitted`` outcome per row."""
        proba, M, estimate, omit, _ = self._run(X)
        labels = argmax_lowest(proba)
        return [Omitted(M[i], float(estimate[i])) if omit[i] else Predicted(int(labels[i]), proba[i], M[i])
                for i in range(len(labels))]

    def omission_mask(self, X):
        return self._run(X)[3]

    def predict(self, X):
        proba, _, _, omit, _ = self._run(X)
        return np.where(omit, OMITTED, argmax_lowest(proba))

    def predict_proba(self, X):
        """The wrapped classifier's probabilities, untouched."""
        check_is_fitted(self, "ensemble_")
        return self.classifier.predict_proba(check_features(X, self.n_features_in_))

    def trace(self, X, y=None):
        """Per-row measures, estimates and verdicts (flags revealed when ``y`` is given)."""
        flags = None
        if y is not None:
            flags = argmax_lowest(self.predict_proba(X)) != np.asarray(y)
        proba, M, estimate, omit, faults = self._run(X, flags)
        return {"proba": proba, "measures": M, "estimate": estimate, "omit": omit,
                "predicted": argmax_lowest(proba), "faults": faults}

    def evaluate(self, X, y):
        X = check_features(X, self.n_features_in_)
        y = check_labels(y, X.shape[0])
        t = self.trace(X, y)
        return WrapperMetrics.from_outcomes(t["predicted"] == y, t["omit"])

    def score(self, X, y, sample_weight=None):
        """Accuracy of the passed outputs over all rows (``alpha_w``)."""
        return self.evaluate(X, y).alpha_w


def build_wrapper(X, y, classifier, measures=None, adjudicator=None, holdout_fraction=0.3, seed=0):
    return SafetyWrapper(classifier, measures, adjudicator, holdout_fraction, seed).fit(X, y)


def evaluate(wrapper, X, y) -> WrapperMetrics:
    return wrapper.evaluate(X, y)


def save_wrapper(wrapper, path, metadata=None) -> None:
    """Persist classifier, fitted measures and adjudicator as one JSON document."""
    check_is_fitted(wrapper, "ensemble_")
    doc = {"format_version": FORMAT_VERSION, "bundle": "wrapper",
           "measure_layout": list(wrapper.layout), "wrapper": estimator_to_dict(wrapper),
           "metadata": metadata or {}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_wrapper(path, expected_layout=None) -> SafetyWrapper:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION or doc.get("bundle") != "wrapper":
        raise LayoutError(f"{path}: not a wrapper bundle of format version {FORMAT_VERSION}")
    if expected_layout is not None and tuple(doc["measure_layout"]) != tuple(expected_layout):
        raise LayoutError(f"bundle layout {doc['measure_layout']} does not match {list(expected_layout)}")
    return estimator_from_dict(doc["wrapper"])
