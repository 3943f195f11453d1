"""Meta-level adjudicators mapping measure vectors to pass/omit verdicts."""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .classifiers import RandomForest
from .persistence import FORMAT_VERSION, estimator_from_dict, estimator_to_dict, register
from .validation import check_features

PASS, OMIT = "pass", "omit"


class LayoutError(ValueError):
    """Measure layout of a vector or bundle does not match the expected one."""


class DegenerateTrainingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BinaryConfidenceScore:
    verdict: str
    omission_probability: float

    @property
    def omitted(self) -> bool:
        return self.verdict == OMIT


@dataclass(frozen=True)
class AdjudicationExample:
    measures: np.ndarray
    misc_flag: bool


class BaseAdjudicator(BaseEstimator):
    """Common verdict logic: omit iff the estimate reaches ``threshold``."""

    uses_labels = False

    def _check_layout(self, M):
        M = check_features(M, allow_empty=True)
        layout = getattr(self, "layout_", None)
        if layout is not None and M.shape[1] != len(layout):
            raise LayoutError(f"measure vector has {M.shape[1]} entries, adjudicator expects "
                              f"{len(layout)} ({', '.join(layout)})")
        return M

    def omission_probability(self, M):
        raise NotImplementedError

    def predict(self, M):
        """Boolean omit mask."""
        return self.omission_probability(M) >= self.threshold

    def adjudicate(self, v) -> BinaryConfidenceScore:
        p = float(self.omission_probability(np.asarray(v, dtype=np.float64).reshape(1, -1))[0])
        return BinaryConfidenceScore(OMIT if p >= self.threshold else PASS, p)


@register
class ForestAdjudicator(BaseAdjudicator):
    """Random forest over measure vectors predicting the misclassification flag.

    With ``class_weight='balanced'`` rare misclassifications weigh as much as
    the correct majority. Training data with a single flag value yields a
    constant adjudicator and a warning.
    """

    def __init__(self, n_estimators=30, threshold=0.5, class_weight="balanced", max_depth=None,
                 min_samples_leaf=10, random_state=0):
        self.n_estimators = n_estimators
        self.threshold = threshold
        self.class_weight = class_weight
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state

    def fit(self, M, flags, layout=None):
        M = check_features(M)
        flags = np.asarray(flags, dtype=bool).ravel()
        if flags.shape[0] != M.shape[0]:
            raise ValueError(f"{M.shape[0]} measure rows but {flags.shape[0]} flags")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        self.layout_ = tuple(layout) if layout is not None else tuple(f"m{j}" for j in range(M.shape[1]))
        if len(self.layout_) != M.shape[1]:
            raise LayoutError(f"layout names {len(self.layout_)} columns, data has {M.shape[1]}")
        self.n_examples_ = int(M.shape[0])
        self.flag_rate_ = float(flags.mean())
        if flags.all() or not flags.any():
            warnings.warn("adjudicator training data holds a single flag value; "
                          "returning a constant adjudicator", DegenerateTrainingWarning, stacklevel=2)
            self.constant_ = bool(flags[0])
            self.forest_ = None
            return self
        self.constant_ = None
        self.forest_ = RandomForest(n_estimators=self.n_estimators, class_weight=self.class_weight,
                                    max_depth=self.max_depth, min_samples_leaf=self.min_samples_leaf,
                                    n_classes=2, random_state=self.random_state)
        self.forest_.fit(M, flags.astype(np.int64))
        return self

    def omission_probability(self, M):
        check_is_fitted(self, "layout_")
        M = self._check_layout(M)
        if self.forest_ is None:
            return np.full(M.shape[0], 1.0 if self.constant_ else 0.0)
        return self.forest_.predict_proba(M)[:, 1]

    @property
    def feature_importances_(self):
        check_is_fitted(self, "layout_")
        if self.forest_ is None:
            return np.full(len(self.layout_), 1.0 / len(self.layout_))
        return self.forest_.feature_importances_


_OPS = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}


@register
class ThresholdAdjudicator(BaseAdjudicator):
    """Per-measure cutoff rules combined by ``'any'`` (disjunction) or ``'all'``.

    ``rules`` is a list of ``(measure_name, op, cutoff)``; a firing rule votes
    for omission. The estimate is 1.0 when the combination fires, else 0.0.
    """

    def __init__(self, rules=(), combine="any", threshold=0.5):
        self.rules = rules
        self.combine = combine
        self.threshold = threshold

    def fit(self, M=None, flags=None, layout=None):
        if layout is None:
            raise LayoutError("a threshold adjudicator needs the measure layout")
        self.layout_ = tuple(layout)
        for name, op, _ in self.rules:
            if name not in self.layout_:
                raise LayoutError(f"rule refers to unknown measure {name!r}")
            if op not in _OPS:
                raise ValueError(f"unknown comparison {op!r}")
        if self.combine not in ("any", "all"):
            raise ValueError(f"combine must be 'any' or 'all', got {self.combine!r}")
        return self

    def omission_probability(self, M):
        check_is_fitted(self, "layout_")
        M = self._check_layout(M)
        if not self.rules:
            return np.zeros(M.shape[0])
        fired = np.stack([_OPS[op](M[:, self.layout_.index(name)], cut) for name, op, cut in self.rules])
        hit = fired.any(axis=0) if self.combine == "any" else fired.all(axis=0)
        return hit.astype(np.float64)


@register
class ConstantAdjudicator(BaseAdjudicator):
    """Always passes (``omit=False``) or always omits."""

    def __init__(self, omit=False, threshold=0.5):
        self.omit = omit
        self.threshold = threshold

    def fit(self, M=None, flags=None, layout=None):
        self.layout_ = tuple(layout) if layout is not None else None
        return self

    def omission_probability(self, M):
        M = self._check_layout(M)
        return np.full(M.shape[0], 1.0 if self.omit else 0.0)


@register
class OracleAdjudicator(BaseAdjudicator):
    """Test-only adjudicator that omits exactly the rows whose flag it is shown.

    It bounds what any real adjudicator can achieve; callers must pass the
    true misclassification flags.
    """

    uses_labels = True

    def __init__(self, threshold=0.5):
        self.threshold = threshold

    def fit(self, M=None, flags=None, layout=None):
        self.layout_ = tuple(layout) if layout is not None else None
        return self

    def omission_probability(self, M, misc_flags=None):
        if misc_flags is None:
            raise ValueError("the oracle adjudicator needs the true misclassification flags")
        M = self._check_layout(M)
        flags = np.asarray(misc_flags, dtype=bool).ravel()
        if flags.shape[0] != M.shape[0]:
            raise ValueError("one flag per measure row is required")
        return flags.astype(np.float64)

    def predict(self, M, misc_flags=None):
        return self.omission_probability(M, misc_flags) >= self.threshold


def build_training_set(classifier, ensemble, X, y):
    """Measure matrix and misclassification flags for labeled rows.

    Returns ``(M, flags)``; ``flags[i]`` is True when the classifier's
    prediction for row ``i`` differs from ``y[i]``.
    """
    X = check_features(X)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("no rows to build adjudication examples from")
    proba = classifier.predict_proba(X)
    M, _ = ensemble.score_with_faults(X, proba)
    flags = np.argmax(proba, axis=1) != y
    return M, flags


def as_examples(M, flags):
    return [AdjudicationExample(m, bool(f)) for m, f in zip(np.asarray(M), np.asarray(flags))]


def train_adjudicator(M, flags, layout, **params):
    return ForestAdjudicator(**params).fit(M, flags, layout=layout)


# -- importance -----------------------------------------------------------------

TIMING_CLASSES = ((1e-6, "N"), (2e-5, "L"), (2e-4, "M"))


def timing_class(seconds_per_point):
    """Qualitative cost: N(egligible), L(ow), M(edium), H(igh) per scored point."""
    if seconds_per_point is None:
        return "?"
    for limit, label in TIMING_CLASSES:
        if seconds_per_point < limit:
            return label
    return "H"


@dataclass
class ImportanceReport:
    layout: tuple
    importances: np.ndarray
    seconds_per_point: dict = field(default_factory=dict)

    def ranked(self):
        """Rows ``(measure, importance, timing_class)`` by decreasing importance."""
        order = sorted(range(len(self.layout)), key=lambda j: (-self.importances[j], j))
        return [(self.layout[j], float(self.importances[j]),
                 timing_class(self.seconds_per_point.get(self.layout[j]))) for j in order]


def importance_report(adjudicator, seconds_per_point=None) -> ImportanceReport:
    if not isinstance(adjudicator, ForestAdjudicator):
        raise TypeError(f"{type(adjudicator).__name__} has no feature importances")
    return ImportanceReport(adjudicator.layout_, np.asarray(adjudicator.feature_importances_),
                            dict(seconds_per_point or {}))


# -- bundles --------------------------------------------------------------------

def adjudicator_bundle(adjudicator, metadata=None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "bundle": "adjudicator",
        "measure_layout": list(getattr(adjudicator, "layout_", None) or []),
        "threshold": adjudicator.threshold,
        "adjudicator": estimator_to_dict(adjudicator),
        "metadata": metadata or {},
    }


def save_adjudicator(adjudicator, path, metadata=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(adjudicator_bundle(adjudicator, metadata), fh, sort_keys=True)


def read_bundle(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION or doc.get("bundle") != "adjudicator":
        raise LayoutError(f"{path}: not an adjudicator bundle of format version {FORMAT_VERSION}")
    return doc


def load_adjudicator(path, expected_layout=None):
    """Load a bundle, refusing it when its layout differs from ``expected_layout``."""
    doc = read_bundle(path)
    layout = tuple(doc["measure_layout"])
    if expected_layout is not None and layout and layout != tuple(expected_layout):
        raise LayoutError(f"bundle layout {layout} does not match expected {tuple(expected_layout)}")
    adjudicator = estimator_from_dict(doc["adjudicator"])
    adjudicator.metadata_ = doc.get("metadata", {})
    return adjudicator
