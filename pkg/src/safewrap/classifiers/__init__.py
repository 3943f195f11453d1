"""Reference classifiers behind a minimal black-box contract.

Anything exposing ``predict_proba(X) -> (n, c)`` can be wrapped; these
implementations also serve as checkers, baggers and the adjudicator forest.
"""

from .base import BaseClassifier, ClassifierError
from .linear import LinearDiscriminant, LogisticRegression
from .naive_bayes import BernoulliNB, ComplementNB, GaussianNB, MultinomialNB
from .neighbors import KNearest, nearest_rows
from .tree import DecisionTree, RandomForest, feature_importances

CLASSIFIERS = {
    "gaussian_nb": GaussianNB,
    "bernoulli_nb": BernoulliNB,
    "multinomial_nb": MultinomialNB,
    "complement_nb": ComplementNB,
    "lda": LinearDiscriminant,
    "lr": LogisticRegression,
    "dt": DecisionTree,
    "rf": RandomForest,
    "knn": KNearest,
}


def make_classifier(kind, **params):
    """Build an unfitted reference classifier from its short name."""
    try:
        cls = CLASSIFIERS[kind]
    except KeyError:
        raise ClassifierError(f"unknown classifier {kind!r}; choose from {sorted(CLASSIFIERS)}") from None
    return cls(**params)


__all__ = [
    "CLASSIFIERS", "BaseClassifier", "BernoulliNB", "ClassifierError", "ComplementNB",
    "DecisionTree", "GaussianNB", "KNearest", "LinearDiscriminant", "LogisticRegression",
    "MultinomialNB", "RandomForest", "feature_importances", "make_classifier", "nearest_rows",
]
