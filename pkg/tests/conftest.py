import numpy as np
import pytest

from safewrap.classifiers import GaussianNB, LogisticRegression
from safewrap.data import SplitSpec, make_blobs, split
from safewrap.uncertainty import UncertaintyEnsemble, reference_measures

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def blobs():
    """Overlapping 2-class blobs split in half."""
    data = make_blobs(600, 4, 2, 2.0, seed=11)
    return split(data, SplitSpec(0.5, seed=11))


@pytest.fixture(scope="session")
def blobs3():
    data = make_blobs(450, 4, 3, 2.5, seed=5)
    return split(data, SplitSpec(0.5, seed=5))


@pytest.fixture(scope="session")
def fitted(blobs):
    """A wrapped classifier and a reference ensemble with light checkers."""
    train, test = blobs
    clf = LogisticRegression().fit(train.features, train.labels)
    ens = UncertaintyEnsemble(reference_measures(3, n_trees=15, autoencoder_epochs=60), random_state=3)
    ens.fit(train.features, train.labels, clf)
    return clf, ens, train, test


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def gnb_1d():
    """Classes with sample mean 0 / 4 and population variance 1 each."""
    X = np.array([[-1.0], [1.0], [3.0], [5.0]])
    y = np.array([0, 0, 1, 1])
    return GaussianNB().fit(X, y)
