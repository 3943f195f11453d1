import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safewrap.adjudicator import (OMIT, PASS, ConstantAdjudicator, DegenerateTrainingWarning,
                                  ForestAdjudicator, LayoutError, OracleAdjudicator,
                                  ThresholdAdjudicator, as_examples, build_training_set,
                                  importance_report, load_adjudicator, read_bundle,
                                  save_adjudicator, timing_class, train_adjudicator)
from safewrap.classifiers import BaseClassifier
from safewrap.uncertainty import REFERENCE_LAYOUT, MaxProbability, UncertaintyEnsemble

UM3 = REFERENCE_LAYOUT.index("UM3")


class Fixed(BaseClassifier):
    def __init__(self, label=0, n_classes=None):
        self.label = label
        self.n_classes = n_classes

    def _fit(self, X, y, w):
        pass

    def _proba(self, X):
        P = np.zeros((X.shape[0], self.n_classes_))
        P[:, self.label] = 1.0
        return P


class Perfect(BaseClassifier):
    """Reads the label off the first feature."""

    def __init__(self, n_classes=None):
        self.n_classes = n_classes

    def _fit(self, X, y, w):
        pass

    def _proba(self, X):
        return np.eye(self.n_classes_)[X[:, 0].astype(int)]


def meta_problem(seed, n=2000, margin=0.05):
    """Random measure vectors whose flag is ``UM3 > 0.5``, with a gap around the cut."""
    rng = np.random.default_rng(seed)
    M = rng.uniform(0, 1, size=(n, len(REFERENCE_LAYOUT)))
    u = M[:, UM3]
    M[:, UM3] = np.where(u > 0.5, 0.5 + margin + u * (0.5 - margin), u * (0.5 - margin))
    return M, M[:, UM3] > 0.5


def test_build_training_set_flags():
    y = np.arange(200) % 2
    X = np.column_stack([y.astype(float), np.random.default_rng(0).normal(size=200)])
    ens = UncertaintyEnsemble([("UM2", MaxProbability())])
    perfect = Perfect().fit(X, y)
    M, flags = build_training_set(perfect, ens.fit(X, y, perfect), X, y)
    assert M.shape == (200, 1) and not flags.any()
    const = Fixed(0).fit(X, y)
    M, flags = build_training_set(const, ens.fit(X, y, const), X, y)
    assert flags.mean() == 0.5
    assert len(as_examples(M, flags)) == 200
    with pytest.raises(ValueError):
        build_training_set(const, ens, X[:0], y[:0])


def test_separable_meta_problem_fits_exactly():
    M, flags = meta_problem(0)
    adj = train_adjudicator(M, flags, REFERENCE_LAYOUT, random_state=0)
    assert np.array_equal(adj.predict(M), flags)


@pytest.mark.parametrize("seed", range(3))
def test_held_out_accuracy_on_single_measure_problem(seed):
    M, flags = meta_problem(seed)
    Mt, ft = meta_problem(seed + 100)
    adj = ForestAdjudicator(random_state=seed).fit(M, flags, REFERENCE_LAYOUT)
    assert (adj.predict(Mt) == ft).mean() > 0.95


@pytest.mark.parametrize("seed", range(3))
def test_importance_concentrates_on_deciding_measure(seed):
    M, flags = meta_problem(seed)
    adj = ForestAdjudicator(random_state=seed).fit(M, flags, REFERENCE_LAYOUT)
    report = importance_report(adj, {})
    assert report.importances.sum() == pytest.approx(1.0, abs=1e-9)
    assert report.ranked()[0][0] == "UM3"
    assert report.importances[UM3] > 0.9


def test_ranked_is_sorted_with_timing_classes():
    M, flags = meta_problem(1)
    adj = ForestAdjudicator(random_state=0).fit(M, flags, REFERENCE_LAYOUT)
    ranked = importance_report(adj, {"UM3": 1e-7, "UM8": 1e-3}).ranked()
    values = [v for _, v, _ in ranked]
    assert values == sorted(values, reverse=True)
    classes = {name: t for name, _, t in ranked}
    assert classes["UM3"] == "N" and classes["UM8"] == "H" and classes["UM1"] == "?"


@pytest.mark.parametrize("seconds, label", [(5e-7, "N"), (1e-5, "L"), (1e-4, "M"), (1e-3, "H")])
def test_timing_class(seconds, label):
    assert timing_class(seconds) == label


def test_rule_adjudicators_have_no_importances():
    adj = ThresholdAdjudicator([("UM3", ">", 0.5)]).fit(layout=REFERENCE_LAYOUT)
    with pytest.raises(TypeError):
        importance_report(adj)


def test_single_flag_value_gives_constant_adjudicator():
    M = np.random.default_rng(0).uniform(size=(50, 11))
    with pytest.warns(DegenerateTrainingWarning):
        adj = ForestAdjudicator().fit(M, np.zeros(50, dtype=bool), REFERENCE_LAYOUT)
    assert not adj.predict(M).any()
    with pytest.warns(DegenerateTrainingWarning):
        adj = ForestAdjudicator().fit(M, np.ones(50, dtype=bool), REFERENCE_LAYOUT)
    assert adj.predict(M).all()


def test_empty_examples_rejected():
    with pytest.raises(ValueError):
        ForestAdjudicator().fit(np.empty((0, 11)), np.empty(0, dtype=bool), REFERENCE_LAYOUT)


def test_fixed_seed_gives_identical_bytes(tmp_path):
    M, flags = meta_problem(4, n=500)
    for name in ("a", "b"):
        save_adjudicator(ForestAdjudicator(random_state=9).fit(M, flags, REFERENCE_LAYOUT),
                         tmp_path / f"{name}.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class _Stub(ConstantAdjudicator):
    def __init__(self, value=0.5, threshold=0.5):
        self.value = value
        self.threshold = threshold

    def omission_probability(self, M):
        return np.full(np.atleast_2d(M).shape[0], self.value)


@pytest.mark.parametrize("value, verdict", [(0.9, OMIT), (0.5, OMIT), (0.1, PASS)])
def test_threshold_rule(value, verdict):
    score = _Stub(value).adjudicate(np.zeros(11))
    assert score.verdict == verdict and score.omission_probability == value
    assert score.omitted == (verdict == OMIT)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.98), st.floats(0.0, 0.5))
def test_raising_threshold_never_adds_omissions(low, step):
    M, flags = meta_problem(2, n=300, margin=0.0)
    adj = ForestAdjudicator(threshold=low, random_state=0).fit(M, flags, REFERENCE_LAYOUT)
    probe = np.random.default_rng(0).uniform(size=(200, 11))
    before = adj.predict(probe)
    adj.threshold = min(low + step, 0.99)
    assert not np.any(adj.predict(probe) & ~before)


def test_layout_mismatch_on_adjudicate():
    M, flags = meta_problem(0, n=200)
    adj = ForestAdjudicator().fit(M, flags, REFERENCE_LAYOUT)
    with pytest.raises(LayoutError):
        adj.adjudicate(np.zeros(10))


def test_bundle_round_trip(tmp_path):
    M, flags = meta_problem(3, n=800, margin=0.0)
    adj = ForestAdjudicator(random_state=1).fit(M, flags, REFERENCE_LAYOUT)
    path = tmp_path / "adj.json"
    save_adjudicator(adj, path, {"flag_rate": adj.flag_rate_})
    back = load_adjudicator(path, expected_layout=REFERENCE_LAYOUT)
    probe = np.random.default_rng(5).uniform(-0.5, 1.5, size=(1000, 11))
    assert back.omission_probability(probe).tobytes() == adj.omission_probability(probe).tobytes()
    doc = read_bundle(path)
    assert doc["measure_layout"] == list(REFERENCE_LAYOUT)
    assert doc["metadata"]["flag_rate"] == flags.mean()
    assert back.metadata_["flag_rate"] == flags.mean()


def test_bundle_layout_guard(tmp_path):
    M, flags = meta_problem(3, n=200)
    adj = ForestAdjudicator().fit(M[:, :10], flags, REFERENCE_LAYOUT[:10])
    save_adjudicator(adj, tmp_path / "ten.json")
    with pytest.raises(LayoutError):
        load_adjudicator(tmp_path / "ten.json", expected_layout=REFERENCE_LAYOUT)


def test_bundle_version_guard(tmp_path):
    M, flags = meta_problem(3, n=200)
    save_adjudicator(ForestAdjudicator().fit(M, flags, REFERENCE_LAYOUT), tmp_path / "a.json")
    doc = json.loads((tmp_path / "a.json").read_text())
    doc["format_version"] = 99
    (tmp_path / "a.json").write_text(json.dumps(doc))
    with pytest.raises(LayoutError, match="version"):
        load_adjudicator(tmp_path / "a.json")


def test_threshold_adjudicator_rules():
    M = np.zeros((3, 11))
    M[:, UM3] = [0.2, 0.6, 0.9]
    M[:, 1] = [0.1, 0.1, 0.9]
    any_rule = ThresholdAdjudicator([("UM3", ">", 0.5), ("UM2", ">", 0.5)]).fit(layout=REFERENCE_LAYOUT)
    all_rule = ThresholdAdjudicator([("UM3", ">", 0.5), ("UM2", ">", 0.5)], combine="all").fit(
        layout=REFERENCE_LAYOUT)
    assert any_rule.predict(M).tolist() == [False, True, True]
    assert all_rule.predict(M).tolist() == [False, False, True]
    with pytest.raises(LayoutError):
        ThresholdAdjudicator([("UM42", ">", 0)]).fit(layout=REFERENCE_LAYOUT)


def test_oracle_needs_flags():
    adj = OracleAdjudicator().fit(layout=REFERENCE_LAYOUT)
    with pytest.raises(ValueError):
        adj.omission_probability(np.zeros((2, 11)))
    assert adj.predict(np.zeros((2, 11)), np.array([True, False])).tolist() == [True, False]


def test_adjudicator_only_sees_measures(fitted):
    clf, ens, train, test = fitted
    M, flags = build_training_set(clf, ens, train.features, train.labels)
    adj = ForestAdjudicator(random_state=0).fit(M, flags, ens.layout_)
    assert not hasattr(adj, "classifier") and not hasattr(adj, "classifier_")
    Mt = ens.transform(test.features)
    assert adj.predict(Mt).shape == (test.n_samples,)


def test_forest_adjudicator_is_deterministic(fitted):
    clf, ens, train, _ = fitted
    M, flags = build_training_set(clf, ens, train.features, train.labels)
    a = ForestAdjudicator(random_state=3).fit(M, flags, ens.layout_)
    b = ForestAdjudicator(random_state=3).fit(M, flags, ens.layout_)
    assert a.omission_probability(M).tobytes() == b.omission_probability(M).tobytes()
