import math
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from safewrap.classifiers import KNearest
from safewrap.data import (DataError, Dataset, SplitSpec, Standardizer, fit_standardizer, load_csv,
                           make_blobs, split, split_indices, write_csv)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_csv_maps_labels_by_first_appearance(tmp_path):
    p = _write(tmp_path, "a,b,label\n1,2,x\n3,4,y\n5,6,x\n")
    d = load_csv(p)
    assert (d.n_samples, d.n_features, d.class_count) == (3, 2, 2)
    assert d.labels.tolist() == [0, 1, 0]
    assert d.label_names == ("x", "y")
    assert d.feature_names == ("a", "b")


def test_label_column_can_sit_anywhere(tmp_path):
    p = _write(tmp_path, "cls,a,b\nu,1,2\nv,3,4\n")
    d = load_csv(p, label_column="cls")
    assert d.features.tolist() == [[1, 2], [3, 4]]


def test_single_class_rejected(tmp_path):
    p = _write(tmp_path, "a,label\n1,x\n2,x\n")
    with pytest.raises(DataError, match="class_count < 2"):
        load_csv(p)


def test_nan_cell_names_row(tmp_path):
    p = _write(tmp_path, "a,label\n1,x\nNaN,y\n")
    with pytest.raises(DataError, match="row 1"):
        load_csv(p)


def test_non_numeric_cell(tmp_path):
    p = _write(tmp_path, "a,label\n1,x\nabc,y\n")
    with pytest.raises(DataError, match="row 1"):
        load_csv(p)


def test_missing_file_and_column(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "absent.csv")
    p = _write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(DataError, match="label"):
        load_csv(p)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 4)),
              elements=st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False)))
def test_csv_round_trip_is_bit_exact(X):
    y = np.array([i % 2 for i in range(X.shape[0])])
    d = Dataset(X, y, 2)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "rt.csv")
        write_csv(d, path)
        back = load_csv(path, label_order=d.label_names)
    assert back.features.tobytes() == d.features.tobytes()
    assert np.array_equal(back.labels, d.labels)


def test_standardizer_examples():
    s = Standardizer().fit(np.array([[1.0, 0.0], [1.0, 2.0]]))
    assert s.mean_.tolist() == [1.0, 1.0]
    assert s.scale_[0] == 1.0
    assert s.scale_[1] == pytest.approx(math.sqrt(2.0), abs=1e-15)
    assert np.all(s.transform(s.mean_.reshape(1, -1)) == 0.0)


def test_standardizer_needs_two_rows():
    with pytest.raises(ValueError):
        Standardizer().fit(np.ones((1, 3)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(3, 40), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardized_training_data_is_centered(X):
    s = Standardizer().fit(X)
    Z = s.transform(X)
    assert np.all(np.abs(Z.mean(axis=0)) < 1e-9)
    varying = ~s.constant_
    sd = Z.std(axis=0, ddof=1)
    assert np.all(np.abs(sd[varying] - 1.0) < 1e-9)
    np.testing.assert_allclose(s.inverse_transform(Z)[:, varying], X[:, varying], rtol=1e-9, atol=1e-9)


def test_fit_standardizer_on_dataset():
    d = make_blobs(20, 3, 2, 1.0, seed=0)
    s = fit_standardizer(d)
    np.testing.assert_allclose(s.mean_, d.features.mean(axis=0))


def test_split_sizes_and_determinism():
    y = np.arange(10) % 2
    a = split_indices(y, SplitSpec(0.5, seed=4, stratified=False))
    b = split_indices(y, SplitSpec(0.5, seed=4, stratified=False))
    assert len(a[0]) == 5 and len(a[1]) == 5
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_stratified_split_enumerated():
    y = np.array([0] * 8 + [1] * 2)
    _, test = split_indices(y, SplitSpec(0.5, seed=0))
    assert np.bincount(y[test]).tolist() == [4, 1]


def test_split_rejects_empty_partition():
    with pytest.raises(DataError):
        split_indices(np.array([0, 1]), SplitSpec(0.1, seed=0))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=4, max_size=80), st.floats(0.2, 0.8),
       st.integers(0, 2 ** 32 - 1), st.booleans())
def test_split_partitions_rows(labels, frac, seed, strat):
    y = np.array(labels)
    try:
        train, test = split_indices(y, SplitSpec(frac, seed, strat))
    except DataError:
        return
    assert len(train) + len(test) == len(y)
    assert len(np.union1d(train, test)) == len(y)


def test_dataset_is_immutable():
    d = make_blobs(10, 2, 2, 1.0, seed=0)
    with pytest.raises(ValueError):
        d.features[0, 0] = 1.0


def test_make_blobs_deterministic_and_balanced():
    a, b = make_blobs(90, 3, 3, 2.0, seed=7), make_blobs(90, 3, 3, 2.0, seed=7)
    assert a.features.tobytes() == b.features.tobytes()
    assert np.bincount(a.labels).tolist() == [30, 30, 30]


def test_well_separated_blobs_are_easy():
    train, test = split(make_blobs(400, 3, 3, 100.0, seed=1), SplitSpec(0.5, seed=1))
    knn = KNearest(k=5).fit(train.features, train.labels)
    assert (knn.predict(test.features) == test.labels).mean() > 0.99


def test_coincident_blobs_are_chance():
    train, test = split(make_blobs(4000, 2, 2, 0.0, seed=1), SplitSpec(0.5, seed=1))
    knn = KNearest(k=15).fit(train.features, train.labels)
    assert abs((knn.predict(test.features) == test.labels).mean() - 0.5) < 0.05
