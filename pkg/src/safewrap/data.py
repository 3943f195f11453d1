"""Tabular datasets: CSV ingestion, standardization, splitting and synthetic blobs."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .persistence import register
from .validation import check_features

STD_FLOOR = 1e-12


class DataError(ValueError):
    """Raised for malformed or degenerate dataset input."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus dense integer labels in ``[0, class_count)``.

    ``label_names[i]`` is the original CSV label mapped to index ``i``.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    feature_names: tuple[str, ...] = ()
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64).ravel()
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D matrix, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if self.class_count < 2:
            raise DataError(f"class_count < 2 (got {self.class_count})")
        if y.min() < 0 or y.max() >= self.class_count:
            raise DataError(f"labels must lie in [0, {self.class_count})")
        bad = np.flatnonzero(~np.isfinite(X).all(axis=1))
        if bad.size:
            raise DataError(f"non-finite feature value in row {int(bad[0])}")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} feature names for {X.shape[1]} features")
        label_names = tuple(self.label_names) or tuple(str(k) for k in range(self.class_count))
        if len(label_names) != self.class_count:
            raise DataError(f"{len(label_names)} label names for {self.class_count} classes")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "label_names", label_names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.class_count,
                       self.feature_names, self.label_names)


def load_csv(path, label_column: str = "label", label_order: Sequence[str] | None = None) -> Dataset:
    """Read a headered CSV; every non-label column becomes a float feature.

    Labels are mapped to ``0..c-1`` in order of first appearance unless
    ``label_order`` fixes the mapping explicitly.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"dataset not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row expected") from None
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]
        mapping: dict[str, int] = {}
        if label_order is not None:
            mapping = {str(name): i for i, name in enumerate(label_order)}
        rows, raw_labels = [], []
        for row_no, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}")
            values = []
            for i, cell in enumerate(row):
                if i == label_idx:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: non-numeric value {cell!r} in row {row_no}, "
                                    f"column {header[i]!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: non-finite value {cell!r} in row {row_no}, "
                                    f"column {header[i]!r}")
                values.append(v)
            label = row[label_idx]
            if label not in mapping:
                if label_order is not None:
                    raise DataError(f"{path}: label {label!r} in row {row_no} not in label_order")
                mapping[label] = len(mapping)
            rows.append(values)
            raw_labels.append(mapping[label])
    if not rows:
        raise DataError(f"{path}: no data rows")
    if len(mapping) < 2:
        raise DataError(f"{path}: class_count < 2")
    label_names = sorted(mapping, key=mapping.get)
    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
    return Dataset(features, np.array(raw_labels), len(mapping), tuple(feature_names),
                   tuple(label_names))


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def write_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Write ``dataset`` so that :func:`load_csv` reads it back bit-exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*dataset.feature_names, label_column])
        for x, y in zip(dataset.features, dataset.labels):
            writer.writerow([*(format_float(v) for v in x), dataset.label_names[y]])


@register
class Standardizer(TransformerMixin, BaseEstimator):
    """Per-feature z-scoring with sample std (ddof=1); constant features keep std=1."""

    def fit(self, X, y=None):
        X = check_features(X)
        if X.shape[0] < 2:
            raise DataError("standardizer needs at least 2 rows")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0, ddof=1)
        self.constant_ = std < STD_FLOOR
        self.scale_ = np.where(self.constant_, 1.0, std)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_features(X, self.n_features_in_)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_features(X, self.n_features_in_)
        return X * self.scale_ + self.mean_

    def to_dict(self) -> dict:
        return {"mean": self.mean_.tolist(), "scale": self.scale_.tolist(),
                "constant": self.constant_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        s = cls()
        s.mean_ = np.array(d["mean"], dtype=np.float64)
        s.scale_ = np.array(d["scale"], dtype=np.float64)
        s.constant_ = np.array(d["constant"], dtype=bool)
        s.n_features_in_ = s.mean_.shape[0]
        return s


def fit_standardizer(train: Dataset) -> Standardizer:
    return Standardizer().fit(train.features)


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.5
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise DataError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_indices(labels, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return sorted (train_rows, test_rows) index arrays."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        test = []
        for k in np.unique(labels):
            rows = np.flatnonzero(labels == k)
            n_test = _round_half_up(rows.size * spec.test_fraction)
            test.append(rng.permutation(rows)[:n_test])
        test = np.concatenate(test)
    else:
        test = rng.permutation(n)[:_round_half_up(n * spec.test_fraction)]
    mask = np.zeros(n, dtype=bool)
    mask[test] = True
    train, test = np.flatnonzero(~mask), np.flatnonzero(mask)
    if train.size == 0 or test.size == 0:
        raise DataError(f"test_fraction {spec.test_fraction} leaves an empty partition for n={n}")
    return train, test


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train, test = split_indices(dataset.labels, spec)
    return dataset.subset(train), dataset.subset(test)


def make_blobs(n: int, f: int, c: int, separation: float, seed: int) -> Dataset:
    """Unit-variance Gaussian clusters with balanced, interleaved labels.

    Class 0 sits at the origin; class ``k >= 1`` sits ``separation`` along
    coordinate axis ``(k - 1) mod f`` (stacking further out when ``c - 1 > f``).
    """
    if c < 2:
        raise DataError("class_count < 2")
    if n < c or f < 1:
        raise DataError(f"need n >= c and f >= 1 (n={n}, f={f}, c={c})")
    rng = np.random.default_rng(seed)
    centers = np.zeros((c, f))
    for k in range(1, c):
        axis, ring = (k - 1) % f, (k - 1) // f + 1
        centers[k, axis] = separation * ring
    labels = np.arange(n) % c
    features = centers[labels] + rng.standard_normal((n, f))
    return Dataset(features, labels, c)


__all__ = [
    "DataError", "Dataset", "SplitSpec", "Standardizer", "fit_standardizer", "format_float",
    "load_csv", "make_blobs", "split", "split_indices", "write_csv",
]

