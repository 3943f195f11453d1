"""CART decision trees (Gini impurity) and bagged random forests."""

import math

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ..persistence import register
from ..validation import check_features
from .base import BaseClassifier, ClassifierError, class_weights

MIN_DECREASE = 1e-12


def _n_split_features(max_features, f):
    if max_features is None:
        return f
    if max_features == "sqrt":
        return max(1, int(math.sqrt(f)))
    if max_features == "log2":
        return max(1, int(math.log2(f)))
    if isinstance(max_features, float):
        return min(f, max(1, int(max_features * f)))
    return min(f, max(1, int(max_features)))


def _best_split(Xn, Wy, min_leaf):
    """Best Gini split over the columns of ``Xn``.

    ``Wy`` holds per-row weighted one-hot labels. Returns ``(column, threshold,
    score)`` where a larger score means lower weighted child impurity, or None.
    Ties resolve to the lowest column, then the lowest threshold.
    """
    m = Xn.shape[0]
    order = np.argsort(Xn, axis=0, kind="stable")
    Xs = np.take_along_axis(Xn, order, axis=0)
    left = np.cumsum(Wy[order], axis=0)[:-1]            # (m-1, k, c)
    total = Wy.sum(axis=0)
    right = total - left
    wl = left.sum(axis=2)
    wr = right.sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (left ** 2).sum(axis=2) / wl + (right ** 2).sum(axis=2) / wr
    valid = Xs[:-1] < Xs[1:]
    if min_leaf > 1:
        pos = np.arange(1, m)[:, None]
        valid &= (pos >= min_leaf) & (m - pos >= min_leaf)
    valid &= (wl > 0) & (wr > 0)
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf).T              # feature-major for tie order
    flat = int(np.argmax(score))
    col, pos = divmod(flat, m - 1)
    lo, hi = Xs[pos, col], Xs[pos + 1, col]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return col, float(thr), float(score[col, pos])


@register
class DecisionTree(BaseClassifier):
    """CART classifier; leaves keep weighted class counts.

    Fitted node arrays: ``feature_`` (-1 at leaves), ``threshold_``,
    ``left_``/``right_`` child indices, ``value_`` class counts,
    ``impurity_`` and ``weight_`` (weighted sample count per node).
    """

    def __init__(self, max_depth=None, min_samples_split=2, min_samples_leaf=1,
                 max_features=None, class_weight=None, n_classes=None, random_state=None):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.class_weight = class_weight
        self.n_classes = n_classes
        self.random_state = random_state

    def _fit(self, X, y, sample_weight):
        c, f = self.n_classes_, X.shape[1]
        rng = np.random.default_rng(self.random_state)
        k = _n_split_features(self.max_features, f)
        w = sample_weight * class_weights(y, c, self.class_weight)
        keep = w > 0
        X, y, w = X[keep], y[keep], w[keep]
        if X.shape[0] == 0:
            raise ClassifierError("DecisionTree: no training rows with positive weight")
        Wy = np.zeros((X.shape[0], c))
        Wy[np.arange(X.shape[0]), y] = w

        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(counts):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(counts)
            return len(feature) - 1

        root = new_node(Wy.sum(axis=0))
        stack = [(root, np.arange(X.shape[0]), 0)]
        while stack:
            node, rows, depth = stack.pop()
            counts = value[node]
            if (np.count_nonzero(counts) <= 1 or rows.size < self.min_samples_split
                    or rows.size < 2 * self.min_samples_leaf
                    or (self.max_depth is not None and depth >= self.max_depth)):
                continue
            cols = np.arange(f) if k == f else np.sort(rng.choice(f, size=k, replace=False))
            Wn = Wy[rows]
            best = _best_split(X[np.ix_(rows, cols)], Wn, self.min_samples_leaf)
            if best is None:
                continue
            col, thr, score = best
            wn = counts.sum()
            if score - (counts ** 2).sum() / wn <= MIN_DECREASE * wn:
                continue
            j = int(cols[col])
            go_left = X[rows, j] <= thr
            lrows, rrows = rows[go_left], rows[~go_left]
            feature[node], threshold[node] = j, thr
            left[node] = new_node(Wn[go_left].sum(axis=0))
            right[node] = new_node(Wn[~go_left].sum(axis=0))
            stack.append((right[node], rrows, depth + 1))
            stack.append((left[node], lrows, depth + 1))

        self.feature_ = np.array(feature, dtype=np.int64)
        self.threshold_ = np.array(threshold, dtype=np.float64)
        self.left_ = np.array(left, dtype=np.int64)
        self.right_ = np.array(right, dtype=np.int64)
        self.value_ = np.array(value, dtype=np.float64).reshape(-1, c)
        self.weight_ = self.value_.sum(axis=1)
        p = self.value_ / self.weight_[:, None]
        self.impurity_ = 1.0 - (p ** 2).sum(axis=1)

    @property
    def node_count(self):
        return self.feature_.shape[0]

    def apply(self, X):
        """Leaf index reached by every row of ``X``."""
        check_is_fitted(self, "feature_")
        X = check_features(X, self.n_features_in_)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature_[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature_[cur]] <= self.threshold_[cur]
            node[active] = np.where(go_left, self.left_[cur], self.right_[cur])
            active = active[self.feature_[node[active]] >= 0]
        return node

    def _proba(self, X):
        v = self.value_[self.apply(X)]
        return v / v.sum(axis=1, keepdims=True)

    def _raw_importances(self):
        imp = np.zeros(self.n_features_in_)
        for node in np.flatnonzero(self.feature_ >= 0):
            l, r = self.left_[node], self.right_[node]
            imp[self.feature_[node]] += (self.weight_[node] * self.impurity_[node]
                                         - self.weight_[l] * self.impurity_[l]
                                         - self.weight_[r] * self.impurity_[r])
        return np.maximum(imp, 0.0)

    @property
    def feature_importances_(self):
        """Normalized mean impurity decrease; uniform when the tree never splits."""
        check_is_fitted(self, "feature_")
        imp = self._raw_importances()
        total = imp.sum()
        if total <= 0:
            return np.full(self.n_features_in_, 1.0 / self.n_features_in_)
        return imp / total


@register
class RandomForest(BaseClassifier):
    """Bootstrap-aggregated CART trees; probabilities are the mean of tree probabilities.

    Per-tree seeds are drawn from ``random_state`` so results are reproducible.
    """

    def __init__(self, n_estimators=100, max_features="sqrt", bootstrap=True, max_depth=None,
                 min_samples_leaf=1, class_weight=None, n_classes=None, random_state=None):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.class_weight = class_weight
        self.n_classes = n_classes
        self.random_state = random_state

    def _fit(self, X, y, sample_weight):
        if self.n_estimators < 1:
            raise ClassifierError("n_estimators must be >= 1")
        n = X.shape[0]
        seeds = np.random.SeedSequence(self.random_state).generate_state(2 * self.n_estimators)
        w = sample_weight * class_weights(y, self.n_classes_, self.class_weight)
        trees, inbag = [], []
        for t in range(self.n_estimators):
            tw = w
            if self.bootstrap:
                draws = np.random.default_rng(seeds[2 * t]).integers(0, n, size=n)
                counts = np.bincount(draws, minlength=n)
                inbag.append(counts > 0)
                tw = w * counts
            tree = DecisionTree(max_depth=self.max_depth, min_samples_leaf=self.min_samples_leaf,
                                max_features=self.max_features, n_classes=self.n_classes_,
                                random_state=int(seeds[2 * t + 1]))
            trees.append(tree.fit(X, y, sample_weight=tw))
        self.estimators_ = trees
        self._inbag = np.array(inbag) if inbag else None

    def oob_predict_proba(self, X):
        """Out-of-bag probabilities for the training rows ``X`` (NaN where every tree saw a row).

        Only available on the instance that was fitted, since in-bag masks are not persisted.
        """
        if getattr(self, "_inbag", None) is None:
            raise ClassifierError("out-of-bag estimates need a freshly fitted bootstrap forest")
        X = check_features(X, self.n_features_in_)
        if X.shape[0] != self._inbag.shape[1]:
            raise ClassifierError("out-of-bag estimates are defined on the training rows only")
        P = np.zeros((X.shape[0], self.n_classes_))
        seen = np.zeros(X.shape[0])
        for tree, mask in zip(self.estimators_, self._inbag):
            out = ~mask
            P[out] += tree._proba(X[out])
            seen += out
        with np.errstate(invalid="ignore", divide="ignore"):
            return P / seen[:, None]

    def _proba(self, X):
        P = np.zeros((X.shape[0], self.n_classes_))
        for tree in self.estimators_:
            P += tree._proba(X)
        return P / len(self.estimators_)

    @property
    def feature_importances_(self):
        """Mean of per-tree normalized importances over trees that split at least once."""
        check_is_fitted(self, "estimators_")
        per_tree = [t.feature_importances_ for t in self.estimators_ if t.node_count > 1]
        if not per_tree:
            return np.full(self.n_features_in_, 1.0 / self.n_features_in_)
        imp = np.mean(per_tree, axis=0)
        return imp / imp.sum()


def feature_importances(forest):
    if not hasattr(forest, "estimators_"):
        raise ClassifierError("forest is not trained")
    return forest.feature_importances_
