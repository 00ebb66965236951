"""Weighted CART (Gini) trees grown to purity, and bagged forests of them."""

from dataclasses import dataclass

import numpy as np
from sklearn.utils.validation import check_random_state

from .._validation import ParameterError
from ._base import OvRClassifier


@dataclass
class TreeArrays:
    """Flat binary tree. ``feature == -1`` marks a leaf; ``value`` is the
    weighted fraction of positive samples that reached the node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self):
        return self.feature.size

    @property
    def depth(self):
        depth = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return node
            r = rows[inner]
            n = node[inner]
            go_left = X[r, feat[inner]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def predict_value(self, X):
        return self.value[self.apply(X)]


def _best_split(X, wy, w, features):
    """Lowest weighted child Gini over ``features``; ``None`` if every column is constant.

    Ties go to the earliest feature in ``features``, then the lowest threshold.
    """
    sub = X[:, features]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    cp = np.cumsum(wy[order], axis=0)[:-1]
    ct = np.cumsum(w[order], axis=0)[:-1]
    P, W = wy.sum(), w.sum()
    rp, rt = P - cp, W - ct
    valid = (xs[1:] > xs[:-1]) & (ct > 0) & (rt > 0)
    if not valid.any():
        return None
    with np.errstate(invalid="ignore", divide="ignore"):
        # 2 p (1 - p) W per child, dropping the common factor 2
        score = cp * (ct - cp) / ct + rp * (rt - rp) / rt
    score = np.where(valid, score, np.inf)
    flat = int(np.argmin(score.T))
    j, pos = divmod(flat, score.shape[0])
    lo, hi = xs[pos, j], xs[pos + 1, j]
    thr = (lo + hi) / 2.0
    if thr >= hi:
        thr = lo
    return int(features[j]), float(thr)


def build_tree(X, y, w, max_features=None, rng=None):
    """Grow a CART tree until every leaf is pure or cannot be split.

    ``max_features`` features are drawn per split (all of them, in order, when
    ``None``); if none of the drawn ones can split the node the rest are tried.
    """
    n, F = X.shape
    wy = w * y
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        tot = w[idx].sum()
        value.append(wy[idx].sum() / tot if tot > 0 else 0.0)
        return len(feature) - 1

    all_features = np.arange(F)
    stack = [(new_node(np.arange(n)), np.arange(n))]
    while stack:
        node, idx = stack.pop()
        pos_w = wy[idx].sum()
        if pos_w <= 0 or pos_w >= w[idx].sum():
            continue
        Xn = X[idx]
        if max_features is None or max_features >= F:
            split = _best_split(Xn, wy[idx], w[idx], all_features)
        else:
            drawn = np.sort(rng.choice(F, max_features, replace=False))
            split = _best_split(Xn, wy[idx], w[idx], drawn)
            if split is None:
                rest = np.setdiff1d(all_features, drawn)
                split = _best_split(Xn, wy[idx], w[idx], rest)
        if split is None:
            continue
        f, thr = split
        mask = Xn[:, f] <= thr
        feature[node], threshold[node] = f, thr
        li, ri = idx[mask], idx[~mask]
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return TreeArrays(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value),
    )


def _resolve_max_features(max_features, F):
    if max_features is None:
        return None
    if max_features == "sqrt":
        return max(1, int(np.sqrt(F)))
    if isinstance(max_features, (int, np.integer)) and max_features >= 1:
        return int(max_features)
    raise ParameterError(f"max_features must be None, 'sqrt' or a positive int, got {max_features!r}")


class OvRDecisionTree(OvRClassifier):
    """One unpruned weighted CART tree per label."""

    def __init__(self, class_weight="balanced", max_features=None, random_state=None, class_names=None):
        self.class_weight = class_weight
        self.max_features = max_features
        self.random_state = random_state
        self.class_names = class_names

    def fit(self, X, Y, sample_weight=None):
        X, Y = self._validate_fit(X, Y)
        m = _resolve_max_features(self.max_features, X.shape[1])
        rng = check_random_state(self.random_state)
        self.trees_ = []
        for c in range(Y.shape[1]):
            y = Y[:, c].astype(float)
            w = self._column_weights(Y[:, c], sample_weight)
            self.trees_.append(build_tree(X, y, w, m, rng))
        return self

    def predict_proba(self, X):
        X = self._check_predict(X)
        return np.column_stack([t.predict_value(X) for t in self.trees_])


class OvRRandomForest(OvRClassifier):
    """Bagged CART trees per label; the score is the fraction of trees voting positive.

    Class weights are computed on the full training column and multiplied by
    each tree's bootstrap counts. Every tree draws from its own generator
    seeded by ``(random_state, class, tree)``.
    """

    def __init__(
        self,
        n_estimators=100,
        max_features="sqrt",
        bootstrap=True,
        class_weight="balanced",
        random_state=None,
        class_names=None,
    ):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.class_weight = class_weight
        self.random_state = random_state
        self.class_names = class_names

    def _root_seed(self):
        if self.random_state is None:
            return int(np.random.SeedSequence().entropy % (2**63))
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        raise ParameterError("random_state must be None or an int")

    def fit(self, X, Y, sample_weight=None):
        X, Y = self._validate_fit(X, Y)
        if self.n_estimators < 1:
            raise ParameterError("n_estimators must be >= 1")
        n, F = X.shape
        m = _resolve_max_features(self.max_features, F)
        root = self._root_seed()
        self.estimators_ = []
        for c in range(Y.shape[1]):
            y = Y[:, c].astype(float)
            w_full = self._column_weights(Y[:, c], sample_weight)
            trees = []
            for t in range(self.n_estimators):
                rng = np.random.default_rng(np.random.SeedSequence([root, c, t]))
                if self.bootstrap:
                    counts = np.bincount(rng.integers(0, n, n), minlength=n)
                    idx = np.flatnonzero(counts)
                    w = w_full[idx] * counts[idx]
                else:
                    idx = np.arange(n)
                    w = w_full
                trees.append(build_tree(X[idx], y[idx], w, m, rng))
            self.estimators_.append(trees)
        return self

    def predict_proba(self, X):
        X = self._check_predict(X)
        scores = np.empty((X.shape[0], len(self.estimators_)))
        for c, trees in enumerate(self.estimators_):
            votes = sum((t.predict_value(X) >= 0.5).astype(float) for t in trees)
            scores[:, c] = votes / len(trees)
        return scores
