"""CART decision tree and bootstrap forest with fully specified
determinism.

Split search uses Gini impurity with threshold candidates at midpoints of
adjacent distinct sorted values. Equal-gain ties resolve to the lower
feature index, then the lower threshold; prediction ties resolve to the
smaller class label. These rules make fitted trees a pure function of
(data, parameters, seed).
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .validation import as_float_matrix, as_label_vector, check_fitted, check_n_features


def _leaf_proba(counts):
    total = counts.sum()
    return counts / total if total else counts


class _TreeBuilder:
    """Accumulates flat node arrays during recursive construction."""

    def __init__(self, n_classes):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.proba = []
        self.n_classes = n_classes

    def add(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.proba.append(np.zeros(self.n_classes))
        return len(self.feature) - 1


def _best_split(X, codes, idx, feature_ids, n_classes):
    """Best (feature, threshold, weighted child impurity) over candidates.

    Iterates features ascending and thresholds ascending with a strict
    improvement test, which realizes the documented tie-breaking.
    """
    n = len(idx)
    best = None
    y_node = codes[idx]
    for f in feature_ids:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = y_node[order]
        boundaries = np.flatnonzero(sv[1:] != sv[:-1]) + 1
        if boundaries.size == 0:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), sy] = 1.0
        cum = np.cumsum(onehot, axis=0)
        total = cum[-1]
        left_counts = cum[boundaries - 1]
        right_counts = total - left_counts
        left_n = boundaries.astype(np.float64)
        right_n = n - left_n
        gini_left = 1.0 - ((left_counts / left_n[:, None]) ** 2).sum(axis=1)
        gini_right = 1.0 - ((right_counts / right_n[:, None]) ** 2).sum(axis=1)
        weighted = (left_n * gini_left + right_n * gini_right) / n
        pos = int(np.argmin(weighted))  # first minimum = lowest threshold
        if best is None or weighted[pos] < best[2]:
            thr = (sv[boundaries[pos] - 1] + sv[boundaries[pos]]) / 2.0
            best = (f, float(thr), float(weighted[pos]))
    return best


class CartDecisionTree(BaseEstimator, ClassifierMixin):
    """Gini-impurity CART classifier.

    ``max_features`` limits the candidate features per split (None = all,
    "sqrt" = floor(sqrt(M))); sampling uses ``random_state``, so plain
    trees are deterministic without a seed.
    """

    def __init__(self, max_depth=None, min_samples_split=2, max_features=None,
                 random_state=None):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.random_state = random_state

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        classes = np.unique(y)
        rng = np.random.default_rng(self.random_state)
        return self._fit_encoded(X, y, classes, rng)

    def _fit_encoded(self, X, y, classes, rng):
        self.classes_ = np.asarray(classes, dtype=np.int64)
        self.n_features_in_ = X.shape[1]
        codes = np.searchsorted(self.classes_, y)
        n_classes = len(self.classes_)
        builder = _TreeBuilder(n_classes)

        m = X.shape[1]
        if self.max_features is None:
            k_features = m
        elif self.max_features == "sqrt":
            k_features = max(1, int(np.sqrt(m)))
        else:
            k_features = min(int(self.max_features), m)

        # Explicit stack: deep noise-grown trees must not hit the Python
        # recursion limit. Children are expanded left-first.
        root = builder.add()
        stack = [(np.arange(X.shape[0]), 0, root)]
        while stack:
            idx, depth, node = stack.pop()
            counts = np.bincount(codes[idx], minlength=n_classes).astype(np.float64)
            builder.proba[node] = _leaf_proba(counts)
            pure = counts.max() == counts.sum()
            if (
                pure
                or len(idx) < self.min_samples_split
                or (self.max_depth is not None and depth >= self.max_depth)
            ):
                continue
            if k_features == m:
                feature_ids = range(m)
            else:
                feature_ids = np.sort(rng.choice(m, size=k_features, replace=False))
            found = _best_split(X, codes, idx, feature_ids, n_classes)
            if found is None:
                continue
            f, thr, _ = found
            mask = X[idx, f] <= thr
            builder.feature[node] = f
            builder.threshold[node] = thr
            left = builder.add()
            right = builder.add()
            builder.left[node] = left
            builder.right[node] = right
            stack.append((idx[~mask], depth + 1, right))
            stack.append((idx[mask], depth + 1, left))
        self.feature_ = np.asarray(builder.feature, dtype=np.int64)
        self.threshold_ = np.asarray(builder.threshold, dtype=np.float64)
        self.left_ = np.asarray(builder.left, dtype=np.int64)
        self.right_ = np.asarray(builder.right, dtype=np.int64)
        self.proba_ = np.asarray(builder.proba, dtype=np.float64)
        return self

    def predict_proba(self, X):
        check_fitted(self, "feature_")
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        node = np.zeros(X.shape[0], dtype=np.int64)
        arange = np.arange(X.shape[0])
        while True:
            node_feature = self.feature_[node]
            internal = node_feature >= 0
            if not internal.any():
                break
            f = np.where(internal, node_feature, 0)
            go_left = X[arange, f] <= self.threshold_[node]
            nxt = np.where(go_left, self.left_[node], self.right_[node])
            node = np.where(internal, nxt, node)
        return self.proba_[node]

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    # persistence ----------------------------------------------------------

    def to_state(self):
        return {
            "classes": self.classes_.tolist(),
            "n_features": int(self.n_features_in_),
            "feature": self.feature_.tolist(),
            "threshold": self.threshold_.tolist(),
            "left": self.left_.tolist(),
            "right": self.right_.tolist(),
            "proba": self.proba_.tolist(),
        }

    def _restore(self, state):
        self.classes_ = np.asarray(state["classes"], dtype=np.int64)
        self.n_features_in_ = int(state["n_features"])
        self.feature_ = np.asarray(state["feature"], dtype=np.int64)
        self.threshold_ = np.asarray(state["threshold"], dtype=np.float64)
        self.left_ = np.asarray(state["left"], dtype=np.int64)
        self.right_ = np.asarray(state["right"], dtype=np.int64)
        self.proba_ = np.asarray(state["proba"], dtype=np.float64)
        return self


class RandomForest(BaseEstimator, ClassifierMixin):
    """Bootstrap ensemble of CART trees voting by predicted class.

    Probabilities are vote fractions, so a single tree with full feature
    sampling reproduces that tree exactly. Per-tree seeds derive from
    ``random_state`` via seed-sequence spawning.
    """

    def __init__(self, n_trees=100, max_depth=None, min_samples_split=2,
                 max_features="sqrt", random_state=None):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.random_state = random_state

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        n = X.shape[0]
        root = np.random.SeedSequence(self.random_state)
        self.trees_ = []
        for child in root.spawn(self.n_trees):
            rng = np.random.default_rng(child)
            sample = rng.integers(0, n, size=n)
            tree = CartDecisionTree(
                max_depth=self.max_depth,
                min_samples_split=self.min_samples_split,
                max_features=self.max_features,
            )
            tree._fit_encoded(X[sample], y[sample], self.classes_, rng)
            self.trees_.append(tree)
        return self

    def bootstrap_indices(self, X_rows):
        """The bootstrap sample each tree trained on, reproduced from the
        seed; exposed so ensemble behavior can be checked tree by tree."""
        root = np.random.SeedSequence(self.random_state)
        out = []
        for child in root.spawn(self.n_trees):
            rng = np.random.default_rng(child)
            out.append(rng.integers(0, X_rows, size=X_rows))
        return out

    def predict_proba(self, X):
        check_fitted(self, "trees_")
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        votes = np.zeros((X.shape[0], len(self.classes_)))
        arange = np.arange(X.shape[0])
        for tree in self.trees_:
            picks = np.argmax(tree.predict_proba(X), axis=1)
            votes[arange, picks] += 1.0
        return votes / len(self.trees_)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def to_state(self):
        return {
            "classes": self.classes_.tolist(),
            "n_features": int(self.n_features_in_),
            "trees": [t.to_state() for t in self.trees_],
        }

    def _restore(self, state):
        self.classes_ = np.asarray(state["classes"], dtype=np.int64)
        self.n_features_in_ = int(state["n_features"])
        self.trees_ = []
        for ts in state["trees"]:
            tree = CartDecisionTree(
                max_depth=self.max_depth,
                min_samples_split=self.min_samples_split,
                max_features=self.max_features,
            )
            tree._restore(ts)
            self.trees_.append(tree)
        return self
