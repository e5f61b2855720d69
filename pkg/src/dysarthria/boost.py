"""From-scratch tree ensembles.

``GradientBoostedTreesClassifier`` is a binary logistic booster: each round
fits a regression tree to the negative gradients with greedy
variance-reduction splits and second-order (Newton) leaf values.
``DecisionForestClassifier`` is a bagged Gini forest whose leaves keep full
class-count distributions so prediction can fuse votes either by majority
or by probability averaging.  Both are deterministic under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

HESSIAN_FLOOR = 1e-6
_MIN_GAIN = 1e-12


@dataclass
class TreeNode:
    """Split node or leaf.  Leaves have ``left is None``; regression leaves
    carry ``value``, classification leaves carry ``class_counts``."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0
    class_counts: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


def _route(node: TreeNode, row: np.ndarray) -> TreeNode:
    while not node.is_leaf:
        node = node.left if row[node.feature] < node.threshold else node.right
    return node


def _validate_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinite values")
    return X


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _best_split(X, responses, weights, min_samples_leaf):
    """Greedy weighted variance-reduction split.

    Returns ``(gain, feature, threshold)`` or None.  Features are scanned
    in index order and only strictly better gains replace the incumbent,
    so the choice is deterministic.
    """
    n = len(responses)
    total_w = weights.sum()
    total_wt = np.dot(weights, responses)
    parent_sse_term = total_wt * total_wt / total_w
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        w = weights[order]
        wt = w * responses[order]
        cw = np.cumsum(w)
        cwt = np.cumsum(wt)
        # candidate split after position i (left = 0..i)
        for i in range(min_samples_leaf - 1, n - min_samples_leaf):
            if xs[i] == xs[i + 1]:
                continue
            lw, lwt = cw[i], cwt[i]
            rw, rwt = total_w - lw, total_wt - lwt
            if lw <= 0 or rw <= 0:
                continue
            gain = lwt * lwt / lw + rwt * rwt / rw - parent_sse_term
            if best is None or gain > best[0] + _MIN_GAIN:
                best = (gain, j, 0.5 * (xs[i] + xs[i + 1]))
    if best is None or best[0] <= _MIN_GAIN:
        return None
    return best


def _build_regression_tree(X, grad, hess, weights, responses, depth, max_depth, min_samples_leaf):
    """Tree structure from variance reduction on ``responses``; leaf values
    are the Newton step sum(g)/(sum(h) + floor)."""
    node = TreeNode(value=grad.sum() / (hess.sum() + HESSIAN_FLOOR))
    if depth >= max_depth or len(responses) < 2 * min_samples_leaf:
        return node
    split = _best_split(X, responses, weights, min_samples_leaf)
    if split is None:
        return node
    _, feature, threshold = split
    mask = X[:, feature] < threshold
    node.feature = feature
    node.threshold = threshold
    node.left = _build_regression_tree(
        X[mask], grad[mask], hess[mask], weights[mask], responses[mask],
        depth + 1, max_depth, min_samples_leaf,
    )
    node.right = _build_regression_tree(
        X[~mask], grad[~mask], hess[~mask], weights[~mask], responses[~mask],
        depth + 1, max_depth, min_samples_leaf,
    )
    return node


class GradientBoostedTreesClassifier(BaseEstimator, ClassifierMixin):
    """Binary classifier trained with logistic-loss gradient boosting.

    No row or column subsampling is performed; ``seed`` is kept for
    interface symmetry and reproducibility bookkeeping.
    """

    def __init__(self, n_estimators=100, learning_rate=0.01, max_depth=3,
                 min_samples_leaf=2, seed=0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed

    def fit(self, X, y, sample_weight=None):
        X = _validate_matrix(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError("X and y length mismatch")
        classes = np.unique(y)
        if not np.isin(classes, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        if len(classes) < 2:
            raise ValueError("single-class labels: need both classes present")
        if sample_weight is None:
            w = np.ones(len(y), dtype=np.float64)
        else:
            w = np.asarray(sample_weight, dtype=np.float64)
            if len(w) != len(y):
                raise ValueError("sample_weight length mismatch")
            if np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise ValueError("sample weights must be positive and finite")
        yf = y.astype(np.float64)

        p0 = np.clip(np.dot(w, yf) / w.sum(), 1e-6, 1.0 - 1e-6)
        self.base_score_ = float(np.log(p0 / (1.0 - p0)))
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])

        scores = np.full(len(y), self.base_score_)
        self.trees_ = []
        self.train_losses_ = [self._loss(yf, scores, w)]
        for _ in range(self.n_estimators):
            p = _sigmoid(scores)
            grad = w * (yf - p)  # negative gradient of weighted logloss
            hess = w * p * (1.0 - p)
            tree = _build_regression_tree(
                X, grad, hess, w, yf - p, 0, self.max_depth, self.min_samples_leaf
            )
            self.trees_.append(tree)
            scores += self.learning_rate * np.array([_route(tree, row).value for row in X])
            self.train_losses_.append(self._loss(yf, scores, w))
        return self

    @staticmethod
    def _loss(y, scores, w):
        p = np.clip(_sigmoid(scores), 1e-12, 1.0 - 1e-12)
        return float(-np.dot(w, y * np.log(p) + (1.0 - y) * np.log(1.0 - p)) / w.sum())

    def decision_function(self, X):
        X = _validate_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        scores = np.full(len(X), self.base_score_)
        for tree in self.trees_:
            scores += self.learning_rate * np.array([_route(tree, row).value for row in X])
        return scores

    def predict_proba(self, X):
        p1 = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(np.int64)


def _gini_best_split(X, y_idx, n_classes, min_samples_leaf):
    n = len(y_idx)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y_idx] = 1.0
    total = onehot.sum(axis=0)
    parent_term = np.dot(total, total) / n  # n * (1 - gini)
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        counts = np.cumsum(onehot[order], axis=0)
        for i in range(min_samples_leaf - 1, n - min_samples_leaf):
            if xs[i] == xs[i + 1]:
                continue
            left = counts[i]
            nl = i + 1
            nr = n - nl
            right = total - left
            gain = np.dot(left, left) / nl + np.dot(right, right) / nr - parent_term
            if best is None or gain > best[0] + _MIN_GAIN:
                best = (gain, j, 0.5 * (xs[i] + xs[i + 1]))
    if best is None or best[0] <= _MIN_GAIN:
        return None
    return best


def _build_classification_tree(X, y_idx, n_classes, depth, max_depth, min_samples_leaf):
    counts = np.bincount(y_idx, minlength=n_classes).astype(np.float64)
    node = TreeNode(class_counts=counts)
    if depth >= max_depth or len(y_idx) < 2 * min_samples_leaf or counts.max() == counts.sum():
        return node
    split = _gini_best_split(X, y_idx, n_classes, min_samples_leaf)
    if split is None:
        return node
    _, feature, threshold = split
    mask = X[:, feature] < threshold
    node.feature = feature
    node.threshold = threshold
    node.left = _build_classification_tree(
        X[mask], y_idx[mask], n_classes, depth + 1, max_depth, min_samples_leaf
    )
    node.right = _build_classification_tree(
        X[~mask], y_idx[~mask], n_classes, depth + 1, max_depth, min_samples_leaf
    )
    return node


class DecisionForestClassifier(BaseEstimator, ClassifierMixin):
    """Bagged Gini forest over arbitrary integer labels.

    ``fusion`` selects hard majority voting over per-tree argmax labels or
    soft averaging of leaf class distributions; ``tie_policy`` breaks vote
    ties toward the lowest label ("severe") or the highest ("least-severe").
    Set ``n_trees=1`` for a single plain decision tree (no bootstrap).
    """

    def __init__(self, n_trees=100, max_depth=5, min_samples_leaf=1, seed=0,
                 fusion="majority", tie_policy="severe"):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed
        self.fusion = fusion
        self.tie_policy = tie_policy

    def fit(self, X, y):
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        X = _validate_matrix(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError("X and y length mismatch")
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        y_idx = np.searchsorted(self.classes_, y)
        self.n_features_in_ = X.shape[1]

        self.trees_ = []
        for t in range(self.n_trees):
            if self.n_trees == 1:
                Xb, yb = X, y_idx  # single-tree mode fits the data as-is
            else:
                rng = np.random.default_rng([self.seed, t])
                idx = rng.integers(0, len(y_idx), len(y_idx))
                Xb, yb = X[idx], y_idx[idx]
            self.trees_.append(
                _build_classification_tree(
                    Xb, yb, len(self.classes_), 0, self.max_depth, self.min_samples_leaf
                )
            )
        return self

    def _check_input(self, X):
        X = _validate_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X

    def _argmax_with_policy(self, scores: np.ndarray) -> int:
        top = np.flatnonzero(scores == scores.max())
        return int(top[0] if self.tie_policy == "severe" else top[-1])

    def vote_counts(self, X) -> np.ndarray:
        """Per-row hard vote counts over trees, shape (n, n_classes)."""
        X = self._check_input(X)
        votes = np.zeros((len(X), len(self.classes_)), dtype=np.int64)
        for row_i, row in enumerate(X):
            for tree in self.trees_:
                counts = _route(tree, row).class_counts
                votes[row_i, int(np.argmax(counts))] += 1
        return votes

    def predict_proba(self, X) -> np.ndarray:
        """Mean of normalized leaf class distributions across trees."""
        X = self._check_input(X)
        probs = np.zeros((len(X), len(self.classes_)))
        for row_i, row in enumerate(X):
            for tree in self.trees_:
                counts = _route(tree, row).class_counts
                probs[row_i] += counts / counts.sum()
        return probs / self.n_trees

    def predict_with_votes(self, X):
        """Labels plus the per-row vote distribution used to pick them."""
        X = self._check_input(X)
        if self.fusion == "soft":
            scores = self.predict_proba(X)
        elif self.fusion == "majority":
            scores = self.vote_counts(X)
        else:
            raise ValueError(f"unknown fusion {self.fusion!r}")
        labels = np.array(
            [self.classes_[self._argmax_with_policy(row)] for row in scores]
        )
        return labels, self.vote_counts(X)

    def predict(self, X):
        return self.predict_with_votes(X)[0]
