"""Gini decision trees and the bootstrap random forest used both for
impurity-based feature ranking and as the meta-learner."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_binary_labels, check_matrix
from .exceptions import SingleClassError


@dataclass(frozen=True)
class RfConfig:
    n_trees: int = 100
    max_depth: int | None = 5
    min_samples_split: int = 2
    features_per_split: str | int = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    def to_dict(self):
        return dict(self.__dict__)


def resolve_features_per_split(rule, n_features):
    if rule in (None, "all"):
        return n_features
    if rule == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if rule == "log2":
        return max(1, math.ceil(math.log2(n_features)))
    k = int(rule)
    if k < 1:
        raise ValueError(f"features_per_split must be >= 1, got {rule!r}")
    return min(k, n_features)


class _TreeBuilder:
    def __init__(self, X, y, max_depth, min_samples_split, max_features, rng):
        self.X = X
        self.y = y
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.rng = rng
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.counts = []
        self.depth = []
        self.importance = np.zeros(X.shape[1])

    def _new_node(self, counts, depth):
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(counts)
        self.depth.append(depth)
        return len(self.feature) - 1

    def _best_split(self, idx):
        n_feat = self.X.shape[1]
        if self.max_features >= n_feat:
            feats = np.arange(n_feat)
        else:
            feats = self.rng.choice(n_feat, self.max_features, replace=False)
        Xn = self.X[np.ix_(idx, feats)]
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.take_along_axis(Xn, order, axis=0)
        ys = self.y[idx][order]
        n = len(idx)
        n_left = np.arange(1, n, dtype=float)[:, None]
        n_right = n - n_left
        pos_left = np.cumsum(ys, axis=0)[:-1]
        pos_right = ys.sum(axis=0) - pos_left
        gini_left = 2.0 * pos_left * (n_left - pos_left) / n_left
        gini_right = 2.0 * pos_right * (n_right - pos_right) / n_right
        # n-weighted child impurity; only where adjacent sorted values differ
        child = gini_left + gini_right
        child = np.where(xs[1:] > xs[:-1], child, np.inf)
        flat = int(np.argmin(child.T))  # feature-major: first sampled feature wins ties
        j, r = divmod(flat, n - 1)
        if not np.isfinite(child[r, j]):
            return None
        thr = 0.5 * (xs[r, j] + xs[r + 1, j])
        if not thr < xs[r + 1, j]:
            thr = xs[r, j]
        return int(feats[j]), float(thr), float(child[r, j])

    def build(self, idx, depth):
        y = self.y[idx]
        n = len(idx)
        n1 = int(y.sum())
        node = self._new_node((n - n1, n1), depth)
        if (
            n1 == 0
            or n1 == n
            or n < self.min_samples_split
            or (self.max_depth is not None and depth >= self.max_depth)
        ):
            return node
        split = self._best_split(idx)
        if split is None:
            return node
        f, thr, child_weighted = split
        parent_weighted = 2.0 * n1 * (n - n1) / n
        self.importance[f] += parent_weighted - child_weighted
        go_left = self.X[idx, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(idx[go_left], depth + 1)
        self.right[node] = self.build(idx[~go_left], depth + 1)
        return node


class DecisionTree:
    """Binary classification tree grown greedily on Gini impurity.

    Nodes are stored in flat arrays; ``fit`` takes an explicit numpy Generator
    so the caller controls the random stream.
    """

    def __init__(self, max_depth=5, min_samples_split=2, features_per_split="sqrt"):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.features_per_split = features_per_split

    def fit(self, X, y, rng=None):
        X = check_matrix(X)
        y = np.asarray(y, dtype=np.int64)
        if len(y) < 1:
            raise ValueError("fit_tree needs at least one sample")
        rng = np.random.default_rng(rng)
        builder = _TreeBuilder(
            X, y, self.max_depth, self.min_samples_split,
            resolve_features_per_split(self.features_per_split, X.shape[1]), rng,
        )
        builder.build(np.arange(len(y)), 0)
        self.feature_ = np.array(builder.feature, dtype=np.int64)
        self.threshold_ = np.array(builder.threshold, dtype=float)
        self.left_ = np.array(builder.left, dtype=np.int64)
        self.right_ = np.array(builder.right, dtype=np.int64)
        self.counts_ = np.array(builder.counts, dtype=np.int64).reshape(-1, 2)
        self.node_depth_ = np.array(builder.depth, dtype=np.int64)
        # tie in a leaf votes class 0
        self.leaf_vote_ = (self.counts_[:, 1] > self.counts_[:, 0]).astype(np.int64)
        self.raw_importance_ = builder.importance / len(y)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def depth(self):
        return int(self.node_depth_.max())

    @property
    def n_leaves(self):
        return int(np.sum(self.feature_ < 0))

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature_[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature_[cur]] <= self.threshold_[cur]
            node[rows] = np.where(go_left, self.left_[cur], self.right_[cur])
            active[rows] = self.feature_[node[rows]] >= 0
        return node

    def predict(self, X):
        return self.leaf_vote_[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature_.tolist(),
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold_],
            "left": self.left_.tolist(),
            "right": self.right_.tolist(),
            "leaf_counts": self.counts_.tolist(),
        }


def fit_tree(X, y, config: RfConfig | None = None, rng=None) -> DecisionTree:
    config = config or RfConfig()
    return DecisionTree(
        config.max_depth, config.min_samples_split, config.features_per_split
    ).fit(X, y, rng)


class Standardizer:
    """Per-column zero-mean, unit-variance scaling (population std)."""

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean_) / self.scale_

    def fit_transform(self, X):
        return self.fit(X).transform(X)

    def to_dict(self):
        return {"mean": self.mean_.tolist(), "scale": self.scale_.tolist()}


class RandomForest(ClassifierMixin, BaseEstimator):
    """Bootstrap-aggregated Gini trees with majority voting.

    ``predict_proba`` is the fraction of trees voting each class, so with
    ``n_trees=100`` every probability is a multiple of 0.01. ``predict``
    returns class 1 only on a strict majority; an even split goes to 0.

    Each tree ``t`` draws its bootstrap and split features from its own
    stream ``default_rng([seed, t])``. When ``sample_ids`` are passed to
    ``fit`` the rows are put in canonical id order before bootstrapping, so
    the fitted forest does not depend on input row order.
    """

    def __init__(self, n_trees=100, max_depth=5, min_samples_split=2,
                 features_per_split="sqrt", standardize=True, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.features_per_split = features_per_split
        self.standardize = standardize
        self.seed = seed

    @classmethod
    def from_config(cls, config: RfConfig, standardize=True):
        return cls(config.n_trees, config.max_depth, config.min_samples_split,
                   config.features_per_split, standardize, config.seed)

    def fit(self, X, y, sample_ids=None):
        X = check_matrix(X)
        y = check_binary_labels(y, len(X))
        if len(np.unique(y)) < 2:
            raise SingleClassError("random forest training data holds a single class")
        RfConfig(self.n_trees, self.max_depth, self.min_samples_split,
                 self.features_per_split, self.seed)
        if sample_ids is not None:
            if len(sample_ids) != len(X):
                raise ValueError("sample_ids length does not match X")
            canon = np.array(sorted(range(len(X)), key=lambda i: str(sample_ids[i])))
        else:
            canon = np.arange(len(X))
        self.standardizer_ = Standardizer().fit(X) if self.standardize else None
        Xs = self._scale(X)[canon]
        ys = y[canon]
        n = len(ys)
        self.trees_ = []
        self.bootstrap_indices_ = []
        importances = np.zeros(X.shape[1])
        for t in range(self.n_trees):
            rng = np.random.default_rng([int(self.seed), t])
            boot = rng.integers(0, n, n)
            tree = DecisionTree(self.max_depth, self.min_samples_split,
                                self.features_per_split).fit(Xs[boot], ys[boot], rng)
            self.trees_.append(tree)
            self.bootstrap_indices_.append(canon[boot])
            total = tree.raw_importance_.sum()
            if total > 0:
                importances += tree.raw_importance_ / total
        total = importances.sum()
        self.feature_importances_ = importances / total if total > 0 else importances
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def _scale(self, X):
        if getattr(self, "standardizer_", None) is None:
            return np.asarray(X, dtype=float)
        return self.standardizer_.transform(X)

    def tree_votes(self, X):
        """(n_trees, n_samples) array of hard votes."""
        check_is_fitted(self, "trees_")
        X = self._scale(check_matrix(X, n_features=self.n_features_in_))
        return np.stack([tree.predict(X) for tree in self.trees_])

    def predict_proba(self, X):
        votes = self.tree_votes(X)
        n1 = votes.sum(axis=0)
        p1 = n1 / len(self.trees_)
        return np.column_stack([(len(self.trees_) - n1) / len(self.trees_), p1])

    def predict(self, X):
        votes = self.tree_votes(X)
        return (2 * votes.sum(axis=0) > len(self.trees_)).astype(np.int64)

    def to_dict(self):
        check_is_fitted(self, "trees_")
        return {
            "params": self.get_params(),
            "standardizer": None if self.standardizer_ is None else self.standardizer_.to_dict(),
            "trees": [tree.to_dict() for tree in self.trees_],
        }


def fit_forest(real_X, real_y, synth_X=None, synth_y=None, config: RfConfig | None = None,
               real_ids=None, synth_ids=None) -> RandomForest:
    """Fit the meta-learner on the union of real and synthetic meta-features."""
    config = config or RfConfig()
    X = np.asarray(real_X, dtype=float)
    y = np.asarray(real_y, dtype=np.int64)
    ids = list(real_ids) if real_ids is not None else None
    if synth_X is not None and len(synth_X):
        X = np.vstack([X, np.asarray(synth_X, dtype=float)])
        y = np.concatenate([y, np.asarray(synth_y, dtype=np.int64)])
        if ids is not None:
            ids += list(synth_ids) if synth_ids is not None else [
                f"~synth{i:06d}" for i in range(len(synth_X))
            ]
    return RandomForest.from_config(config).fit(X, y, sample_ids=ids)


def predict_proba_forest(model: RandomForest, m) -> float:
    m = np.asarray(m, dtype=float).reshape(1, -1)
    return float(model.predict_proba(m)[0, 1])


def predict_label(model: RandomForest, m) -> int:
    m = np.asarray(m, dtype=float).reshape(1, -1)
    return int(model.predict(m)[0])
