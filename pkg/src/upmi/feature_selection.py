"""Four-stage per-modality feature selection.

Variance screen, MI-guided correlation pruning, MI top-k, then forest
impurity top-k. Every stage is a pure function of its (training-only)
input; :class:`FeatureSelector` chains them behind the transformer API.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptySelectionError, SingleClassError
from .forest import RandomForest, RfConfig
from .tabular_io import FeatureTable


@dataclass(frozen=True)
class SelectionConfig:
    variance_threshold: float = 0.01
    rho_max: float = 0.95
    mi_top_k: int = 20
    rf_top_k: int = 10
    forest: RfConfig = field(
        default_factory=lambda: RfConfig(n_trees=100, max_depth=None, features_per_split="sqrt")
    )

    def to_dict(self):
        return asdict(self)


@dataclass
class SelectionResult:
    selected_names: list
    stage_audit: list

    def to_dict(self):
        return {"selected_names": list(self.selected_names), "stage_audit": self.stage_audit}


def _n_bins(n):
    return max(2, min(10, n // 5))


def equal_frequency_bins(x, n_bins=None):
    """Rank-based bin codes; tied values always share a bin.

    Cut points are order statistics of ``x`` itself, so any strictly
    increasing transform of ``x`` yields identical codes.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    n_bins = _n_bins(n) if n_bins is None else n_bins
    xs = np.sort(x)
    cuts = xs[[(j * n) // n_bins for j in range(1, n_bins)]]
    cuts = np.unique(cuts)
    return np.searchsorted(cuts, x, side="right")


def _check_xy(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: x {x.shape}, y {y.shape}")
    if len(x) < 2:
        raise ValueError("mutual information needs at least 2 samples")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be binary 0/1")
    if len(np.unique(y)) < 2:
        raise SingleClassError("mutual information undefined for single-class y")
    return x, y.astype(np.int64)


def mutual_information(x, y) -> float:
    """Plug-in I(X;Y) in nats after equal-frequency discretization of ``x``."""
    x, y = _check_xy(x, y)
    codes = equal_frequency_bins(x)
    n = len(x)
    joint = np.zeros((codes.max() + 1, 2))
    np.add.at(joint, (codes, y), 1.0)
    joint /= n
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / (px @ py)[nz])))
    return max(mi, 0.0)


def mi_scores(table: FeatureTable) -> np.ndarray:
    return np.array([mutual_information(col, table.labels) for col in table.values.T])


def variance_filter(table: FeatureTable, threshold: float = 0.01) -> list:
    if threshold < 0:
        raise ValueError("variance threshold must be >= 0")
    var = table.values.var(axis=0)
    return [name for name, v in zip(table.feature_names, var) if v >= threshold]


def pearson_matrix(values) -> np.ndarray:
    """|Pearson| correlation matrix; zero-variance columns correlate 0 with all."""
    X = np.asarray(values, dtype=float)
    Xc = X - X.mean(axis=0)
    norm = np.sqrt((Xc ** 2).sum(axis=0))
    safe = np.where(norm > 0, norm, 1.0)
    R = (Xc.T @ Xc) / np.outer(safe, safe)
    R[norm == 0, :] = 0.0
    R[:, norm == 0] = 0.0
    return np.clip(R, -1.0, 1.0)


def correlation_filter(table: FeatureTable, rho_max: float, mi_scores) -> list:
    """Greedy pruning in descending-MI order; output keeps input column order.

    ``mi_scores`` is a mapping name -> score or a sequence aligned with the
    table's columns. Equal scores are resolved by column order.
    """
    names = table.feature_names
    if isinstance(mi_scores, dict):
        missing = [n for n in names if n not in mi_scores]
        if missing:
            raise ValueError(f"mi_scores missing features: {missing}")
        scores = np.array([mi_scores[n] for n in names], dtype=float)
    else:
        scores = np.asarray(mi_scores, dtype=float)
        if scores.shape != (len(names),):
            raise ValueError("mi_scores must align with the table's features")
    R = np.abs(pearson_matrix(table.values))
    order = sorted(range(len(names)), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        if all(R[i, j] <= rho_max for j in kept):
            kept.append(i)
    return [names[i] for i in sorted(kept)]


def _top_k_indices(scores, k):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[: min(k, len(scores))]


def top_k_by_mi(table: FeatureTable, k: int, scores=None) -> list:
    """The ``k`` highest-MI features, ordered by descending MI (ties: column order)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = mi_scores(table) if scores is None else np.asarray(scores, dtype=float)
    return [table.feature_names[i] for i in _top_k_indices(scores, k)]


def rf_importance_top_k(table: FeatureTable, k: int, forest_config: RfConfig | None = None,
                        seed: int = 0) -> SelectionResult:
    """Rank by normalized mean decrease in Gini impurity and keep the top ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    counts = np.bincount(table.labels, minlength=2)
    if counts.min() == 0:
        raise SingleClassError("impurity ranking needs both classes")
    if counts.min() < 2:
        raise SingleClassError("impurity ranking needs >= 2 subjects per class")
    cfg = forest_config or RfConfig(max_depth=None)
    forest = RandomForest(cfg.n_trees, cfg.max_depth, cfg.min_samples_split,
                          cfg.features_per_split, standardize=False, seed=seed)
    forest.fit(table.values, table.labels, sample_ids=table.subject_ids)
    imp = forest.feature_importances_
    top = _top_k_indices(imp, k)
    names = [table.feature_names[i] for i in top]
    audit = {
        "stage": "rf_importance",
        "n_in": len(table.feature_names),
        "n_out": len(names),
        "scores": {n: float(v) for n, v in zip(table.feature_names, imp)},
    }
    return SelectionResult(names, [audit])


def select_features(table: FeatureTable, config: SelectionConfig | None = None,
                    seed: int = 0) -> SelectionResult:
    """Run the full chain on a training-fold table."""
    config = config or SelectionConfig()
    audit = [{"stage": "input", "n_in": len(table.feature_names), "n_out": len(table.feature_names)}]

    var = table.values.var(axis=0)
    kept = variance_filter(table, config.variance_threshold)
    audit.append({
        "stage": "variance", "n_in": len(table.feature_names), "n_out": len(kept),
        "threshold": config.variance_threshold,
        "scores": {n: float(v) for n, v in zip(table.feature_names, var)},
    })
    if not kept:
        raise EmptySelectionError("variance")
    current = table.select(kept)

    mi = mi_scores(current)
    mi_by_name = dict(zip(current.feature_names, mi.tolist()))
    kept = correlation_filter(current, config.rho_max, mi)
    dropped = [n for n in current.feature_names if n not in set(kept)]
    audit.append({
        "stage": "correlation", "n_in": len(current.feature_names), "n_out": len(kept),
        "rho_max": config.rho_max, "dropped": dropped,
        "scores": {n: mi_by_name[n] for n in current.feature_names},
    })
    if not kept:
        raise EmptySelectionError("correlation")
    current = current.select(kept)

    kept = top_k_by_mi(current, config.mi_top_k, [mi_by_name[n] for n in current.feature_names])
    audit.append({
        "stage": "mutual_information", "n_in": len(current.feature_names), "n_out": len(kept),
        "k": config.mi_top_k, "scores": {n: mi_by_name[n] for n in kept},
    })
    current = current.select(kept)

    rf = rf_importance_top_k(current, config.rf_top_k, config.forest, seed)
    audit.append({**rf.stage_audit[0], "k": config.rf_top_k})
    if not rf.selected_names:
        raise EmptySelectionError("rf_importance")
    return SelectionResult(rf.selected_names, audit)


class FeatureSelector(TransformerMixin, BaseEstimator):
    """Transformer wrapper: ``fit`` on a training fold, ``transform`` any fold.

    Accepts a :class:`FeatureTable`, or an array plus ``y`` (columns are then
    named ``f0, f1, ...``).
    """

    def __init__(self, variance_threshold=0.01, rho_max=0.95, mi_top_k=20, rf_top_k=10,
                 n_trees=100, seed=0):
        self.variance_threshold = variance_threshold
        self.rho_max = rho_max
        self.mi_top_k = mi_top_k
        self.rf_top_k = rf_top_k
        self.n_trees = n_trees
        self.seed = seed

    def _as_table(self, X, y=None):
        if isinstance(X, FeatureTable):
            return X
        X = np.asarray(X, dtype=float)
        names = [f"f{i}" for i in range(X.shape[1])]
        ids = [f"s{i:06d}" for i in range(len(X))]
        labels = np.zeros(len(X), dtype=int) if y is None else y
        return FeatureTable(ids, names, X, labels)

    def fit(self, X, y=None):
        table = self._as_table(X, y)
        cfg = SelectionConfig(
            self.variance_threshold, self.rho_max, self.mi_top_k, self.rf_top_k,
            RfConfig(n_trees=self.n_trees, max_depth=None, features_per_split="sqrt"),
        )
        self.result_ = select_features(table, cfg, self.seed)
        self.feature_names_in_ = np.array(table.feature_names, dtype=object)
        self.selected_names_ = list(self.result_.selected_names)
        lookup = {n: i for i, n in enumerate(table.feature_names)}
        self.selected_indices_ = np.array([lookup[n] for n in self.selected_names_])
        return self

    def transform(self, X):
        check_is_fitted(self, "selected_names_")
        if isinstance(X, FeatureTable):
            return X.select(self.selected_names_).values
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.feature_names_in_):
            raise ValueError("column count differs from the fitted table")
        return X[:, self.selected_indices_]

    def get_support(self):
        check_is_fitted(self, "selected_names_")
        mask = np.zeros(len(self.feature_names_in_), dtype=bool)
        mask[self.selected_indices_] = True
        return mask

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "selected_names_")
        return np.array(self.selected_names_, dtype=object)
