"""Seven-dimensional meta-features from out-of-fold base-model probabilities.

Layout of one meta-feature vector::

    [p_t1, p_t2, conf_t1, conf_t2, disagreement, p_max, p_min]

with ``conf = max(p, 1 - p)`` and ``disagreement = |p_t1 - p_t2|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._rng import STREAM_INNER, STREAM_OUTER, STREAM_SELECTION, derive_rng, derive_seed
from .exceptions import (
    EmptySelectionError,
    FoldError,
    LeakageError,
    SingleClassError,
    StratificationError,
)
from .feature_selection import SelectionConfig, select_features
from .logistic import BaseConfig, fit_logistic, predict_proba
from .tabular_io import PairedDataset

META_NAMES = ("p_t1", "p_t2", "conf_t1", "conf_t2", "disagreement", "p_max", "p_min")
N_META = len(META_NAMES)


def meta_matrix(p_t1, p_t2) -> np.ndarray:
    """Vectorized construction of (n, 7) meta-features from two probability vectors."""
    p1 = np.asarray(p_t1, dtype=float).reshape(-1)
    p2 = np.asarray(p_t2, dtype=float).reshape(-1)
    if p1.shape != p2.shape:
        raise ValueError("probability vectors differ in length")
    if np.any(~np.isfinite(p1)) or np.any(~np.isfinite(p2)):
        raise ValueError("probabilities must be finite")
    if np.any((p1 < 0) | (p1 > 1) | (p2 < 0) | (p2 > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return np.column_stack([
        p1,
        p2,
        np.maximum(p1, 1.0 - p1),
        np.maximum(p2, 1.0 - p2),
        np.abs(p1 - p2),
        np.maximum(p1, p2),
        np.minimum(p1, p2),
    ])


def meta_identity_violations(M) -> np.ndarray:
    """Boolean (n, 5) mask of derived-field identities that fail exactly."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    p1, p2 = M[:, 0], M[:, 1]
    return np.column_stack([
        M[:, 2] != np.maximum(p1, 1.0 - p1),
        M[:, 3] != np.maximum(p2, 1.0 - p2),
        M[:, 4] != np.abs(p1 - p2),
        M[:, 5] != np.maximum(p1, p2),
        M[:, 6] != np.minimum(p1, p2),
    ])


def check_meta_identities(M) -> bool:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    ok_range = np.all((M[:, :2] >= 0) & (M[:, :2] <= 1))
    return bool(ok_range and not meta_identity_violations(M).any()
                and np.all(M[:, 4] == M[:, 5] - M[:, 6]) and np.all(M[:, 6] <= M[:, 5]))


@dataclass(frozen=True)
class MetaFeatureVector:
    p_t1: float
    p_t2: float
    c_t1: float
    c_t2: float
    d: float
    p_max: float
    p_min: float

    def as_array(self):
        return np.array([self.p_t1, self.p_t2, self.c_t1, self.c_t2, self.d, self.p_max, self.p_min])

    @classmethod
    def from_array(cls, row):
        return cls(*(float(v) for v in row))


def build_meta_vector(p_t1: float, p_t2: float) -> MetaFeatureVector:
    return MetaFeatureVector.from_array(meta_matrix([p_t1], [p_t2])[0])


class MetaFeatureTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer: (n, 2) modality probabilities -> (n, 7) meta-features."""

    def fit(self, X, y=None):
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError("expected an (n, 2) array of [p_t1, p_t2]")
        return meta_matrix(X[:, 0], X[:, 1])

    def get_feature_names_out(self, input_features=None):
        return np.array(META_NAMES, dtype=object)


# --- fold plans -----------------------------------------------------------------

@dataclass
class FoldPlan:
    """Stratified nested CV assignment over subject indices.

    ``outer_folds[k]`` holds the test indices of outer fold ``k``;
    ``inner_folds[k][j]`` the held-out indices of inner fold ``j`` within the
    training subjects of outer fold ``k``.
    """

    outer_folds: list
    inner_folds: list
    seed: int
    n_subjects: int

    def train_indices(self, k):
        test = set(self.outer_folds[k].tolist())
        return np.array([i for i in range(self.n_subjects) if i not in test], dtype=np.int64)

    def test_indices(self, k):
        return self.outer_folds[k]

    @property
    def k_outer(self):
        return len(self.outer_folds)

    def to_dict(self):
        return {
            "seed": self.seed,
            "n_subjects": self.n_subjects,
            "outer_folds": [f.tolist() for f in self.outer_folds],
            "inner_folds": [[f.tolist() for f in inner] for inner in self.inner_folds],
        }


def _stratified_assign(indices, labels, k, rng):
    """Shuffle each class, then deal round-robin; the second class continues
    where the first stopped, so fold sizes differ by at most one."""
    folds = [[] for _ in range(k)]
    cursor = 0
    for c in (0, 1):
        members = indices[labels[indices] == c]
        members = members[rng.permutation(len(members))]
        for m in members:
            folds[cursor % k].append(int(m))
            cursor += 1
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def make_fold_plan(labels, k_outer=5, k_inner=5, seed=0, inner="kfold") -> FoldPlan:
    labels = np.asarray(labels, dtype=np.int64)
    if k_outer < 2:
        raise ValueError("k_outer must be >= 2")
    counts = np.bincount(labels, minlength=2)
    if counts.min() < k_outer:
        raise StratificationError(
            f"class sizes {counts.tolist()} too small for {k_outer} stratified folds"
        )
    all_idx = np.arange(len(labels))
    outer = _stratified_assign(all_idx, labels, k_outer, derive_rng(seed, STREAM_OUTER))
    inner_folds = []
    for k, test in enumerate(outer):
        train = np.setdiff1d(all_idx, test)
        if inner == "loo":
            inner_folds.append([np.array([i], dtype=np.int64) for i in train])
            continue
        if inner != "kfold":
            raise ValueError(f"unknown inner scheme {inner!r}")
        if k_inner < 2:
            raise ValueError("k_inner must be >= 2")
        # a tiny training set may yield single-class inner partitions; that is
        # reported with fold identity when the fold is built
        rng = derive_rng(seed, STREAM_INNER, k)
        inner_folds.append(_stratified_assign(train, labels, min(k_inner, len(train)), rng))
    return FoldPlan(outer, inner_folds, seed, len(labels))


# --- out-of-fold meta tables ----------------------------------------------------

@dataclass
class OofMetaTable:
    """Meta-features for one outer fold plus the provenance of every score."""

    outer_fold: int
    train_ids: list
    train_meta: np.ndarray
    train_labels: np.ndarray
    test_ids: list
    test_meta: np.ndarray
    test_labels: np.ndarray
    provenance: list = field(default_factory=list)
    selected_features: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "outer_fold": self.outer_fold,
            "meta_names": list(META_NAMES),
            "train": {"ids": self.train_ids, "labels": self.train_labels.tolist(),
                      "meta": self.train_meta.tolist()},
            "test": {"ids": self.test_ids, "labels": self.test_labels.tolist(),
                     "meta": self.test_meta.tolist()},
            "selected_features": self.selected_features,
            "provenance": self.provenance,
        }


def _fit_and_score(data: PairedDataset, train_idx, score_idx, sel_config, base_config, seed,
                   tag, provenance, call_log=None):
    """Select + fit per modality on ``train_idx``; return class-1 probabilities on ``score_idx``."""
    probs = []
    selected = {}
    for name, table in (("t1", data.t1), ("t2", data.t2)):
        train_tab = table.subset(train_idx)
        if call_log is not None:
            call_log.append({**tag, "modality": name, "subjects": list(train_tab.subject_ids)})
        result = select_features(train_tab, sel_config, seed)
        cols = train_tab.column_indices(result.selected_names)
        model = fit_logistic(train_tab.values[:, cols], train_tab.labels, None,
                             base_config.C, base_config.tol, base_config.max_iter,
                             result.selected_names)
        probs.append(predict_proba(model, table.values[np.ix_(score_idx, cols)]))
        selected[name] = list(result.selected_names)
        provenance.append({
            **tag,
            "modality": name,
            "trained_on": [table.subject_ids[i] for i in train_idx],
            "scored": [table.subject_ids[i] for i in score_idx],
            "selected_features": list(result.selected_names),
        })
    return probs[0], probs[1], selected


def build_oof_meta_table(data: PairedDataset, plan: FoldPlan, outer_k: int,
                         sel_config: SelectionConfig | None = None,
                         base_config: BaseConfig | None = None,
                         call_log=None) -> OofMetaTable:
    """Meta-features for the training and test subjects of outer fold ``outer_k``.

    Test subjects are scored by models fitted on the whole outer-training set.
    Each training subject is scored by the inner-fold model that held it out.
    Feature selection is rerun inside every fit. ``call_log``, when given,
    receives one entry per selection call with the subjects it saw.
    """
    if not 0 <= outer_k < plan.k_outer:
        raise IndexError(f"outer fold {outer_k} out of range 0..{plan.k_outer - 1}")
    sel_config = sel_config or SelectionConfig()
    base_config = base_config or BaseConfig()
    labels = data.labels
    train_idx = plan.train_indices(outer_k)
    test_idx = plan.test_indices(outer_k)
    provenance = []

    def run(fit_idx, score_idx, inner_j):
        tag = {"level": "outer" if inner_j is None else "inner",
               "outer_fold": outer_k, "inner_fold": inner_j}
        if len(np.unique(labels[fit_idx])) < 2:
            raise FoldError(
                f"outer fold {outer_k}, inner fold {inner_j}: training partition holds a single class",
                outer_k, inner_j,
            )
        seed = derive_seed(plan.seed, STREAM_SELECTION, outer_k, 0 if inner_j is None else inner_j + 1)
        try:
            return _fit_and_score(data, fit_idx, score_idx, sel_config, base_config, seed,
                                  tag, provenance, call_log)
        except (EmptySelectionError, SingleClassError) as exc:
            raise FoldError(f"outer fold {outer_k}, inner fold {inner_j}: {exc}",
                            outer_k, inner_j) from exc

    p1_test, p2_test, selected = run(train_idx, test_idx, None)

    pos = {int(i): r for r, i in enumerate(train_idx)}
    p1_train = np.full(len(train_idx), np.nan)
    p2_train = np.full(len(train_idx), np.nan)
    for j, held in enumerate(plan.inner_folds[outer_k]):
        fit_idx = np.setdiff1d(train_idx, held)
        p1, p2, _ = run(fit_idx, held, j)
        rows = [pos[int(i)] for i in held]
        p1_train[rows] = p1
        p2_train[rows] = p2
    if np.isnan(p1_train).any():
        raise FoldError(f"outer fold {outer_k}: inner folds do not cover the training set", outer_k)

    ids = data.subject_ids
    return OofMetaTable(
        outer_fold=outer_k,
        train_ids=[ids[i] for i in train_idx],
        train_meta=meta_matrix(p1_train, p2_train),
        train_labels=labels[train_idx].copy(),
        test_ids=[ids[i] for i in test_idx],
        test_meta=meta_matrix(p1_test, p2_test),
        test_labels=labels[test_idx].copy(),
        provenance=provenance,
        selected_features=selected,
    )


def audit_provenance(provenance, plan: FoldPlan, subject_ids) -> list:
    """Return a list of human-readable leakage violations (empty when clean).

    Checks, per logged model: the subjects it scored are disjoint from those
    it was trained on; no outer-test subject of its fold reached training;
    and GMM fits (``level == "gmm"``) used only outer-training subjects.
    """
    violations = []
    for entry in provenance:
        k = entry["outer_fold"]
        outer_test = {subject_ids[i] for i in plan.test_indices(k)}
        trained = set(entry.get("trained_on", entry.get("fit_on", [])))
        scored = set(entry.get("scored", []))
        label = f"{entry['level']} fold {k}/{entry.get('inner_fold')}/{entry.get('modality', entry.get('class'))}"
        both = trained & scored
        if both:
            violations.append(f"{label}: scored subjects it trained on: {sorted(both)[:5]}")
        leaked = trained & outer_test
        if leaked:
            violations.append(f"{label}: trained on outer-test subjects {sorted(leaked)[:5]}")
    return violations


def assert_no_leakage(provenance, plan, subject_ids):
    violations = audit_provenance(provenance, plan, subject_ids)
    if violations:
        raise LeakageError(f"{len(violations)} leakage violation(s): {violations[:3]}")
