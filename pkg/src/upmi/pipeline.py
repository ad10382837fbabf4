"""Meta-level estimator: class-conditional GMM augmentation + forest."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_binary_labels, check_matrix
from .forest import RandomForest, Standardizer
from .gmm import DEFAULT_SCENARIOS, ClassConditionalGMM, SynthBatch


@dataclass(frozen=True)
class GmmConfig:
    n_components: int = 2
    reg: float = 1e-4
    tol: float = 1e-6
    max_iter: int = 200
    n_init: int = 1

    def to_dict(self):
        return asdict(self)


class UPMIClassifier(ClassifierMixin, BaseEstimator):
    """Random-forest meta-classifier trained on real plus GMM-sampled meta-features.

    ``fit`` takes the real training meta-features (n, 7). With
    ``synth_pct > 0`` a mixture per class is fitted to them and
    ``round(synth_pct / 100 * n)`` constrained samples, split evenly over the
    classes, are appended before the forest is trained. The forest
    standardizes on the augmented set unless ``standardize_on="real"``.

    A prefitted :class:`ClassConditionalGMM` can be supplied through
    ``fit(..., gmm=...)`` so several doses share one set of mixtures.
    """

    def __init__(self, synth_pct=200, n_components=2, reg=1e-4, gmm_tol=1e-6,
                 gmm_max_iter=200, n_init=1, n_trees=100, max_depth=5,
                 min_samples_split=2, features_per_split="sqrt",
                 standardize_on="augmented", allowed_pcts=DEFAULT_SCENARIOS,
                 seed=0, forest_seed=None):
        self.synth_pct = synth_pct
        self.n_components = n_components
        self.reg = reg
        self.gmm_tol = gmm_tol
        self.gmm_max_iter = gmm_max_iter
        self.n_init = n_init
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.features_per_split = features_per_split
        self.standardize_on = standardize_on
        self.allowed_pcts = allowed_pcts
        self.seed = seed
        self.forest_seed = forest_seed

    def fit(self, X, y, sample_ids=None, gmm=None, stream=0):
        X = check_matrix(X)
        y = check_binary_labels(y, len(X), require_both=True)
        if self.standardize_on not in ("augmented", "real"):
            raise ValueError("standardize_on must be 'augmented' or 'real'")
        ids = list(sample_ids) if sample_ids is not None else [f"r{i:06d}" for i in range(len(X))]
        self.gmm_ = None
        if self.synth_pct > 0:
            self.gmm_ = gmm if gmm is not None else ClassConditionalGMM(
                self.n_components, self.reg, self.gmm_tol, self.gmm_max_iter, self.n_init, self.seed,
            ).fit(X, y, source_ids=ids, stream=stream)
            self.synth_ = self.gmm_.sample_scenario(self.synth_pct, self.seed, stream,
                                                    n_real=len(y), allowed=self.allowed_pcts)
        else:
            self.synth_ = SynthBatch.empty({"seed": self.seed, "stream": stream, "scenario_pct": 0})
        X_aug = np.vstack([X, self.synth_.vectors])
        y_aug = np.concatenate([y, self.synth_.class_labels])
        ids_aug = ids + self.synth_.ids()

        self.standardizer_ = Standardizer().fit(X_aug if self.standardize_on == "augmented" else X)
        forest_seed = self.seed if self.forest_seed is None else self.forest_seed
        self.forest_ = RandomForest(self.n_trees, self.max_depth, self.min_samples_split,
                                    self.features_per_split, standardize=False, seed=forest_seed)
        self.forest_.fit(self.standardizer_.transform(X_aug), y_aug, sample_ids=ids_aug)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "forest_")
        X = check_matrix(X, self.n_features_in_)
        return self.forest_.predict_proba(self.standardizer_.transform(X))

    def predict(self, X):
        check_is_fitted(self, "forest_")
        X = check_matrix(X, self.n_features_in_)
        return self.forest_.predict(self.standardizer_.transform(X))
