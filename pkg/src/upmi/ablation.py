"""Synthetic-dose ablation over nested cross-validation.

For every outer fold the base models, out-of-fold meta-features and the
class mixtures are computed once; each dose then only changes the number of
synthetic samples appended before the forest is trained. The forest seed is
shared by all doses of a fold.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import STREAM_FOREST, derive_seed
from .exceptions import DegenerateStatisticError, FoldError, LeakageError
from .feature_selection import SelectionConfig
from .forest import RfConfig
from .gmm import DEFAULT_SCENARIOS, ClassConditionalGMM, synthetic_counts
from .logistic import BaseConfig
from .meta_features import (
    FoldPlan,
    OofMetaTable,
    audit_provenance,
    build_oof_meta_table,
    make_fold_plan,
)
from .metrics import (
    Confusion,
    confusion_counts,
    f1_score,
    mean_roc,
    roc_auc,
    sensitivity_specificity,
)
from .pipeline import GmmConfig, UPMIClassifier
from .stats import (
    bootstrap_ci_diff,
    cohens_d_paired,
    paired_t_test,
    validate_synth_quality,
)
from .tabular_io import PairedDataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    k_outer: int = 5
    k_inner: int = 5
    inner_scheme: str = "kfold"
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    base: BaseConfig = field(default_factory=BaseConfig)
    gmm: GmmConfig = field(default_factory=GmmConfig)
    forest: RfConfig = field(default_factory=RfConfig)
    scenarios: tuple = DEFAULT_SCENARIOS
    allowed_scenarios: tuple = DEFAULT_SCENARIOS
    standardize_on: str = "augmented"
    n_boot: int = 10000
    ci_level: float = 0.95
    seed: int = 0

    def to_dict(self):
        d = asdict(self)
        d["scenarios"] = list(self.scenarios)
        d["allowed_scenarios"] = list(self.allowed_scenarios)
        return d


@dataclass
class FoldMetrics:
    fold_id: int
    scenario_id: int
    n_real: int
    n_synth: int
    auc: float
    f1: float | None
    confusion: Confusion
    roc_points: list
    test_ids: list = field(default_factory=list)
    scores: list = field(default_factory=list)

    def to_dict(self):
        return {
            "fold_id": self.fold_id,
            "scenario_id": self.scenario_id,
            "n_real": self.n_real,
            "n_synth": self.n_synth,
            "auc": self.auc,
            "f1": self.f1,
            "confusion": self.confusion.to_dict(),
            "roc_points": [list(p) for p in self.roc_points],
            "test_ids": self.test_ids,
            "scores": self.scores,
        }


@dataclass
class ScenarioReport:
    scenario_pct: int
    folds: list

    @property
    def n_synth(self):
        """Median per-fold synthetic count (folds may differ by one real subject)."""
        return int(np.median([f.n_synth for f in self.folds]))

    @property
    def aucs(self):
        return np.array([f.auc for f in self.folds])

    @property
    def f1s(self):
        return np.array([np.nan if f.f1 is None else f.f1 for f in self.folds])

    @property
    def auc_mean(self):
        return float(self.aucs.mean())

    @property
    def auc_std(self):
        return float(self.aucs.std(ddof=1)) if len(self.folds) > 1 else 0.0

    @property
    def f1_mean(self):
        return float(np.nanmean(self.f1s))

    @property
    def f1_std(self):
        f = self.f1s[~np.isnan(self.f1s)]
        return float(f.std(ddof=1)) if len(f) > 1 else 0.0

    @property
    def confusion(self):
        total = Confusion(0, 0, 0, 0)
        for f in self.folds:
            total = total + f.confusion
        return total

    def to_dict(self):
        sens, spec = sensitivity_specificity(self.confusion)
        return {
            "scenario_pct": self.scenario_pct,
            "n_synth": self.n_synth,
            "n_synth_per_fold": [f.n_synth for f in self.folds],
            "auc_mean": self.auc_mean,
            "auc_std": self.auc_std,
            "f1_mean": self.f1_mean,
            "f1_std": self.f1_std,
            "confusion": self.confusion.to_dict(),
            "sensitivity": sens,
            "specificity": spec,
            "mean_roc": mean_roc([f.roc_points for f in self.folds]),
            "folds": [f.to_dict() for f in self.folds],
        }


@dataclass
class AblationRun:
    """Everything one ablation produced, for reporting and audit."""

    config: PipelineConfig
    plan: FoldPlan
    reports: list
    oof_tables: list
    gmms: dict
    synth: dict
    provenance: list
    leakage_violations: list

    def report(self, pct) -> ScenarioReport:
        for r in self.reports:
            if r.scenario_pct == pct:
                return r
        raise KeyError(pct)


def _fold_metrics(k, pct, n_real, n_synth, oof: OofMetaTable, model):
    scores = model.predict_proba(oof.test_meta)[:, 1]
    pred = model.predict(oof.test_meta)
    auc, roc = roc_auc(scores, oof.test_labels)
    conf = confusion_counts(oof.test_labels, pred)
    return FoldMetrics(k, pct, n_real, n_synth, auc, f1_score(conf), conf, roc,
                       list(oof.test_ids), scores.tolist())


def _run_fold(data, plan, k, config: PipelineConfig):
    try:
        oof = build_oof_meta_table(data, plan, k, config.selection, config.base)
    except FoldError:
        raise
    except Exception as exc:
        raise FoldError(f"outer fold {k}: {exc}", k) from exc
    provenance = list(oof.provenance)
    gmm = None
    if any(p > 0 for p in config.scenarios):
        g = config.gmm
        gmm = ClassConditionalGMM(g.n_components, g.reg, g.tol, g.max_iter, g.n_init,
                                  config.seed).fit(oof.train_meta, oof.train_labels,
                                                   source_ids=oof.train_ids, stream=k)
        for c in (0, 1):
            provenance.append({"level": "gmm", "outer_fold": k, "inner_fold": None,
                               "class": c, "fit_on": gmm.fit_subjects_[c], "scored": []})
    forest_seed = derive_seed(config.seed, STREAM_FOREST, k)
    fc = config.forest
    folds, synth = {}, {}
    n_real = len(oof.train_labels)
    for pct in config.scenarios:
        model = UPMIClassifier(
            synth_pct=pct, n_trees=fc.n_trees, max_depth=fc.max_depth,
            min_samples_split=fc.min_samples_split, features_per_split=fc.features_per_split,
            standardize_on=config.standardize_on, allowed_pcts=config.allowed_scenarios,
            seed=config.seed, forest_seed=forest_seed,
        ).fit(oof.train_meta, oof.train_labels, sample_ids=oof.train_ids, gmm=gmm, stream=k)
        folds[pct] = _fold_metrics(k, pct, n_real, len(model.synth_), oof, model)
        synth[pct] = model.synth_
    return oof, gmm, folds, synth, provenance


def run_ablation_detailed(data: PairedDataset, scenarios=None, config: PipelineConfig | None = None,
                          seed=None, n_jobs=1) -> AblationRun:
    config = config or PipelineConfig()
    updates = {}
    if scenarios is not None:
        updates["scenarios"] = tuple(scenarios)
    if seed is not None:
        updates["seed"] = seed
    if updates:
        config = PipelineConfig(**{**config.__dict__, **updates})
    for pct in config.scenarios:
        synthetic_counts(1, pct, config.allowed_scenarios)

    plan = make_fold_plan(data.labels, config.k_outer, config.k_inner, config.seed,
                          config.inner_scheme)
    if n_jobs == 1:
        results = [_run_fold(data, plan, k, config) for k in range(plan.k_outer)]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_fold)(data, plan, k, config) for k in range(plan.k_outer)
        )

    oofs = [r[0] for r in results]
    gmms = {k: r[1] for k, r in enumerate(results) if r[1] is not None}
    provenance = [entry for r in results for entry in r[4]]
    reports = [ScenarioReport(pct, [r[2][pct] for r in results]) for pct in config.scenarios]
    synth = {pct: [r[3][pct] for r in results] for pct in config.scenarios}
    violations = audit_provenance(provenance, plan, data.subject_ids)
    if violations:
        raise LeakageError(f"{len(violations)} leakage violation(s): {violations[:3]}")
    return AblationRun(config, plan, reports, oofs, gmms, synth, provenance, violations)


def run_ablation(data: PairedDataset, scenarios=None, config: PipelineConfig | None = None,
                 seed=None, n_jobs=1) -> list:
    """One :class:`ScenarioReport` per synthetic dose, in the requested order."""
    return run_ablation_detailed(data, scenarios, config, seed, n_jobs).reports


def compare_scenarios(best: ScenarioReport, baseline: ScenarioReport, n_boot=10000,
                      level=0.95, seed=0) -> dict:
    """Fold-paired comparison of AUCs: t-test, Cohen's d, bootstrap CI."""
    a, b = best.aucs, baseline.aucs
    diff = a - b
    out = {
        "best_scenario": best.scenario_pct,
        "baseline_scenario": baseline.scenario_pct,
        "auc_best_mean": best.auc_mean,
        "auc_baseline_mean": baseline.auc_mean,
        "mean_gain": float(diff.mean()),
        "relative_gain": float(diff.mean() / b.mean()) if b.mean() else None,
        "folds_improved": int(np.sum(diff > 0)),
        "n_folds": len(diff),
    }
    try:
        out["t"], out["p"] = paired_t_test(a, b)
        out["cohens_d"] = cohens_d_paired(a, b)
        out["degenerate"] = False
    except DegenerateStatisticError as exc:
        out.update({"t": None, "p": None, "cohens_d": None, "degenerate": True, "note": str(exc)})
    lo, hi = bootstrap_ci_diff(a, b, n_boot, level, seed)
    out["ci"] = [lo, hi]
    out["ci_level"] = level
    return out


def best_scenario(reports) -> ScenarioReport | None:
    """Highest mean AUC among nonzero doses (earliest wins ties)."""
    best = None
    for r in reports:
        if r.scenario_pct > 0 and (best is None or r.auc_mean > best.auc_mean):
            best = r
    return best


def synth_quality(run: AblationRun, pct) -> dict:
    """KS report of pooled synthetic vs pooled real training meta-features."""
    real = np.vstack([o.train_meta for o in run.oof_tables])
    synth = np.vstack([b.vectors for b in run.synth[pct] if len(b)])
    return validate_synth_quality(real, synth)
