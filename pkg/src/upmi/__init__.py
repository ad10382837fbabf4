"""GMM-augmented stacking of two modality classifiers over 7-D meta-features."""
from .ablation import (
    AblationRun,
    PipelineConfig,
    ScenarioReport,
    best_scenario,
    compare_scenarios,
    run_ablation,
    run_ablation_detailed,
)
from .config import RunConfig, load_run_config
from .feature_selection import FeatureSelector, SelectionConfig, select_features
from .forest import RandomForest, RfConfig
from .gmm import ClassConditionalGMM, GaussianMixtureEM, constrain_meta, fit_gmm, synthetic_counts
from .logistic import BaseConfig, WeightedLogisticRegression, fit_logistic
from .meta_features import (
    META_NAMES,
    MetaFeatureTransformer,
    build_meta_vector,
    build_oof_meta_table,
    make_fold_plan,
    meta_matrix,
)
from .metrics import Confusion, f1_score, roc_auc, sensitivity_specificity
from .pipeline import GmmConfig, UPMIClassifier
from .stats import bootstrap_ci_diff, cohens_d_paired, ks_two_sample, paired_t_test, validate_synth_quality
from .synth_cohort import CohortSpec, generate_cohort
from .tabular_io import FeatureTable, PairedDataset, load_feature_table, load_paired, pair_datasets

__version__ = "0.1.0"

__all__ = [
    "AblationRun", "BaseConfig", "ClassConditionalGMM", "CohortSpec", "Confusion",
    "FeatureSelector", "FeatureTable", "GaussianMixtureEM", "GmmConfig", "META_NAMES",
    "MetaFeatureTransformer", "PairedDataset", "PipelineConfig", "RandomForest", "RfConfig",
    "RunConfig", "ScenarioReport", "SelectionConfig", "UPMIClassifier",
    "WeightedLogisticRegression", "best_scenario", "bootstrap_ci_diff", "build_meta_vector",
    "build_oof_meta_table", "cohens_d_paired", "compare_scenarios", "constrain_meta",
    "f1_score", "fit_gmm", "fit_logistic", "generate_cohort", "ks_two_sample",
    "load_feature_table", "load_paired", "load_run_config", "make_fold_plan", "meta_matrix",
    "pair_datasets", "paired_t_test", "roc_auc", "run_ablation", "run_ablation_detailed",
    "select_features", "sensitivity_specificity", "synthetic_counts", "validate_synth_quality",
]
