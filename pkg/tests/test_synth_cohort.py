import numpy as np
import pytest

from upmi.exceptions import ConfigError
from upmi.feature_selection import select_features
from upmi.logistic import fit_logistic, predict_proba
from upmi.meta_features import make_fold_plan
from upmi.metrics import roc_auc
from upmi.synth_cohort import CohortSpec, generate_cohort
from upmi.tabular_io import load_feature_table, save_feature_table


def base_cv_auc(table, seed):
    """Pooled out-of-fold AUC of selection + logistic regression on one modality."""
    plan = make_fold_plan(table.labels, 5, 2, seed)
    scores = np.empty(table.n_subjects)
    for k in range(plan.k_outer):
        tr, te = plan.train_indices(k), plan.test_indices(k)
        train = table.subset(tr)
        names = select_features(train, seed=seed).selected_names
        cols = train.column_indices(names)
        model = fit_logistic(train.values[:, cols], train.labels)
        scores[te] = predict_proba(model, table.values[np.ix_(te, cols)])
    return roc_auc(scores, table.labels)[0]


def test_explicit_67_subject_spec():
    spec = CohortSpec(n_subjects=67, class1_fraction=24 / 67, n_features_per_modality=100,
                      n_informative=5, effect_size=1.5, seed=0)
    data = generate_cohort(spec)
    assert data.t1.shape == (67, 100) and data.t2.shape == (67, 100)
    assert int(data.labels.sum()) == 24
    assert data.t1.subject_ids == data.t2.subject_ids
    assert set(spec.informative_names) <= set(data.t1.feature_names)


def test_default_spec_shape(cohort67):
    assert cohort67.t1.shape == (67, 100)
    assert int(cohort67.labels.sum()) == 24


def test_deterministic():
    a = generate_cohort(CohortSpec(seed=5))
    b = generate_cohort(CohortSpec(seed=5))
    assert a == b
    assert generate_cohort(CohortSpec(seed=6)) != a


@pytest.mark.parametrize("n, frac", [(67, 24 / 67), (40, 0.4), (11, 0.5), (20, 0.123)])
def test_label_proportion_rounding(n, frac):
    spec = CohortSpec(n_subjects=n, class1_fraction=frac, n_features_per_modality=8,
                      n_informative=2, seed=1)
    assert int(generate_cohort(spec).labels.sum()) == int(np.floor(n * frac + 0.5))


@pytest.mark.parametrize("kwargs", [
    {"class1_fraction": 0.01},
    {"class1_fraction": 1.0},
    {"n_informative": 200},
    {"effect_size": -1},
    {"cross_modality_redundancy": 1.5},
    {"noise_correlation": 1.0},
])
def test_infeasible_specs(kwargs):
    with pytest.raises(ConfigError):
        CohortSpec(**kwargs)


def test_spec_dict_roundtrip():
    spec = CohortSpec(seed=9, effect_size=1.1)
    assert CohortSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigError):
        CohortSpec.from_dict({"bogus": 1})


def test_redundancy_controls_modality_agreement():
    def info_corr(r):
        spec = CohortSpec(n_subjects=400, class1_fraction=0.5, n_features_per_modality=10,
                          n_informative=10, effect_size=0.0, cross_modality_redundancy=r, seed=2)
        d = generate_cohort(spec)
        names = spec.informative_names
        a, b = d.t1.select(names).values, d.t2.select(names).values
        return np.mean([abs(np.corrcoef(a[:, j], b[:, j])[0, 1]) for j in range(10)])

    assert info_corr(0.0) < 0.15
    assert info_corr(1.0) > 0.99


def test_nuisance_structure(cohort67):
    names = cohort67.t1.feature_names
    assert any(n.startswith("dup_") for n in names)
    low = cohort67.t1.select([n for n in names if n.startswith("lowvar_")]).values
    assert np.all(low.var(axis=0) < 0.01)


def test_csv_roundtrip(tmp_path, small_cohort):
    save_feature_table(small_cohort.t1, tmp_path / "t1.csv")
    back = load_feature_table(tmp_path / "t1.csv", modality="t1")
    assert back == small_cohort.t1


def test_null_effect_gives_chance_auc():
    aucs = [base_cv_auc(generate_cohort(CohortSpec(effect_size=0.0, seed=s)).t1, s) for s in range(6)]
    assert abs(np.mean(aucs) - 0.5) <= 0.1


def test_strong_effect_gives_high_auc():
    for s in range(3):
        assert base_cv_auc(generate_cohort(CohortSpec(effect_size=3.0, seed=s)).t1, s) > 0.95
