import math

import numpy as np
import pytest

from upmi.exceptions import ConfigError, SingleClassError
from upmi.gmm import (
    ClassConditionalGMM,
    GaussianMixtureEM,
    GmmParams,
    SynthBatch,
    constrain_meta,
    fit_gmm,
    gmm_log_density,
    make_scenario_batches,
    sample_constrained,
    synthetic_counts,
)
from upmi.meta_features import check_meta_identities, meta_matrix
from upmi.stats import ks_two_sample


def oracle_meta(rng, n):
    """Two-cluster (p_t1, p_t2) pairs well inside the unit square."""
    comp = rng.random(n) < 0.6
    centre = np.where(comp[:, None], [0.3, 0.35], [0.7, 0.6])
    p = np.clip(centre + 0.06 * rng.standard_normal((n, 2)), 0, 1)
    return meta_matrix(p[:, 0], p[:, 1])


def test_one_tight_gaussian_recovers_mean():
    true = np.array([0.2, -1.0, 3.0])
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = true + 0.1 * rng.standard_normal((80, 3))
        fit = fit_gmm(X, K=1, seed=seed)
        se = 0.1 / math.sqrt(80)
        assert np.all(np.abs(fit.params.means[0] - true) < 3 * se * 1.5)
        assert fit.params.weights[0] == 1.0


def test_separated_clusters_recovered():
    rng = np.random.default_rng(0)
    centres = np.array([[0.0] * 7, [10.0] * 7])
    X = np.vstack([c + rng.standard_normal((100, 7)) for c in centres])
    fit = fit_gmm(X, K=2, seed=1)
    means = fit.params.means[np.argsort(fit.params.means[:, 0])]
    assert np.max(np.abs(means - centres)) < 0.5
    # with 10 sigma separation the per-axis error is sampling noise only
    assert np.max(np.abs(means.mean(axis=1) - centres.mean(axis=1))) < 0.05
    assert fit.params.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_single_sample_reduces_k():
    x = np.array([[0.1, 0.2, 0.9, 0.8, 0.1, 0.2, 0.1]])
    fit = fit_gmm(x, K=2, seed=0)
    assert fit.params.n_components == 1
    np.testing.assert_allclose(fit.params.means[0], x[0], atol=1e-12)
    assert fit.notes and fit.requested_components == 2


def test_identical_rows_reduce_k_after_reinit():
    X = np.tile([0.5, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5], (6, 1))
    fit = fit_gmm(X, K=2, seed=0)
    assert fit.params.n_components == 1
    assert fit.reinits == 4
    assert any("re-init" in n for n in fit.notes)


@pytest.mark.parametrize("seed", range(20))
def test_em_monotone_and_covariance_floor(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 80))
    sep = rng.uniform(0, 4)
    X = np.vstack([rng.standard_normal((n, 7)), sep + rng.standard_normal((n, 7))])
    fit = fit_gmm(X, K=2, seed=seed, reg=1e-4)
    assert np.all(np.diff(fit.log_likelihood) >= -1e-9)
    for cov in fit.params.covariances:
        np.testing.assert_allclose(cov, cov.T, atol=0)
        assert np.linalg.eigvalsh(cov).min() >= 1e-4 * (1 - 1e-9)
    final = gmm_log_density(fit.params, X).sum()
    assert final == pytest.approx(fit.log_likelihood[-1], rel=1e-10)


def test_fit_deterministic():
    X = oracle_meta(np.random.default_rng(0), 60)
    a, b = fit_gmm(X, seed=4), fit_gmm(X, seed=4)
    assert a.params.means.tobytes() == b.params.means.tobytes()
    assert a.log_likelihood == b.log_likelihood


def test_fit_rejects_bad_args():
    with pytest.raises(ValueError):
        fit_gmm(np.zeros((3, 2)), reg=0)
    with pytest.raises(ValueError):
        fit_gmm(np.zeros((3, 2)), K=0)


# --- density ------------------------------------------------------------------------

def test_log_density_at_mean():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(7, 7))
    cov = A @ A.T + np.eye(7)
    mu = rng.normal(size=7)
    p = GmmParams(np.array([1.0]), mu[None], cov[None])
    expected = -3.5 * math.log(2 * math.pi) - 0.5 * np.linalg.slogdet(cov)[1]
    assert gmm_log_density(p, mu) == pytest.approx(expected, abs=1e-12)


def test_identical_components_equal_single():
    cov = np.diag([0.5, 2.0])
    one = GmmParams(np.array([1.0]), np.zeros((1, 2)), cov[None])
    two = GmmParams(np.array([0.3, 0.7]), np.zeros((2, 2)), np.stack([cov, cov]))
    x = np.random.default_rng(2).normal(size=(10, 2))
    np.testing.assert_allclose(gmm_log_density(two, x), gmm_log_density(one, x), atol=1e-12)


def test_density_integrates_to_one_monte_carlo():
    p = GmmParams(np.array([0.4, 0.6]), np.array([[-1.0, 0.0], [1.5, 0.5]]),
                  np.array([[[0.3, 0.1], [0.1, 0.2]], [[0.2, -0.05], [-0.05, 0.4]]]))
    lo, hi = np.array([-5.0, -5.0]), np.array([6.0, 5.0])
    rng = np.random.default_rng(3)
    pts = lo + (hi - lo) * rng.random((1_000_000, 2))
    integral = np.exp(gmm_log_density(p, pts)).mean() * np.prod(hi - lo)
    assert abs(integral - 1) < 0.05


def test_params_roundtrip():
    fit = fit_gmm(oracle_meta(np.random.default_rng(0), 40), seed=0)
    back = GmmParams.from_dict(fit.params.to_dict())
    np.testing.assert_array_equal(back.covariances, fit.params.covariances)


# --- constrained sampling -------------------------------------------------------------

def test_clip_example():
    raw = np.array([[1.3, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0]])
    v = constrain_meta(raw)[0]
    assert v[0] == 1.0 and v[2] == 1.0
    assert v[4] == pytest.approx(0.8) and v[5] == 1.0 and v[6] == 0.2


def test_sample_zero_is_empty():
    p = GmmParams(np.array([1.0]), np.zeros((1, 7)), np.eye(7)[None])
    b = sample_constrained(p, 0, 1, seed=0)
    assert len(b) == 0 and b.vectors.shape == (0, 7)
    with pytest.raises(ValueError):
        sample_constrained(p, -1, 0)


def test_samples_satisfy_identities_even_when_wide():
    p = GmmParams(np.array([0.5, 0.5]), np.array([[0.5] * 7, [1.2] * 7]), np.stack([np.eye(7)] * 2))
    b = sample_constrained(p, 5000, 0, seed=9)
    assert check_meta_identities(b.vectors)
    assert np.all(b.class_labels == 0)
    again = sample_constrained(p, 5000, 0, seed=9)
    assert again.vectors.tobytes() == b.vectors.tobytes()


@pytest.mark.parametrize("pct, total", [(0, 0), (25, 13), (50, 26), (100, 53), (200, 106)])
def test_synthetic_counts_table(pct, total):
    n0, n1 = synthetic_counts(53, pct)
    assert n0 + n1 == total
    assert 0 <= n1 - n0 <= 1


def test_synthetic_counts_rounding_and_errors():
    assert synthetic_counts(6, 25, allowed=None) == (1, 1)  # 1.5 -> 2
    assert synthetic_counts(2, 25) == (0, 0)  # 0.5 -> 0, ties to even
    assert synthetic_counts(10, 30, allowed=None) == (1, 2)  # odd total, extra to class 1
    with pytest.raises(ConfigError):
        synthetic_counts(53, 300)
    with pytest.raises(ConfigError):
        synthetic_counts(53, -5, allowed=None)


def test_ks_sanity_oracle_vs_sampler():
    rng = np.random.default_rng(11)
    train = oracle_meta(rng, 200)
    fit = fit_gmm(train, K=2, seed=0)
    synth = sample_constrained(fit.params, 400, 0, seed=1).vectors
    fresh = oracle_meta(rng, 400)
    passed = sum(ks_two_sample(fresh[:, j], synth[:, j])[1] > 0.01 for j in range(7))
    assert passed >= 6


# --- class-conditional wrapper -----------------------------------------------------------

def _meta_with_labels(seed):
    rng = np.random.default_rng(seed)
    y = np.array([0] * 34 + [1] * 19)
    p = np.clip(0.3 + 0.4 * y[:, None] + 0.15 * rng.standard_normal((53, 2)), 0, 1)
    return meta_matrix(p[:, 0], p[:, 1]), y


def test_class_conditional_scenario():
    X, y = _meta_with_labels(0)
    ids = [f"s{i}" for i in range(53)]
    g = ClassConditionalGMM(seed=2).fit(X, y, source_ids=ids, stream=1)
    assert g.fit_subjects_[1] == [ids[i] for i in np.flatnonzero(y == 1)]
    b = g.sample_scenario(200, seed=5, stream=1)
    assert len(b) == 106 and np.bincount(b.class_labels).tolist() == [53, 53]
    assert check_meta_identities(b.vectors)
    assert b.source["scenario_pct"] == 200
    assert len(set(b.ids())) == 106 and all(i.startswith("~synth") for i in b.ids())
    # sampling streams are per class, so a smaller dose is a prefix of a larger one
    small = g.sample_scenario(50, seed=5, stream=1)
    for c in (0, 1):
        np.testing.assert_array_equal(small.vectors[small.class_labels == c],
                                      b.vectors[b.class_labels == c][:13])
    assert set(g.to_dict()) == {"0", "1"}


def test_class_conditional_needs_both_classes():
    X, _ = _meta_with_labels(1)
    with pytest.raises(SingleClassError):
        ClassConditionalGMM().fit(X, np.zeros(53, int))
    with pytest.raises(SingleClassError):
        make_scenario_batches(X, np.zeros(53, int), 100)


def test_make_scenario_batches():
    X, y = _meta_with_labels(2)
    assert len(make_scenario_batches(X, y, 0)) == 0
    b = make_scenario_batches(X, y, 25, seed=3)
    assert len(b) == 13 and np.bincount(b.class_labels).tolist() == [6, 7]
    g = ClassConditionalGMM(seed=3).fit(X, y)
    again = make_scenario_batches(X, y, 25, seed=3, gmm=g)
    np.testing.assert_array_equal(again.vectors, b.vectors)


def test_synth_batch_concat_empty():
    assert len(SynthBatch.concat([SynthBatch.empty(), SynthBatch.empty()])) == 0


def test_estimator_wrapper():
    X = oracle_meta(np.random.default_rng(4), 100)
    est = GaussianMixtureEM(n_components=2, seed=0).fit(X)
    assert est.n_components_ == 2
    assert est.score(X) == pytest.approx(est.fit_.log_likelihood[-1] / 100)
    assert est.sample(10).shape == (10, 7)
    assert est.get_params()["reg"] == 1e-4
