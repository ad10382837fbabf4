import json
import math
import warnings

import numpy as np
import pytest

from upmi.exceptions import ConvergenceWarning, SingleClassError, UPMIError
from upmi.logistic import (
    LogisticModel,
    WeightedLogisticRegression,
    _minimize,
    balanced_sample_weights,
    fit_logistic,
    loss_and_gradient,
    predict_proba,
)


def _problem(seed, n=40, d=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] + 0.5 * rng.normal(size=n) > 0.3).astype(np.int64)
    return X, y


def test_balanced_weights():
    y = np.array([0] * 43 + [1] * 24)
    w = balanced_sample_weights(y)
    assert w[0] == pytest.approx(67 / 86)
    assert w[-1] == pytest.approx(67 / 48)
    assert w.sum() == pytest.approx(67)
    with pytest.raises(SingleClassError):
        balanced_sample_weights([1, 1])


def test_loss_at_zero_is_n_ln2():
    X, y = _problem(0)
    sw = balanced_sample_weights(y)
    loss, _ = loss_and_gradient(np.zeros(5), X, y, sw, 1.0)
    assert loss == pytest.approx(len(y) * math.log(2), rel=1e-12)


def test_penalty_vanishes_as_c_grows():
    X, y = _problem(1)
    sw = np.ones(len(y))
    theta = np.array([0.3, -0.2, 0.1, 0.5, 0.2])
    l_big, _ = loss_and_gradient(theta, X, y, sw, 1e12)
    l_one, _ = loss_and_gradient(theta, X, y, sw, 1.0)
    assert l_one - l_big == pytest.approx(theta[:-1] @ theta[:-1] / 2, rel=1e-9)


def test_bias_not_penalized():
    X, y = _problem(2)
    sw = np.ones(len(y))
    a, _ = loss_and_gradient(np.array([0, 0, 0, 0, 3.0]), X, y, sw, 1e-3)
    b, _ = loss_and_gradient(np.array([0, 0, 0, 0, 3.0]), X, y, sw, 1e3)
    assert a == b


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(7)
    X, y = _problem(3)
    sw = balanced_sample_weights(y)
    h = 1e-6
    for _ in range(20):
        theta = rng.normal(scale=1.0, size=5)
        _, g = loss_and_gradient(theta, X, y, sw, 1.0)
        fd = np.empty_like(theta)
        for j in range(len(theta)):
            e = np.zeros_like(theta)
            e[j] = h
            fd[j] = (loss_and_gradient(theta + e, X, y, sw, 1.0)[0]
                     - loss_and_gradient(theta - e, X, y, sw, 1.0)[0]) / (2 * h)
        assert np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-5


def test_objective_midpoint_convexity():
    rng = np.random.default_rng(8)
    X, y = _problem(4)
    sw = balanced_sample_weights(y)
    for _ in range(200):
        a, b = rng.normal(scale=3, size=(2, 5))
        la = loss_and_gradient(a, X, y, sw, 1.0)[0]
        lb = loss_and_gradient(b, X, y, sw, 1.0)[0]
        lm = loss_and_gradient((a + b) / 2, X, y, sw, 1.0)[0]
        assert lm <= (la + lb) / 2 + 1e-9


def test_non_finite_signalled():
    X, y = _problem(5)
    X[0, 0] = np.nan
    with pytest.raises(UPMIError):
        loss_and_gradient(np.zeros(5), X, y, np.ones(len(y)), 1.0)


def test_minority_duplication_invariance():
    X, y = _problem(6)
    Xs = (X - X.mean(0)) / X.std(0)
    sw = balanced_sample_weights(y)
    minority = int(np.argmin(np.bincount(y)))
    dup = np.flatnonzero(y == minority)
    X2 = np.vstack([Xs, Xs[dup]])
    y2 = np.concatenate([y, y[dup]])
    sw2 = np.concatenate([sw, sw[dup]])
    sw2[dup] /= 2
    sw2[len(y):] /= 2
    tol = 1e-6
    a = _minimize(Xs, y, sw, 1.0, tol, 500)[0]
    b = _minimize(X2, y2, sw2, 1.0, tol, 500)[0]
    assert np.max(np.abs(a - b)) < tol * 10


def test_fit_converges_and_history_monotone():
    X, y = _problem(9)
    model, hist = fit_logistic(X, y, return_history=True)
    assert model.converged and model.grad_norm < 1e-6
    assert np.all(np.diff(hist) <= 0)


def test_fit_deterministic_bitwise():
    X, y = _problem(10)
    a, b = fit_logistic(X, y), fit_logistic(X, y)
    assert a.weights.tobytes() == b.weights.tobytes()
    assert a.bias == b.bias


def test_separable_1d_finite_and_perfect():
    X = np.array([[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    m = fit_logistic(X, y, C=1.0)
    assert np.all(np.isfinite(m.weights)) and abs(m.weights[0]) < 50
    assert np.array_equal(predict_proba(m, X) > 0.5, y == 1)


def test_symmetric_data_zero_bias():
    rng = np.random.default_rng(11)
    half = rng.normal(size=(15, 3))
    X = np.vstack([half, -half])
    y = np.array([1] * 15 + [0] * 15)
    m = fit_logistic(X, y)
    assert abs(m.bias) < 1e-6


def test_fitted_loss_beats_random_probes():
    X, y = _problem(12)
    m = fit_logistic(X, y)
    Xs = (X - m.mean) / m.scale
    sw = balanced_sample_weights(y)
    best = loss_and_gradient(np.append(m.weights, m.bias), Xs, y, sw, 1.0)[0]
    rng = np.random.default_rng(13)
    opt = np.append(m.weights, m.bias)
    for i in range(100):
        probe = rng.normal(scale=2, size=5) if i % 2 else opt + rng.normal(scale=0.05, size=5)
        assert best <= loss_and_gradient(probe, Xs, y, sw, 1.0)[0] + 1e-12


def test_single_class_rejected():
    with pytest.raises(SingleClassError):
        fit_logistic(np.ones((4, 1)) * np.arange(4)[:, None], [1, 1, 1, 1])


def test_convergence_warning_carries_norm():
    X, y = _problem(14)
    with pytest.warns(ConvergenceWarning, match="gradient inf-norm"):
        m = fit_logistic(X, y, max_iter=1)
    assert not m.converged and m.grad_norm > 0


def test_zero_variance_feature_rejected():
    X, y = _problem(15)
    X[:, 1] = 2.0
    with pytest.raises(ValueError, match="zero-variance"):
        fit_logistic(X, y)


def test_predict_proba_examples():
    m0 = LogisticModel(np.zeros(2), 0.0, 1.0, ("a", "b"), np.zeros(2), np.ones(2))
    assert np.all(predict_proba(m0, np.random.default_rng(0).normal(size=(5, 2))) == 0.5)
    m50 = LogisticModel(np.zeros(2), 50.0, 1.0, ("a", "b"), np.zeros(2), np.ones(2))
    assert np.all(predict_proba(m50, np.zeros((3, 2))) > 0.999)
    m = LogisticModel(np.array([1.0, -1.0]), 0.0, 1.0, ("a", "b"), np.zeros(2), np.ones(2))
    grid = np.column_stack([np.linspace(-3, 3, 20), np.zeros(20)])
    assert np.all(np.diff(predict_proba(m, grid)) > 0)
    with pytest.raises(ValueError):
        predict_proba(m, np.zeros((2, 3)))


def test_model_invariants():
    with pytest.raises(ValueError):
        LogisticModel(np.zeros(2), 0.0, 0.0, ("a", "b"), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        LogisticModel(np.zeros(2), 0.0, 1.0, ("a",), np.zeros(2), np.ones(2))


def test_model_json_roundtrip():
    X, y = _problem(16)
    d = fit_logistic(X, y, feature_names=list("abcd")).to_dict()
    back = json.loads(json.dumps(d))
    assert back["feature_names"] == list("abcd")
    assert len(back["weights"]) == 4 and len(back["standardizer"]["scale"]) == 4


def test_estimator_wrapper():
    X, y = _problem(17)
    est = WeightedLogisticRegression(C=0.5).fit(X, y)
    direct = fit_logistic(X, y, C=0.5)
    np.testing.assert_allclose(est.predict_proba(X)[:, 1], predict_proba(direct, X))
    assert est.get_params()["C"] == 0.5
    assert set(est.predict(X)) <= {0, 1}
    assert est.score(X, y) > 0.7
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        WeightedLogisticRegression().fit(X, y)
