"""Class-weighted L2 logistic regression fitted by gradient descent.

Objective, with bias ``b`` left unpenalized::

    L(w, b) = ||w||^2 / (2C) + sum_i s_i * CE(y_i, sigmoid(w.x_i + b))

where ``s_i`` are per-sample weights (class-balanced by default).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_binary_labels, check_matrix, check_sample_weight
from .exceptions import ConvergenceWarning, SingleClassError, UPMIError

PROB_CLIP = 1e-12


def balanced_sample_weights(y) -> np.ndarray:
    """``n_total / (2 * n_class(y_i))``; weights sum to ``n_total``."""
    y = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y, minlength=2).astype(float)
    if counts.min() == 0:
        raise SingleClassError("class-balanced weights need both classes")
    return len(y) / (2.0 * counts[y])


@dataclass(frozen=True, eq=False)
class LogisticModel:
    weights: np.ndarray
    bias: float
    C: float
    feature_names: tuple
    mean: np.ndarray
    scale: np.ndarray
    n_iter: int = 0
    converged: bool = True
    grad_norm: float = 0.0

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be > 0")
        if len(self.weights) != len(self.feature_names):
            raise ValueError("weights and feature_names differ in length")
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("standardizer scales must be > 0")

    def to_dict(self):
        return {
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "C": float(self.C),
            "feature_names": list(self.feature_names),
            "standardizer": {"mean": [float(v) for v in self.mean],
                             "scale": [float(v) for v in self.scale]},
            "n_iter": int(self.n_iter),
            "converged": bool(self.converged),
            "grad_norm": float(self.grad_norm),
        }


def loss_and_gradient(params, X, y, sample_weight, C=1.0):
    """Objective value and its gradient w.r.t. ``params = [w..., b]``.

    ``X`` is expected already standardized.
    """
    params = np.asarray(params, dtype=float)
    w, b = params[:-1], params[-1]
    z = X @ w + b
    p = np.clip(expit(z), PROB_CLIP, 1.0 - PROB_CLIP)
    ce = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    loss = float(w @ w / (2.0 * C) + sample_weight @ ce)
    resid = sample_weight * (expit(z) - y)
    grad = np.empty_like(params)
    grad[:-1] = X.T @ resid + w / C
    grad[-1] = resid.sum()
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise UPMIError("non-finite loss or gradient; check inputs for corrupt values")
    return loss, grad


def _standardize_fit(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    if np.any(scale <= 0):
        bad = np.flatnonzero(scale <= 0).tolist()
        raise ValueError(f"zero-variance feature column(s) {bad}; remove them before fitting")
    return mean, scale


def _minimize(Xs, y, sw, C, tol, max_iter):
    """Armijo gradient descent on the standardized problem, from zero."""
    theta = np.zeros(Xs.shape[1] + 1)
    f, g = loss_and_gradient(theta, Xs, y, sw, C)
    history = [f]
    # 1/L for L = ||[X 1]||^2 * max(sw) / 4 + 1/C bounds the curvature
    Xa = np.column_stack([Xs, np.ones(len(Xs))])
    step = 1.0 / (np.linalg.norm(Xa, 2) ** 2 * sw.max() / 4.0 + 1.0 / C)
    armijo_c, beta = 1e-4, 0.5
    n_iter = 0
    gnorm = float(np.max(np.abs(g)))
    while gnorm >= tol and n_iter < max_iter:
        gg = float(g @ g)
        alpha = step
        for _ in range(60):
            cand = theta - alpha * g
            f_new, g_new = loss_and_gradient(cand, Xs, y, sw, C)
            if f_new <= f - armijo_c * alpha * gg:
                break
            alpha *= beta
        else:
            break
        s = cand - theta
        r = g_new - g
        sr = float(s @ r)
        step = float(s @ s) / sr if sr > 0 else alpha * 2.0
        theta, f, g = cand, f_new, g_new
        history.append(f)
        n_iter += 1
        gnorm = float(np.max(np.abs(g)))
    return theta, history, n_iter, gnorm


def fit_logistic(X, y, sample_weight=None, C=1.0, tol=1e-6, max_iter=500,
                 feature_names=None, return_history=False):
    """Fit by full-batch gradient descent with Armijo backtracking.

    Trial steps use the Barzilai-Borwein length; backtracking halves the step
    until the sufficient-decrease test passes, so accepted steps never raise
    the objective. Starts from zero.
    """
    X = check_matrix(X)
    y = check_binary_labels(y, len(X))
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise SingleClassError("logistic regression needs >= 2 subjects and both classes")
    if C <= 0:
        raise ValueError("C must be > 0")
    sw = balanced_sample_weights(y) if sample_weight is None else check_sample_weight(sample_weight, len(y))
    mean, scale = _standardize_fit(X)
    Xs = (X - mean) / scale

    theta, history, n_iter, gnorm = _minimize(Xs, y, sw, C, tol, max_iter)
    converged = gnorm < tol
    if not converged:
        warnings.warn(
            f"logistic fit stopped after {n_iter} iterations with gradient inf-norm {gnorm:.3e}",
            ConvergenceWarning, stacklevel=2,
        )
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"x{i}" for i in range(X.shape[1]))
    model = LogisticModel(theta[:-1].copy(), float(theta[-1]), float(C), names, mean, scale,
                          n_iter, converged, gnorm)
    if return_history:
        return model, np.array(history)
    return model


def decision_function(model: LogisticModel, X):
    X = check_matrix(X, n_features=len(model.weights))
    return ((X - model.mean) / model.scale) @ model.weights + model.bias


def predict_proba(model: LogisticModel, X) -> np.ndarray:
    """Class-1 probabilities; ``X`` is in raw (unstandardized) units."""
    return expit(decision_function(model, X))


class WeightedLogisticRegression(ClassifierMixin, BaseEstimator):
    """sklearn-compatible wrapper around :func:`fit_logistic`.

    ``class_weight="balanced"`` applies ``n / (2 n_c)`` weights when no
    ``sample_weight`` is given; ``None`` uses unit weights.
    """

    def __init__(self, C=1.0, tol=1e-6, max_iter=500, class_weight="balanced"):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.class_weight = class_weight

    def fit(self, X, y, sample_weight=None, feature_names=None):
        y = check_binary_labels(y)
        if sample_weight is None and self.class_weight is None:
            sample_weight = np.ones(len(y))
        self.model_ = fit_logistic(X, y, sample_weight, self.C, self.tol, self.max_iter,
                                   feature_names)
        self.coef_ = self.model_.weights[None, :]
        self.intercept_ = np.array([self.model_.bias])
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = len(self.model_.weights)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return decision_function(self.model_, X)

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = predict_proba(self.model_, X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)


@dataclass(frozen=True)
class BaseConfig:
    """Settings shared by both modality classifiers."""

    C: float = 1.0
    tol: float = 1e-6
    max_iter: int = 500

    def to_dict(self):
        return dict(self.__dict__)
