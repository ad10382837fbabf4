"""Class-conditional Gaussian mixtures over meta-features and the
validity-constrained synthetic sampler."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp, ndtr
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_is_fitted

from ._rng import STREAM_GMM, STREAM_SAMPLE, derive_rng, derive_seed
from ._validation import check_binary_labels, check_matrix
from .exceptions import ConfigError, SingleClassError
from .meta_features import N_META, meta_matrix

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
DEGENERATE_WEIGHT = 1e-6
MAX_REINIT = 3
DEFAULT_SCENARIOS = (0, 25, 50, 100, 200)


@dataclass
class GmmParams:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def n_features(self):
        return self.means.shape[1]

    def cholesky(self):
        return np.linalg.cholesky(self.covariances)

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["weights"], float), np.asarray(d["means"], float),
                   np.asarray(d["covariances"], float))


@dataclass
class GmmFit:
    """A fitted mixture plus its EM trace."""

    params: GmmParams
    log_likelihood: list
    n_iter: int
    converged: bool
    requested_components: int
    reinits: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "log_likelihood": self.log_likelihood,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "requested_components": self.requested_components,
            "reinits": self.reinits,
            "notes": self.notes,
        }


def _component_log_prob(X, means, chol):
    """(n, K) log N(x | mu_k, Sigma_k) via Cholesky factors."""
    n, d = X.shape
    out = np.empty((n, len(means)))
    for k, (mu, L) in enumerate(zip(means, chol)):
        z = np.linalg.solve(L, (X - mu).T)
        maha = np.sum(z * z, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        out[:, k] = -0.5 * (d * LOG_2PI + logdet + maha)
    return out


def _weighted_log_prob(X, params):
    return _component_log_prob(X, params.means, params.cholesky()) + np.log(params.weights)


def gmm_log_density(params: GmmParams, x) -> np.ndarray | float:
    """log p(x) under the mixture; ``x`` may be one vector or an (n, d) array."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    with np.errstate(divide="ignore"):
        lp = logsumexp(_weighted_log_prob(X, params), axis=1)
    return float(lp[0]) if single else lp


def _kmeanspp_centers(X, K, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min([np.sum((X - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(X[idx])
    return np.array(centers)


def _m_step(X, resp, reg):
    n, d = X.shape
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    means = (resp.T @ X) / nk[:, None]
    covs = np.empty((len(nk), d, d))
    for k in range(len(nk)):
        diff = X - means[k]
        cov = (resp[:, k, None] * diff).T @ diff / nk[k]
        cov = 0.5 * (cov + cov.T)
        cov.flat[:: d + 1] += reg
        covs[k] = cov
    return GmmParams(nk / n, means, covs)


def _log_likelihood(X, params):
    wlp = _weighted_log_prob(X, params)
    norm = logsumexp(wlp, axis=1)
    return float(norm.sum()), wlp, norm


def _em(X, K, rng, reg, tol, max_iter):
    """One EM run. Returns (params, history, n_iter, converged, degenerate, rejected).

    With ``reg`` on the diagonal the M-step is no longer the exact maximizer,
    so a step that would lower the log-likelihood is rejected and the run
    stops at the current parameters.
    """
    n = len(X)
    centers = _kmeanspp_centers(X, K, rng)
    d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
    resp = np.zeros((n, K))
    resp[np.arange(n), np.argmin(d2, axis=1)] = 1.0
    params = _m_step(X, resp, reg)
    if params.weights.min() < DEGENERATE_WEIGHT:
        return params, [], 0, False, True, False
    ll, wlp, norm = _log_likelihood(X, params)
    history = [ll]
    for n_iter in range(1, max_iter + 1):
        resp = np.exp(wlp - norm[:, None])
        candidate = _m_step(X, resp, reg)
        if candidate.weights.min() < DEGENERATE_WEIGHT:
            return candidate, history, n_iter, False, True, False
        ll_new, wlp_new, norm_new = _log_likelihood(X, candidate)
        if ll_new < ll:
            return params, history, n_iter, True, False, True
        params, ll, wlp, norm = candidate, ll_new, wlp_new, norm_new
        history.append(ll)
        if (history[-1] - history[-2]) / n < tol:
            return params, history, n_iter, True, False, False
    return params, history, max_iter, False, False, False


def fit_gmm(X, K=2, seed=0, reg=1e-4, tol=1e-6, max_iter=200, n_init=1) -> GmmFit:
    """EM for a full-covariance mixture.

    ``reg`` is added to every covariance diagonal in every M-step. Fewer
    samples than components, or a component whose weight collapses below
    1e-6 on ``MAX_REINIT`` consecutive restarts, reduces ``K`` by one.
    ``log_likelihood`` records the total data log-likelihood after every
    accepted M-step; its last entry belongs to the returned parameters.
    """
    X = check_matrix(X)
    if reg <= 0:
        raise ValueError("reg must be > 0")
    if K < 1:
        raise ValueError("K must be >= 1")
    n = len(X)
    requested = K
    notes = []
    if n < K:
        notes.append(f"{n} sample(s) < {K} components; reduced to 1")
        logger.info(notes[-1])
        K = 1
    reinits = 0
    while True:
        best = None
        attempt = 0
        while attempt <= MAX_REINIT:
            degenerate = False
            for init in range(n_init):
                rng = derive_rng(seed, STREAM_GMM, K, attempt, init)
                params, hist, n_iter, conv, degen, rejected = _em(X, K, rng, reg, tol, max_iter)
                if degen:
                    degenerate = True
                    break
                if best is None or hist[-1] > best[1][-1]:
                    best = (params, hist, n_iter, conv, rejected)
            if not degenerate:
                break
            best = None
            attempt += 1
            reinits += 1
        if best is not None:
            break
        notes.append(f"degenerate component after {MAX_REINIT} re-inits; K {K} -> {K - 1}")
        logger.info(notes[-1])
        K -= 1
    params, hist, n_iter, conv, rejected = best
    if rejected:
        notes.append("stopped where a regularized M-step would lower the log-likelihood")
    return GmmFit(params, hist, n_iter, conv, requested, reinits, notes)


# --- sampling -------------------------------------------------------------------

@dataclass
class SynthBatch:
    vectors: np.ndarray
    class_labels: np.ndarray
    source: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.class_labels)

    @classmethod
    def empty(cls, source=None):
        return cls(np.empty((0, N_META)), np.empty(0, dtype=np.int64), dict(source or {}))

    @classmethod
    def concat(cls, batches, source=None):
        batches = [b for b in batches if len(b)]
        if not batches:
            return cls.empty(source)
        return cls(np.vstack([b.vectors for b in batches]),
                   np.concatenate([b.class_labels for b in batches]), dict(source or {}))

    def ids(self):
        return [f"~synth-c{c}-{i:06d}" for i, c in enumerate(self.class_labels)]

    def to_dict(self):
        return {"vectors": self.vectors.tolist(), "class_labels": self.class_labels.tolist(),
                "source": self.source}


def constrain_meta(raw) -> np.ndarray:
    """Clip the two probability columns to [0, 1] and recompute the rest."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    return meta_matrix(np.clip(raw[:, 0], 0.0, 1.0), np.clip(raw[:, 1], 0.0, 1.0))


def sample_raw(params: GmmParams, n, rng) -> np.ndarray:
    # one row-major block per call: row i depends only on the stream position,
    # so the first m draws of a size-n request equal a size-m request
    block = rng.standard_normal((n, params.n_features + 1))
    cum = np.cumsum(params.weights)
    comp = np.minimum(np.searchsorted(cum / cum[-1], ndtr(block[:, 0]), side="right"),
                      params.n_components - 1)
    z = block[:, 1:]
    chol = params.cholesky()
    out = np.empty((n, params.n_features))
    for k in range(params.n_components):
        rows = comp == k
        out[rows] = params.means[k] + z[rows] @ chol[k].T
    return out


def sample_constrained(params: GmmParams, n: int, cls: int, seed=0, rng=None) -> SynthBatch:
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return SynthBatch.empty({"seed": seed, "class": cls})
    rng = rng if rng is not None else np.random.default_rng(seed)
    vectors = constrain_meta(sample_raw(params, n, rng))
    return SynthBatch(vectors, np.full(n, cls, dtype=np.int64), {"seed": seed, "class": cls})


def synthetic_counts(n_real: int, scenario_pct, allowed=DEFAULT_SCENARIOS) -> tuple:
    """(n_class0, n_class1) for a dose of ``scenario_pct`` percent of ``n_real``.

    The total rounds to the nearest integer with ties to even (53 at 50% gives
    26, as in the published dose table); an odd total gives the extra sample
    to class 1.
    """
    if allowed is not None and scenario_pct not in allowed:
        raise ConfigError(f"scenario {scenario_pct}% not in allowed set {sorted(allowed)}")
    if scenario_pct < 0:
        raise ConfigError("scenario percentage must be >= 0")
    exact = Fraction(scenario_pct) * n_real / 100
    total = round(exact)
    n0 = total // 2
    return n0, total - n0


class GaussianMixtureEM(DensityMixin, BaseEstimator):
    """Full-covariance Gaussian mixture fitted by EM (see :func:`fit_gmm`)."""

    def __init__(self, n_components=2, reg=1e-4, tol=1e-6, max_iter=200, n_init=1, seed=0):
        self.n_components = n_components
        self.reg = reg
        self.tol = tol
        self.max_iter = max_iter
        self.n_init = n_init
        self.seed = seed

    def fit(self, X, y=None):
        self.fit_ = fit_gmm(X, self.n_components, self.seed, self.reg, self.tol,
                            self.max_iter, self.n_init)
        self.params_ = self.fit_.params
        self.weights_ = self.params_.weights
        self.means_ = self.params_.means
        self.covariances_ = self.params_.covariances
        self.n_components_ = self.params_.n_components
        self.converged_ = self.fit_.converged
        self.n_iter_ = self.fit_.n_iter
        self.n_features_in_ = self.params_.n_features
        return self

    def score_samples(self, X):
        check_is_fitted(self, "params_")
        return gmm_log_density(self.params_, check_matrix(X, self.n_features_in_))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def sample(self, n_samples=1, seed=None):
        check_is_fitted(self, "params_")
        rng = np.random.default_rng(self.seed if seed is None else seed)
        return sample_raw(self.params_, n_samples, rng)


class ClassConditionalGMM(BaseEstimator):
    """One mixture per class over 7-D meta-features, with constrained sampling.

    ``source_ids`` given to ``fit`` are kept in ``fit_subjects_`` so leakage
    audits can check which subjects shaped each class density.
    """

    def __init__(self, n_components=2, reg=1e-4, tol=1e-6, max_iter=200, n_init=1, seed=0):
        self.n_components = n_components
        self.reg = reg
        self.tol = tol
        self.max_iter = max_iter
        self.n_init = n_init
        self.seed = seed

    def fit(self, X, y, source_ids=None, stream=0):
        X = check_matrix(X)
        y = check_binary_labels(y, len(X))
        if len(np.unique(y)) < 2:
            raise SingleClassError("class-conditional mixtures need both classes")
        self.fits_ = {}
        self.fit_subjects_ = {}
        for c in (0, 1):
            rows = np.flatnonzero(y == c)
            self.fits_[c] = fit_gmm(X[rows], self.n_components, _class_seed(self.seed, stream, c),
                                    self.reg, self.tol, self.max_iter, self.n_init)
            if source_ids is not None:
                self.fit_subjects_[c] = [source_ids[i] for i in rows]
        self.params_ = {c: f.params for c, f in self.fits_.items()}
        self.n_real_ = len(y)
        return self

    def sample_class(self, cls, n, seed, stream=0):
        check_is_fitted(self, "params_")
        rng = derive_rng(seed, STREAM_SAMPLE, stream, cls)
        batch = sample_constrained(self.params_[cls], n, cls, rng=rng)
        batch.source.update({"seed": seed, "stream": stream})
        return batch

    def sample_scenario(self, scenario_pct, seed, stream=0, n_real=None,
                        allowed=DEFAULT_SCENARIOS) -> SynthBatch:
        check_is_fitted(self, "params_")
        n_real = self.n_real_ if n_real is None else n_real
        n0, n1 = synthetic_counts(n_real, scenario_pct, allowed)
        source = {"seed": seed, "stream": stream, "scenario_pct": scenario_pct}
        return SynthBatch.concat(
            [self.sample_class(0, n0, seed, stream), self.sample_class(1, n1, seed, stream)], source
        )

    def to_dict(self):
        check_is_fitted(self, "params_")
        return {str(c): f.to_dict() for c, f in self.fits_.items()}


def _class_seed(seed, stream, cls):
    return derive_seed(seed, STREAM_GMM, stream, cls)


def make_scenario_batches(train_meta, train_labels, scenario_pct, seed=0, gmm=None,
                          allowed=DEFAULT_SCENARIOS, stream=0, **gmm_kwargs) -> SynthBatch:
    """Synthetic batch of ``scenario_pct`` percent of the real training count.

    A fitted :class:`ClassConditionalGMM` may be passed to reuse mixtures
    across doses; otherwise one is fitted (only when the dose is nonzero).
    """
    train_meta = np.asarray(train_meta, dtype=float)
    train_labels = check_binary_labels(train_labels, len(train_meta))
    if len(train_labels) == 0 or len(np.unique(train_labels)) < 2:
        raise SingleClassError("training meta-features must contain both classes")
    n0, n1 = synthetic_counts(len(train_labels), scenario_pct, allowed)
    if n0 + n1 == 0:
        return SynthBatch.empty({"seed": seed, "stream": stream, "scenario_pct": scenario_pct})
    if gmm is None:
        gmm = ClassConditionalGMM(seed=seed, **gmm_kwargs).fit(train_meta, train_labels, stream=stream)
    return gmm.sample_scenario(scenario_pct, seed, stream, len(train_labels), allowed)
