"""Input validation helpers shared by the estimators."""
import numpy as np
from sklearn.utils import check_array

from .exceptions import SingleClassError


def check_matrix(X, n_features=None):
    X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=1)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    return X


def check_binary_labels(y, n_samples=None, require_both=False):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if n_samples is not None and len(y) != n_samples:
        raise ValueError(f"{len(y)} labels for {n_samples} samples")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if require_both and len(np.unique(y)) < 2:
        raise SingleClassError("both classes must be present")
    return y


def check_sample_weight(sample_weight, n_samples):
    sw = np.asarray(sample_weight, dtype=float)
    if sw.shape != (n_samples,):
        raise ValueError(f"sample_weight must have shape ({n_samples},), got {sw.shape}")
    if not np.all(np.isfinite(sw)) or np.any(sw <= 0):
        raise ValueError("sample weights must be finite and > 0")
    return sw
