"""Paired fold-wise comparisons and two-sample distribution tests."""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import kolmogorov, stdtr

from .exceptions import DegenerateStatisticError, DegenerateStatisticWarning
from .meta_features import META_NAMES


def _paired_diffs(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be 1-D and equal length, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise ValueError("paired comparison needs at least 2 pairs")
    return a - b


def paired_t_test(a, b):
    """Two-sided paired t-test with ``n - 1`` degrees of freedom -> ``(t, p)``."""
    d = _paired_diffs(a, b)
    n = len(d)
    sd = d.std(ddof=1)
    if sd == 0:
        raise DegenerateStatisticError("zero variance of paired differences; t is undefined")
    t = d.mean() / (sd / math.sqrt(n))
    p = 2.0 * stdtr(n - 1, -abs(t))
    return float(t), float(min(p, 1.0))


def cohens_d_paired(a, b) -> float:
    """Mean difference over the (n-1)-normalized std of differences.

    Zero-variance differences give ``+/-inf`` (or ``nan`` when the mean is
    also zero) together with a :class:`DegenerateStatisticWarning`.
    """
    d = _paired_diffs(a, b)
    sd = d.std(ddof=1)
    m = d.mean()
    if sd == 0:
        warnings.warn("zero variance of paired differences; Cohen's d is unbounded",
                      DegenerateStatisticWarning, stacklevel=2)
        return math.copysign(math.inf, m) if m != 0 else math.nan
    return float(m / sd)


def bootstrap_ci_diff(a, b, n_boot=10000, level=0.95, seed=0):
    """Percentile bootstrap CI for the mean of the paired differences ``a - b``."""
    d = _paired_diffs(a, b)
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(d), size=(n_boot, len(d)))
    means = d[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def ks_statistic(x, y) -> float:
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    if len(x) == 0 or len(y) == 0:
        raise ValueError("KS test needs two nonempty samples")
    pooled = np.concatenate([x, y])
    fx = np.searchsorted(x, pooled, side="right") / len(x)
    fy = np.searchsorted(y, pooled, side="right") / len(y)
    return float(np.max(np.abs(fx - fy)))


def ks_two_sample(x, y):
    """Two-sample KS ``(D, p)``; p from the asymptotic Kolmogorov law with
    the Stephens effective-n correction ``(sqrt(en) + 0.12 + 0.11/sqrt(en)) * D``."""
    D = ks_statistic(x, y)
    n, m = len(x), len(y)
    en = math.sqrt(n * m / (n + m))
    p = float(kolmogorov((en + 0.12 + 0.11 / en) * D))
    return D, min(max(p, 0.0), 1.0)


def validate_synth_quality(real_meta, synth_meta, alpha=0.05, names=META_NAMES):
    """Per-dimension KS between real and synthetic meta-features.

    A dimension is flagged when its p-value is ``<= alpha``.
    """
    real_meta = np.atleast_2d(np.asarray(real_meta, dtype=float))
    synth_meta = np.atleast_2d(np.asarray(synth_meta, dtype=float))
    if real_meta.size == 0 or synth_meta.size == 0:
        raise ValueError("both real and synthetic samples must be nonempty")
    if real_meta.shape[1] != synth_meta.shape[1]:
        raise ValueError("real and synthetic meta-features differ in dimension")
    dims = []
    for j in range(real_meta.shape[1]):
        D, p = ks_two_sample(real_meta[:, j], synth_meta[:, j])
        dims.append({"name": names[j] if j < len(names) else f"dim{j}",
                     "D": D, "p": p, "flagged": p <= alpha})
    ps = [d["p"] for d in dims]
    return {
        "alpha": alpha,
        "n_real": len(real_meta),
        "n_synth": len(synth_meta),
        "dimensions": dims,
        "mean_p": float(np.mean(ps)),
        "n_similar": sum(not d["flagged"] for d in dims),
        "flagged": [d["name"] for d in dims if d["flagged"]],
    }


def format_ks_summary(report) -> str:
    lines = [f"{'feature':<14} {'D':>7} {'p':>7}"]
    for d in report["dimensions"]:
        mark = "  *" if d["flagged"] else ""
        lines.append(f"{d['name']:<14} {d['D']:7.4f} {d['p']:7.4f}{mark}")
    k = len(report["dimensions"])
    lines.append(
        f"{report['n_similar']}/{k} features similar (p > {report['alpha']}); "
        f"average p-value {report['mean_p']:.3f}"
    )
    if report["flagged"]:
        lines.append("flagged: " + ", ".join(report["flagged"]))
    return "\n".join(lines)
