import itertools
import math
import warnings
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upmi.exceptions import DegenerateStatisticError, DegenerateStatisticWarning, SingleClassError
from upmi.metrics import (
    Confusion,
    confusion_counts,
    f1_score,
    mean_roc,
    roc_auc,
    sensitivity_specificity,
    trapezoid_area,
)
from upmi.stats import (
    bootstrap_ci_diff,
    cohens_d_paired,
    format_ks_summary,
    ks_statistic,
    ks_two_sample,
    paired_t_test,
    validate_synth_quality,
)


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = Fraction(0)
    for p in pos:
        for q in neg:
            total += 1 if p > q else Fraction(1, 2) if p == q else 0
    return total / (len(pos) * len(neg))


# --- AUC / ROC ---------------------------------------------------------------------

def test_auc_trivial_cases():
    assert roc_auc([0.3] * 6, [0, 1, 0, 1, 1, 0])[0] == 0.5
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])[0] == 1.0
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1])[0] == 0.0
    with pytest.raises(SingleClassError):
        roc_auc([0.1, 0.2], [1, 1])


def test_auc_random_20_sample_brute_force():
    rng = np.random.default_rng(0)
    scores = np.round(rng.random(20), 1)  # forces ties
    labels = np.array([0, 1] * 10)
    assert roc_auc(scores, labels)[0] == float(brute_auc(scores, labels))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=50))
def test_auc_matches_brute_force_and_trapezoid(pairs):
    scores = np.array([p[0] / 6 for p in pairs])
    labels = np.array([p[1] for p in pairs])
    if len(set(labels.tolist())) < 2:
        labels[0], labels[1] = 0, 1
    auc, pts = roc_auc(scores, labels)
    assert auc == pytest.approx(float(brute_auc(scores, labels)), abs=1e-15)
    assert abs(trapezoid_area(pts) - auc) < 1e-12
    arr = np.array(pts)
    assert tuple(arr[0]) == (0.0, 0.0) and tuple(arr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(arr[:, 0]) >= 0) and np.all(np.diff(arr[:, 1]) >= 0)


def test_mean_roc_grid():
    curves = [roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])[1],
              roc_auc([0.2, 0.9, 0.5, 0.7], [0, 1, 0, 1])[1]]
    m = mean_roc(curves)
    assert len(m["fpr"]) == 101 and m["fpr"][0] == 0.0 and m["fpr"][-1] == 1.0
    assert m["tpr_mean"][-1] == 1.0
    assert np.all(np.diff(m["tpr_mean"]) >= -1e-12)
    perfect = mean_roc([roc_auc([0, 1], [0, 1])[1]] * 3)
    assert perfect["tpr_mean"][0] == 1.0


# --- confusion-derived -------------------------------------------------------------------

def test_reference_counts():
    c = Confusion(tp=18, fp=8, tn=35, fn=6)
    sens, spec = sensitivity_specificity(c)
    assert sens == 0.75
    assert spec == 35 / 43 and round(spec, 3) == 0.814
    assert f1_score(c) == 0.72


def test_confusion_trivial_cases():
    y = np.array([0, 1, 1, 0, 1])
    c = confusion_counts(y, y)
    assert f1_score(c) == 1.0 and sensitivity_specificity(c) == (1.0, 1.0)
    assert c.total == 5
    none = confusion_counts(y, np.zeros(5, int))
    assert f1_score(none) == 0.0
    assert (c + none).total == 10


def test_undefined_scores_are_none_with_warning():
    c = confusion_counts([0, 0, 0], [0, 0, 0])
    with pytest.warns(DegenerateStatisticWarning):
        assert f1_score(c) is None
    with pytest.warns(DegenerateStatisticWarning):
        assert sensitivity_specificity(c)[0] is None


# --- paired statistics -----------------------------------------------------------------

DIFFS_A = np.array([2.0, 2.0, 2.0, 2.0, 3.0])
DIFFS_B = np.ones(5)


def t_p_oracle(t, df):
    """Two-sided p by direct quadrature of the Student t density."""
    mpmath.mp.dps = 30
    c = mpmath.gamma((df + 1) / mpmath.mpf(2)) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / mpmath.mpf(2)))
    pdf = lambda x: c * (1 + x * x / df) ** (-(df + 1) / mpmath.mpf(2))  # noqa: E731
    return float(2 * mpmath.quad(pdf, [abs(t), mpmath.inf]))


def test_t_test_hand_example():
    t, p = paired_t_test(DIFFS_A, DIFFS_B)
    assert t == pytest.approx(6.0, abs=1e-6)
    assert p == pytest.approx(t_p_oracle(6.0, 4), abs=1e-6)
    assert p == pytest.approx(0.0039, abs=5e-5)
    t2, p2 = paired_t_test(DIFFS_B, DIFFS_A)
    assert t2 == -t and p2 == p


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=12))
def test_t_test_p_matches_quadrature(d):
    d = np.array(d)
    if d.std(ddof=1) < 1e-3:
        return
    t, p = paired_t_test(d, np.zeros_like(d))
    assert p == pytest.approx(t_p_oracle(t, len(d) - 1), abs=1e-6)


def test_t_test_degenerate():
    a = np.array([0.8, 0.9, 0.7])
    with pytest.raises(DegenerateStatisticError):
        paired_t_test(a, a)
    with pytest.raises(ValueError):
        paired_t_test([1.0], [2.0])


def test_cohens_d():
    assert cohens_d_paired(DIFFS_A, DIFFS_B) == pytest.approx(1.2 / math.sqrt(0.2), abs=1e-6)
    assert cohens_d_paired(DIFFS_A, DIFFS_B) == pytest.approx(2.683, abs=5e-4)
    assert cohens_d_paired(DIFFS_A + 7, DIFFS_B + 7) == pytest.approx(cohens_d_paired(DIFFS_A, DIFFS_B))
    with pytest.warns(DegenerateStatisticWarning):
        assert cohens_d_paired(DIFFS_B + 0.3, DIFFS_B) == math.inf
    with pytest.warns(DegenerateStatisticWarning):
        assert math.isnan(cohens_d_paired(DIFFS_B, DIFFS_B))


def test_bootstrap_degenerate_and_contains_mean():
    a = np.array([0.9, 0.85, 0.8, 0.95, 0.7])
    assert bootstrap_ci_diff(a, a - 0.05, n_boot=500) == pytest.approx((0.05, 0.05), abs=1e-12)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, y = rng.random(5), rng.random(5)
        lo, hi = bootstrap_ci_diff(x, y, n_boot=2000, seed=int(rng.integers(1000)))
        assert lo <= np.mean(x - y) <= hi
    assert bootstrap_ci_diff(a, a[::-1], seed=4) == bootstrap_ci_diff(a, a[::-1], seed=4)


def test_bootstrap_coverage():
    rng = np.random.default_rng(2024)
    hits = 0
    for i in range(1000):
        d = rng.normal(0.3, 1.0, size=100)
        lo, hi = bootstrap_ci_diff(d, np.zeros_like(d), n_boot=2000, seed=i)
        hits += lo <= 0.3 <= hi
    assert abs(hits / 1000 - 0.95) <= 0.02


# --- Kolmogorov-Smirnov ---------------------------------------------------------------

def ecdf_d_exhaustive(x, y):
    pts = sorted(set(x) | set(y))
    probes = pts + [(a + b) / 2 for a, b in zip(pts, pts[1:])] + [pts[0] - 1, pts[-1] + 1]
    best = 0.0
    for t in probes:
        fx = sum(v <= t for v in x) / len(x)
        fy = sum(v <= t for v in y) / len(y)
        best = max(best, abs(fx - fy))
    return best


def kolmogorov_series(lam, terms=100):
    if lam <= 0:
        return 1.0
    return float(2 * sum((-1) ** (k - 1) * mpmath.exp(-2 * k * k * lam * lam) for k in range(1, terms)))


def test_ks_five_vs_five_exhaustive():
    rng = np.random.default_rng(5)
    for _ in range(50):
        x = np.round(rng.random(5), 1).tolist()
        y = np.round(rng.random(5) + 0.2, 1).tolist()
        assert ks_statistic(x, y) == pytest.approx(ecdf_d_exhaustive(x, y), abs=1e-12)
        D, p = ks_two_sample(x, y)
        en = math.sqrt(25 / 10)
        assert p == pytest.approx(min(1.0, kolmogorov_series((en + 0.12 + 0.11 / en) * D)), abs=1e-6)


def test_ks_all_splits_of_ten():
    # every 5/5 split of 0..9 against brute force
    vals = list(range(10))
    for xs in itertools.combinations(vals, 5):
        ys = [v for v in vals if v not in xs]
        assert ks_statistic(list(xs), ys) == pytest.approx(ecdf_d_exhaustive(list(xs), ys))


def test_ks_identical_and_shifted():
    x = np.random.default_rng(6).random(30)
    assert ks_two_sample(x, x[::-1]) == (0.0, 1.0)
    rng = np.random.default_rng(7)
    D, p = ks_two_sample(rng.random(200), rng.random(200) + 0.5)
    assert D >= 0.4 and p < 0.001
    with pytest.raises(ValueError):
        ks_statistic([], [1.0])


def _real_meta(rng, n=60):
    from upmi.meta_features import meta_matrix
    p = np.clip(rng.beta(2, 3, size=(n, 2)), 0, 1)
    return meta_matrix(p[:, 0], p[:, 1])


def test_synth_quality_bootstrap_passes_mostly():
    ok = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        real = _real_meta(rng)
        synth = real[rng.integers(0, len(real), len(real))]
        ok += validate_synth_quality(real, synth)["n_similar"] == 7
    assert ok >= 18


def test_synth_quality_shift_flagged():
    from upmi.gmm import constrain_meta
    rng = np.random.default_rng(8)
    real = _real_meta(rng, 100)
    shifted = real.copy()
    shifted[:, 0] += 0.3
    report = validate_synth_quality(real, constrain_meta(shifted))
    assert "p_t1" in report["flagged"]
    clean = validate_synth_quality(real, real)
    assert clean["flagged"] == [] and min(d["p"] for d in clean["dimensions"]) > 0.05
    text = format_ks_summary(report)
    assert "p_t1" in text and "average p-value" in text
    with pytest.raises(ValueError):
        validate_synth_quality(real, np.empty((0, 7)))


def test_no_warnings_on_regular_inputs():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cohens_d_paired([0.9, 0.8, 0.85], [0.8, 0.81, 0.7])
        f1_score(Confusion(3, 1, 4, 2))
