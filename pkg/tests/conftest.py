import numpy as np
import pytest

from upmi.synth_cohort import CohortSpec, generate_cohort
from upmi.tabular_io import FeatureTable


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cohort():
    """40 subjects x 30 features per modality; fast enough for nested CV."""
    spec = CohortSpec(n_subjects=40, class1_fraction=0.4, n_features_per_modality=30,
                      n_informative=5, effect_size=1.5, seed=3)
    return generate_cohort(spec)


@pytest.fixture(scope="session")
def cohort67():
    return generate_cohort(CohortSpec(seed=0))


def make_table(values, labels, names=None, modality=""):
    values = np.asarray(values, dtype=float)
    names = names or [f"f{i}" for i in range(values.shape[1])]
    ids = [f"s{i:03d}" for i in range(len(values))]
    return FeatureTable(ids, names, values, labels, modality)


# --- acceptance summary ------------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and prints one PASS/FAIL line."""

    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n:>2}: {detail}"
        ACCEPTANCE[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
