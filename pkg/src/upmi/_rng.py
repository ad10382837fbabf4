"""Derived random streams from a single master seed.

Every consumer is keyed by a fixed tuple, e.g. ``(seed, STREAM_GMM, fold, cls)``,
so adding folds or scenarios never reshuffles unrelated streams.
"""
import numpy as np

STREAM_OUTER = 0
STREAM_INNER = 1
STREAM_SELECTION = 2
STREAM_GMM = 3
STREAM_SAMPLE = 4
STREAM_FOREST = 5
STREAM_BOOTSTRAP = 6
STREAM_COHORT = 7


def derive_seed(*keys) -> int:
    """A 32-bit integer seed determined by the integer ``keys``."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def derive_rng(*keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))
