"""Synthetic paired-modality cohorts with planted signal."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._rng import STREAM_COHORT, derive_rng
from .exceptions import ConfigError
from .tabular_io import FeatureTable, PairedDataset

MODALITIES = ("t1", "t2")


@dataclass(frozen=True)
class CohortSpec:
    """Generative settings for :func:`generate_cohort`.

    Informative features carry a class-1 mean shift of ``effect_size`` noise
    standard deviations. ``cross_modality_redundancy`` is the correlation of
    their noise between T1 and T2 (1 makes the two modalities agree, 0 makes
    their errors independent). Nuisance features come in blocks sharing a
    factor with correlation ``noise_correlation``; a fraction are near
    duplicates (|rho| > 0.95) or near constant (variance < 0.01).
    """

    n_subjects: int = 67
    class1_fraction: float = 24 / 67
    n_features_per_modality: int = 100
    n_informative: int = 10
    effect_size: float = 0.8
    cross_modality_redundancy: float = 0.3
    noise_correlation: float = 0.5
    seed: int = 0
    duplicate_fraction: float = 0.1
    low_variance_fraction: float = 0.1
    block_size: int = 4

    def __post_init__(self):
        if self.n_subjects < 4:
            raise ConfigError("n_subjects must be >= 4")
        if not 0 < self.class1_fraction < 1:
            raise ConfigError(f"class1_fraction must lie in (0, 1), got {self.class1_fraction}")
        n1 = self.n_positive
        if n1 < 2 or self.n_subjects - n1 < 2:
            raise ConfigError(
                f"class1_fraction {self.class1_fraction} gives {n1} positives of "
                f"{self.n_subjects}; need >= 2 per class"
            )
        if self.n_features_per_modality < 1:
            raise ConfigError("n_features_per_modality must be >= 1")
        if not 0 <= self.n_informative <= self.n_features_per_modality:
            raise ConfigError("n_informative must lie in [0, n_features_per_modality]")
        if self.effect_size < 0:
            raise ConfigError("effect_size must be >= 0")
        if not 0 <= self.cross_modality_redundancy <= 1:
            raise ConfigError("cross_modality_redundancy must lie in [0, 1]")
        if not 0 <= self.noise_correlation < 1:
            raise ConfigError("noise_correlation must lie in [0, 1)")
        for name in ("duplicate_fraction", "low_variance_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.block_size < 1:
            raise ConfigError("block_size must be >= 1")

    @property
    def n_positive(self):
        return int(math.floor(self.n_subjects * self.class1_fraction + 0.5))

    @property
    def informative_names(self):
        return [f"info_{j:03d}" for j in range(self.n_informative)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown cohort spec field(s): {sorted(unknown)}")
        return cls(**d)


def _nuisance_names(spec):
    n_nuis = spec.n_features_per_modality - spec.n_informative
    n_dup = int(round(spec.duplicate_fraction * n_nuis))
    n_low = int(round(spec.low_variance_fraction * n_nuis))
    n_dup = min(n_dup, n_nuis // 2)
    n_low = min(n_low, n_nuis - 2 * n_dup)
    n_plain = n_nuis - n_dup - n_low
    return n_plain, n_dup, n_low


def generate_cohort(spec: CohortSpec) -> PairedDataset:
    rng = derive_rng(spec.seed, STREAM_COHORT)
    n = spec.n_subjects
    n1 = spec.n_positive
    y = np.zeros(n, dtype=np.int64)
    y[rng.permutation(n)[:n1]] = 1
    ids = [f"S{i + 1:03d}" for i in range(n)]

    r = spec.cross_modality_redundancy
    shared = rng.standard_normal((n, spec.n_informative))
    n_plain, n_dup, n_low = _nuisance_names(spec)
    tables = []
    for m in MODALITIES:
        own = rng.standard_normal((n, spec.n_informative))
        info = spec.effect_size * y[:, None] + math.sqrt(r) * shared + math.sqrt(1 - r) * own

        n_blocks = max(1, math.ceil(n_plain / spec.block_size))
        factors = rng.standard_normal((n, n_blocks))
        block_of = np.arange(n_plain) // spec.block_size
        rho = spec.noise_correlation
        plain = (math.sqrt(rho) * factors[:, block_of]
                 + math.sqrt(1 - rho) * rng.standard_normal((n, n_plain)))
        src = rng.choice(n_plain, size=n_dup, replace=n_dup > n_plain) if n_dup else np.empty(0, int)
        dup = plain[:, src] + 0.1 * rng.standard_normal((n, n_dup))
        low = 0.05 * rng.standard_normal((n, n_low))

        # radiomics-like heterogeneous units; scale >= 0.5 keeps variance above the screen
        X = np.hstack([info, plain, dup])
        scale = np.exp(rng.uniform(np.log(0.5), np.log(5.0), X.shape[1]))
        offset = rng.normal(0.0, 10.0, X.shape[1])
        X = X * scale + offset
        X = np.hstack([X, low + rng.normal(0.0, 1.0, n_low)])
        names = (spec.informative_names
                 + [f"noise_{j:03d}" for j in range(n_plain)]
                 + [f"dup_{j:03d}" for j in range(n_dup)]
                 + [f"lowvar_{j:03d}" for j in range(n_low)])
        order = rng.permutation(len(names))
        tables.append(FeatureTable(ids, [names[i] for i in order], X[:, order], y, m))
    return PairedDataset(tables[0], tables[1])
