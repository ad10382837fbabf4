"""Per-modality feature tables: loading, validation, pairing and persistence."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import (
    DuplicateIdError,
    EmptyIntersectionError,
    LabelConflictError,
    LabelValueError,
    MissingIdError,
    NonFiniteError,
    NonNumericError,
    SchemaMismatchError,
    TableError,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Subjects x named continuous features for one modality.

    ``values`` is stored read-only; ``subset`` and ``select`` return new tables.
    """

    subject_ids: tuple
    feature_names: tuple
    values: np.ndarray
    labels: np.ndarray
    modality: str = ""

    def __post_init__(self):
        ids = tuple(str(s) for s in self.subject_ids)
        names = tuple(str(f) for f in self.feature_names)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1 and len(names) == 0:
            values = values.reshape(len(ids), 0)
        labels = np.asarray(self.labels)
        if values.ndim != 2:
            raise TableError(f"values must be 2-D, got shape {values.shape}")
        if values.shape[0] != len(ids) or labels.shape != (len(ids),):
            raise TableError(
                f"row count mismatch: {values.shape[0]} value rows, "
                f"{len(ids)} ids, {labels.shape[0]} labels"
            )
        if values.shape[1] != len(names):
            raise SchemaMismatchError(
                f"{values.shape[1]} value columns but {len(names)} feature names"
            )
        if len(set(ids)) != len(ids):
            dup = _first_duplicate(ids)
            raise DuplicateIdError(f"duplicate subject id {dup!r}")
        if len(set(names)) != len(names):
            raise SchemaMismatchError(f"duplicate feature name {_first_duplicate(names)!r}")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise NonFiniteError(
                f"non-finite value at subject {ids[r]!r}, feature {names[c]!r}"
            )
        if not np.all((labels == 0) | (labels == 1)):
            bad = int(np.flatnonzero((labels != 0) & (labels != 1))[0])
            raise LabelValueError(f"label {labels[bad]!r} of subject {ids[bad]!r} is not 0/1")
        labels = labels.astype(np.int64)
        values.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_subjects(self):
        return len(self.subject_ids)

    def __eq__(self, other):
        if not isinstance(other, FeatureTable):
            return NotImplemented
        return (
            self.subject_ids == other.subject_ids
            and self.feature_names == other.feature_names
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.labels, other.labels)
            and self.modality == other.modality
        )

    def subset(self, rows) -> "FeatureTable":
        """Restrict to the given row indices, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureTable(
            [self.subject_ids[i] for i in rows],
            self.feature_names,
            self.values[rows],
            self.labels[rows],
            self.modality,
        )

    def select(self, names: Sequence[str]) -> "FeatureTable":
        idx = self.column_indices(names)
        return FeatureTable(
            self.subject_ids, [self.feature_names[i] for i in idx],
            self.values[:, idx], self.labels, self.modality,
        )

    def column_indices(self, names: Sequence[str]) -> list[int]:
        lookup = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in lookup]
        if missing:
            raise SchemaMismatchError(f"unknown feature(s): {missing}")
        return [lookup[n] for n in names]

    def namespaced_names(self) -> list[str]:
        """Feature names prefixed with the modality, e.g. ``t1:glcm_contrast``."""
        if not self.modality:
            return list(self.feature_names)
        return [f"{self.modality}:{n}" for n in self.feature_names]


@dataclass(frozen=True)
class PairedDataset:
    t1: FeatureTable
    t2: FeatureTable
    n_dropped: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.t1.subject_ids != self.t2.subject_ids:
            raise TableError("paired tables must list identical subject ids in identical order")
        if not np.array_equal(self.t1.labels, self.t2.labels):
            raise LabelConflictError("paired tables disagree on labels")

    @property
    def subject_ids(self):
        return self.t1.subject_ids

    @property
    def labels(self):
        return self.t1.labels

    def __len__(self):
        return self.t1.n_subjects

    def subset(self, rows) -> "PairedDataset":
        return PairedDataset(self.t1.subset(rows), self.t2.subset(rows))


def _first_duplicate(items):
    seen = set()
    for item in items:
        if item in seen:
            return item
        seen.add(item)
    return None


def _parse_label(raw, row_no, subject):
    text = raw.strip()
    try:
        value = float(text)
    except ValueError:
        raise LabelValueError(
            f"row {row_no} (subject {subject!r}): label {raw!r} is not numeric"
        ) from None
    if value not in (0.0, 1.0):
        raise LabelValueError(f"row {row_no} (subject {subject!r}): label {raw!r} is not 0 or 1")
    return int(value)


def load_feature_table(path, schema: Mapping | None = None, modality: str = "") -> FeatureTable:
    """Read a CSV feature table.

    ``schema`` maps roles to columns: ``{"id": ..., "label": ..., "features": [...]}``.
    ``features`` may be omitted to take every remaining column in file order.
    Defaults are ``id="subject_id"`` and ``label="label"``.
    """
    schema = dict(schema or {})
    id_col = schema.get("id", "subject_id")
    label_col = schema.get("label", "label")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatchError(f"{path}: empty file, no header row") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise SchemaMismatchError(f"{path}: duplicate header column {_first_duplicate(header)!r}")
        for role, col in (("id", id_col), ("label", label_col)):
            if col not in header:
                raise SchemaMismatchError(f"{path}: {role} column {col!r} not in header {header}")
        feature_cols = schema.get("features")
        if feature_cols is None:
            feature_cols = [h for h in header if h not in (id_col, label_col)]
        else:
            absent = [c for c in feature_cols if c not in header]
            if absent:
                raise SchemaMismatchError(f"{path}: feature column(s) {absent} not in header")
        if not feature_cols:
            raise SchemaMismatchError(f"{path}: schema designates no feature columns")

        pos = {h: i for i, h in enumerate(header)}
        id_pos, label_pos = pos[id_col], pos[label_col]
        feat_pos = [pos[c] for c in feature_cols]

        ids, labels, rows = [], [], []
        seen = {}
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise SchemaMismatchError(
                    f"{path}: row {row_no} has {len(row)} cells, header has {len(header)}"
                )
            subject = row[id_pos].strip()
            if not subject:
                raise MissingIdError(f"{path}: row {row_no} has an empty {id_col!r}")
            if subject in seen:
                raise DuplicateIdError(
                    f"{path}: subject id {subject!r} on row {row_no} duplicates row {seen[subject]}"
                )
            seen[subject] = row_no
            labels.append(_parse_label(row[label_pos], row_no, subject))
            values = []
            for col, p in zip(feature_cols, feat_pos):
                cell = row[p].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericError(
                        f"{path}: row {row_no} (subject {subject!r}), column {col!r}: "
                        f"{cell!r} is not numeric"
                    ) from None
                if not math.isfinite(v):
                    raise NonFiniteError(
                        f"{path}: row {row_no} (subject {subject!r}), column {col!r}: "
                        f"non-finite value {cell!r}"
                    )
                values.append(v)
            ids.append(subject)
            rows.append(values)
    if not ids:
        raise SchemaMismatchError(f"{path}: no data rows")
    return FeatureTable(ids, feature_cols, np.array(rows, dtype=float), labels, modality)


def save_feature_table(table: FeatureTable, path, id_col="subject_id", label_col="label"):
    """Write ``table`` as CSV; floats use shortest round-trip repr."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([id_col, label_col, *table.feature_names])
        for sid, lab, row in zip(table.subject_ids, table.labels, table.values):
            writer.writerow([sid, int(lab), *(repr(float(v)) for v in row)])
    return path


def pair_datasets(t1: FeatureTable, t2: FeatureTable) -> PairedDataset:
    """Align two modality tables on subject id (intersection, ``t1`` order)."""
    pos2 = {s: i for i, s in enumerate(t2.subject_ids)}
    rows1, rows2 = [], []
    for i, sid in enumerate(t1.subject_ids):
        j = pos2.get(sid)
        if j is None:
            continue
        if t1.labels[i] != t2.labels[j]:
            raise LabelConflictError(
                f"subject {sid!r}: label {t1.labels[i]} in t1 but {t2.labels[j]} in t2"
            )
        rows1.append(i)
        rows2.append(j)
    if not rows1:
        raise EmptyIntersectionError("t1 and t2 share no subject ids")
    dropped = {"t1": t1.n_subjects - len(rows1), "t2": t2.n_subjects - len(rows2)}
    if dropped["t1"] or dropped["t2"]:
        logger.warning(
            "dropping unpaired subjects: %d only in t1, %d only in t2",
            dropped["t1"], dropped["t2"],
        )
    a = t1.subset(rows1)
    b = t2.subset(rows2)
    a = FeatureTable(a.subject_ids, a.feature_names, a.values, a.labels, t1.modality or "t1")
    b = FeatureTable(b.subject_ids, b.feature_names, b.values, b.labels, t2.modality or "t2")
    return PairedDataset(a, b, dropped)


def load_paired(t1_path, t2_path, schema: Mapping | None = None) -> PairedDataset:
    return pair_datasets(
        load_feature_table(t1_path, schema, modality="t1"),
        load_feature_table(t2_path, schema, modality="t2"),
    )


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if hasattr(obj, "to_dict"):
        return _to_jsonable(obj.to_dict())
    return obj


def dump_json(obj, path=None, schema_kind=None) -> str:
    """Serialize to canonical JSON (sorted keys, non-finite floats as null)."""
    payload = _to_jsonable(obj)
    if schema_kind is not None and isinstance(payload, dict):
        payload = {"schema": schema_kind, "schema_version": SCHEMA_VERSION, **payload}
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def load_meta_table(path, names: Sequence[str] | None = None) -> np.ndarray:
    """Read the meta-feature columns ``names`` from a CSV; other columns are ignored."""
    if names is None:
        from .meta_features import META_NAMES as names
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaMismatchError(f"{path}: empty file, no header row") from None
        absent = [n for n in names if n not in header]
        if absent:
            raise SchemaMismatchError(f"{path}: meta-feature column(s) {absent} not in header")
        cols = [header.index(n) for n in names]
        rows = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaMismatchError(
                    f"{path}: row {row_no} has {len(row)} cells, header has {len(header)}"
                )
            values = []
            for name, j in zip(names, cols):
                try:
                    v = float(row[j])
                except ValueError:
                    raise NonNumericError(
                        f"{path}: row {row_no}, column {name!r}: {row[j]!r} is not numeric"
                    ) from None
                if not math.isfinite(v):
                    raise NonFiniteError(f"{path}: row {row_no}, column {name!r}: non-finite value")
                values.append(v)
            rows.append(values)
    if not rows:
        raise SchemaMismatchError(f"{path}: no data rows")
    return np.array(rows, dtype=float)
