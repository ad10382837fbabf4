"""Schema-checked report artifacts for ablation runs.

All files go through one :class:`ArtifactWriter`, which validates JSON
payloads before writing and records a sha256 manifest. Output is a pure
function of the config, so repeated runs are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from ._rng import STREAM_BOOTSTRAP, derive_seed
from .ablation import AblationRun, best_scenario, compare_scenarios, synth_quality
from .config import schema_errors
from .exceptions import ReportSchemaError
from .meta_features import META_NAMES
from .metrics import sensitivity_specificity
from .tabular_io import SCHEMA_VERSION, PairedDataset, dump_json

ABLATION_COLUMNS = ("scenario_pct", "condition", "n_real", "n_synth", "auc_mean", "auc_std",
                  "f1_mean", "f1_std", "sensitivity", "specificity", "tp", "fp", "tn", "fn")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else ""
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def condition_name(pct: int) -> str:
    return "Real-only" if pct == 0 else f"Real+{pct}%"


class ArtifactWriter:
    """Writes files under ``out_dir`` in call order and remembers their digests."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def _record(self, name, kind, fmt, data: bytes, columns=None):
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        entry = {"path": name, "kind": kind, "format": fmt, "schema_version": SCHEMA_VERSION,
                 "sha256": hashlib.sha256(data).hexdigest()}
        if columns is not None:
            entry["columns"] = list(columns)
        self.files.append(entry)
        return path

    def write_json(self, name, kind, payload):
        text = dump_json(payload, schema_kind=kind)
        errors = schema_errors(json.loads(text), kind)
        if errors:
            raise ReportSchemaError(f"{name} does not match schema {kind!r}: {errors[:5]}", errors)
        return self._record(name, kind, "json", (text + "\n").encode("utf-8"))

    def write_csv(self, name, kind, columns, rows):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ReportSchemaError(f"{name}: row width {len(row)} != {len(columns)} columns")
            writer.writerow([_cell(v) for v in row])
        return self._record(name, kind, "csv", buf.getvalue().encode("utf-8"), columns)

    def write_manifest(self, command):
        payload = {"command": command, "files": list(self.files)}
        text = dump_json(payload, schema_kind="manifest")
        errors = schema_errors(json.loads(text), "manifest")
        if errors:
            raise ReportSchemaError(f"manifest does not match its schema: {errors[:5]}", errors)
        path = self.out_dir / "manifest.json"
        path.write_text(text + "\n", encoding="utf-8")
        return path


def ablation_rows(reports):
    rows = []
    for r in reports:
        c = r.confusion
        sens, spec = sensitivity_specificity(c)
        n_real = int(np.median([f.n_real for f in r.folds]))
        rows.append([r.scenario_pct, condition_name(r.scenario_pct), n_real, r.n_synth,
                     r.auc_mean, r.auc_std, r.f1_mean, r.f1_std, sens, spec,
                     c.tp, c.fp, c.tn, c.fn])
    return rows


def _meta_rows(run: AblationRun, split):
    rows = []
    for oof in run.oof_tables:
        ids, labels, meta = ((oof.train_ids, oof.train_labels, oof.train_meta) if split == "train"
                             else (oof.test_ids, oof.test_labels, oof.test_meta))
        for sid, lab, vec in zip(ids, labels, meta):
            rows.append([oof.outer_fold, sid, int(lab), *vec.tolist()])
    return rows


def summarize_statistics(run: AblationRun) -> dict:
    cfg = run.config
    auc_by = {str(r.scenario_pct): r.auc_mean for r in run.reports}
    best = best_scenario(run.reports)
    if best is None:
        return {"comparison": None, "reason": "no synthetic scenario was run",
                "auc_by_scenario": auc_by}
    try:
        baseline = run.report(0)
    except KeyError:
        return {"comparison": None, "reason": "the real-only scenario was not run",
                "auc_by_scenario": auc_by}
    cmp = compare_scenarios(best, baseline, cfg.n_boot, cfg.ci_level,
                            derive_seed(cfg.seed, STREAM_BOOTSTRAP))
    return {"comparison": cmp, "reason": None, "auc_by_scenario": auc_by}


def quality_report(run: AblationRun):
    """KS report for the best synthetic scenario, or a placeholder saying why there is none."""
    best = best_scenario(run.reports)
    empty = {"alpha": 0.05, "dimensions": [], "mean_p": None, "n_similar": 0, "flagged": [],
             "n_real": 0, "n_synth": 0}
    if best is None:
        return {**empty, "scenario_pct": None, "reason": "no synthetic scenario was run"}
    if not any(len(b) for b in run.synth[best.scenario_pct]):
        return {**empty, "scenario_pct": best.scenario_pct,
                "reason": "the dose produced no synthetic samples"}
    return {**synth_quality(run, best.scenario_pct), "scenario_pct": best.scenario_pct,
            "reason": None}


def write_run_artifacts(run: AblationRun, data: PairedDataset, config_echo: dict,
                        out_dir) -> ArtifactWriter:
    """Write every report of one ablation run; returns the writer with its manifest written."""
    w = ArtifactWriter(out_dir)
    w.write_json("config.json", "run_config", config_echo)

    plan = run.plan.to_dict()
    plan.update(subject_ids=list(data.subject_ids), labels=data.labels.tolist())
    w.write_json("fold_plan.json", "fold_plan", plan)

    w.write_json("scenario_reports.json", "scenario_reports", {
        "seed": run.config.seed, "n_subjects": len(data), "scenarios": run.reports,
    })
    w.write_csv("ablation_table.csv", "ablation_table", ABLATION_COLUMNS, ablation_rows(run.reports))

    roc, mroc = [], []
    for r in run.reports:
        for f in r.folds:
            roc.extend([r.scenario_pct, f.fold_id, x, y] for x, y in f.roc_points)
        m = r.to_dict()["mean_roc"]
        mroc.extend([r.scenario_pct, *row] for row in zip(m["fpr"], m["tpr_mean"], m["tpr_std"]))
    w.write_csv("roc_points.csv", "roc_points", ("scenario_pct", "fold", "fpr", "tpr"), roc)
    w.write_csv("mean_roc.csv", "mean_roc", ("scenario_pct", "fpr", "tpr_mean", "tpr_std"), mroc)

    w.write_json("stats_summary.json", "stats_summary", summarize_statistics(run))

    ks = quality_report(run)
    w.write_json("ks_report.json", "ks_report", ks)

    meta_cols = ("outer_fold", "subject_id", "label", *META_NAMES)
    w.write_csv("real_meta_train.csv", "meta_features", meta_cols, _meta_rows(run, "train"))
    w.write_csv("real_meta_test.csv", "meta_features", meta_cols, _meta_rows(run, "test"))
    synth_rows, violin = [], []
    pct = ks["scenario_pct"]
    if pct is not None:
        for k, batch in enumerate(run.synth[pct]):
            for c, vec in zip(batch.class_labels, batch.vectors):
                synth_rows.append([k, int(c), *vec.tolist()])
        real = np.vstack([o.train_meta for o in run.oof_tables])
        for source, block in (("real", real), ("synthetic", np.array([r[2:] for r in synth_rows]))):
            for row in block.reshape(-1, len(META_NAMES)):
                violin.extend([source, name, v] for name, v in zip(META_NAMES, row.tolist()))
    w.write_csv("synthetic_meta.csv", "synthetic_meta", ("outer_fold", "label", *META_NAMES),
                synth_rows)
    w.write_csv("violin_data.csv", "violin_data", ("source", "dimension", "value"), violin)

    counts = {}
    for e in run.provenance:
        counts[e["level"]] = counts.get(e["level"], 0) + 1
    w.write_json("provenance.json", "provenance", {
        "entries": run.provenance, "violations": run.leakage_violations,
        "n_entries": len(run.provenance), "counts": counts,
    })
    w.write_manifest("run")
    return w
