"""Command line entry point: ``upmi run | generate | validate``.

Exit status is 0 when every artifact was written and schema-checked, 2 for
invalid configuration or input tables, and 1 for any other pipeline failure.
Failures print a JSON error document on stderr; ``run`` also leaves it in the
output directory as ``error.json``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .ablation import run_ablation_detailed
from .config import load_run_config, schema_errors
from .exceptions import ConfigError, FoldError, ReportSchemaError, TableError, UPMIError
from .report import ArtifactWriter, write_run_artifacts
from .stats import format_ks_summary, validate_synth_quality
from .synth_cohort import CohortSpec, generate_cohort
from .tabular_io import (
    dump_json,
    load_feature_table,
    load_meta_table,
    pair_datasets,
    save_feature_table,
)

logger = logging.getLogger("upmi")

OUTPUT_ENV = "UPMI_OUTPUT_DIR"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _default_out():
    return os.environ.get(OUTPUT_ENV, "upmi-output")


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _max_depth(text):
    return None if text.lower() == "none" else int(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="upmi", description="GMM-augmented meta-feature stacking.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="repeat for debug output")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="nested-CV ablation over synthetic doses")
    run.add_argument("--config", type=Path, help="JSON run config; flags below override it")
    run.add_argument("--out", type=Path, default=None,
                     help=f"output directory (default ${OUTPUT_ENV} or ./upmi-output)")
    run.add_argument("--t1", help="T1 feature table CSV")
    run.add_argument("--t2", help="T2 feature table CSV")
    run.add_argument("--cohort-spec", type=Path, help="cohort spec JSON to generate data from")
    run.add_argument("--scenarios", type=_int_list, help="synthetic doses in percent, e.g. 0,100,200")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--k-outer", type=int)
    run.add_argument("--k-inner", type=int)
    run.add_argument("--inner-scheme", choices=("kfold", "loo"))
    run.add_argument("--n-trees", type=int)
    run.add_argument("--max-depth", type=_max_depth, help="integer or 'none'")
    run.add_argument("--n-components", type=int, help="mixture components per class")
    run.add_argument("--n-boot", type=int, help="bootstrap resamples for the gain CI")
    run.add_argument("--n-jobs", type=int, help="parallel workers over outer folds")

    gen = sub.add_parser("generate", help="write a synthetic paired cohort")
    gen.add_argument("--spec", type=Path, help="cohort spec JSON; flags below override it")
    gen.add_argument("--out", type=Path, default=None)
    for flag, typ in (("--n-subjects", int), ("--class1-fraction", float),
                      ("--n-features-per-modality", int), ("--n-informative", int),
                      ("--effect-size", float), ("--cross-modality-redundancy", float),
                      ("--noise-correlation", float), ("--seed", int)):
        gen.add_argument(flag, type=typ)

    val = sub.add_parser("validate", help="per-dimension KS of synthetic vs real meta-features")
    val.add_argument("real", type=Path, help="CSV with the seven meta-feature columns")
    val.add_argument("synthetic", type=Path)
    val.add_argument("--alpha", type=float, default=0.05)
    val.add_argument("--out", type=Path, help="also write the report as JSON")
    return p


# --- error reporting -------------------------------------------------------------

def _error_payload(command, exc, code):
    payload = {"command": command, "error_type": type(exc).__name__, "message": str(exc),
               "exit_code": code}
    if isinstance(exc, FoldError):
        payload["outer_fold"] = exc.outer_fold
        payload["inner_fold"] = exc.inner_fold
    details = getattr(exc, "details", None)
    if details:
        payload["details"] = [str(d) for d in details]
    return payload


def _fail(command, exc, out_dir=None) -> int:
    code = EXIT_USAGE if isinstance(exc, (ConfigError, TableError)) else EXIT_FAILURE
    payload = _error_payload(command, exc, code)
    text = dump_json(payload, schema_kind="error")
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            logger.exception("could not write error.json")
    return code


# --- subcommands -----------------------------------------------------------------

def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def run_overrides(args) -> dict:
    o = {}
    if args.cohort_spec is not None:
        spec = _read_json(args.cohort_spec)
        if isinstance(spec, dict):
            spec = {k: v for k, v in spec.items() if k not in ("schema", "schema_version", "files")}
        o["data"] = {"cohort": spec}
    if args.t1 is not None or args.t2 is not None:
        if args.t1 is None or args.t2 is None:
            raise ConfigError("--t1 and --t2 must be given together")
        o["data"] = {"t1": args.t1, "t2": args.t2}
    for key in ("scenarios", "seed", "k_outer", "k_inner", "inner_scheme", "n_boot", "n_jobs"):
        v = getattr(args, key)
        if v is not None:
            o[key] = v
    forest = {}
    if args.n_trees is not None:
        forest["n_trees"] = args.n_trees
    if args.max_depth is not None:
        forest["max_depth"] = args.max_depth
    if forest:
        o["forest"] = forest
    if args.n_components is not None:
        o["gmm"] = {"n_components": args.n_components}
    return o


def cmd_run(args) -> int:
    out = args.out if args.out is not None else Path(_default_out())
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()
    try:
        config = load_run_config(args.config, run_overrides(args))
        if config.cohort is not None:
            data = generate_cohort(config.cohort)
        else:
            cols = config.columns
            data = pair_datasets(load_feature_table(config.t1, cols, "t1"),
                                 load_feature_table(config.t2, cols, "t2"))
        logger.info("running %d subjects, scenarios %s", len(data), list(config.pipeline.scenarios))
        run = run_ablation_detailed(data, config=config.pipeline, n_jobs=config.n_jobs)
        write_run_artifacts(run, data, config.to_dict(), out)
    except (UPMIError, OSError, ValueError) as exc:
        return _fail("run", exc, out)
    for r in run.reports:
        logger.info("scenario %d%%: AUC %.3f +/- %.3f", r.scenario_pct, r.auc_mean, r.auc_std)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    out = args.out if args.out is not None else Path(_default_out())
    try:
        spec = {}
        if args.spec is not None:
            spec = _read_json(args.spec)
            if not isinstance(spec, dict):
                raise ConfigError(f"{args.spec}: top level must be a JSON object")
            spec = {k: v for k, v in spec.items() if k not in ("schema", "schema_version", "files")}
        for key in ("n_subjects", "class1_fraction", "n_features_per_modality", "n_informative",
                    "effect_size", "cross_modality_redundancy", "noise_correlation", "seed"):
            v = getattr(args, key)
            if v is not None:
                spec[key] = v
        spec = CohortSpec.from_dict(spec)
        data = generate_cohort(spec)
        w = ArtifactWriter(out)
        for table in (data.t1, data.t2):
            save_feature_table(table, w.out_dir / f"{table.modality}.csv")
        payload = {**spec.to_dict(), "files": {"t1": "t1.csv", "t2": "t2.csv"}}
        w.write_json("cohort_spec.json", "cohort_spec", payload)
    except (UPMIError, OSError, ValueError) as exc:
        return _fail("generate", exc)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        if not 0 < args.alpha < 1:
            raise ConfigError(f"--alpha must lie in (0, 1), got {args.alpha}")
        real = load_meta_table(args.real)
        synth = load_meta_table(args.synthetic)
        report = validate_synth_quality(real, synth, alpha=args.alpha)
        if args.out is not None:
            payload = {**report, "scenario_pct": None, "reason": None}
            text = dump_json(payload, schema_kind="ks_report")
            errors = schema_errors(json.loads(text), "ks_report")
            if errors:
                raise ReportSchemaError(f"KS report does not match its schema: {errors[:5]}", errors)
            args.out.parent.mkdir(parents=True, exist_ok=True)
            args.out.write_text(text + "\n", encoding="utf-8")
    except (UPMIError, OSError, ValueError) as exc:
        return _fail("validate", exc)
    print(format_ks_summary(report))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "generate": cmd_generate, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
