"""Run configuration: JSON file plus overrides, schema-checked, resolved to dataclasses."""
from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .ablation import PipelineConfig
from .exceptions import ConfigError
from .feature_selection import SelectionConfig
from .forest import RfConfig
from .logistic import BaseConfig
from .pipeline import GmmConfig
from .synth_cohort import CohortSpec
from .tabular_io import SCHEMA_VERSION

_NESTED = {"selection": SelectionConfig, "base": BaseConfig, "gmm": GmmConfig, "forest": RfConfig}
_TUPLES = ("scenarios", "allowed_scenarios")


def load_schema(kind: str) -> dict:
    path = resources.files("upmi").joinpath("schemas").joinpath(f"{kind}.schema.json")
    return json.loads(path.read_text("utf-8"))


def schema_errors(payload, kind: str) -> list[str]:
    """Every violation of schema ``kind`` as ``"<json path>: <message>"``, sorted."""
    validator = jsonschema.Draft202012Validator(load_schema(kind))
    out = []
    for err in validator.iter_errors(payload):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{where}: {err.message}")
    return sorted(out)


def check_schema(payload, kind: str):
    errors = schema_errors(payload, kind)
    if errors:
        raise ConfigError(f"{kind} failed schema validation: " + "; ".join(errors), errors)


def _build(cls, values: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in values:
            continue
        v = values[f.name]
        if f.name == "forest" and isinstance(v, dict):
            # merge over the class's own default forest, not RfConfig()
            base = getattr(cls(), "forest")
            v = dataclasses.replace(base, **v)
        elif f.name in _NESTED and isinstance(v, dict):
            v = _build(_NESTED[f.name], v)
        elif f.name in _TUPLES:
            v = tuple(v)
        kwargs[f.name] = v
    return cls(**kwargs)


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "data":
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Inputs (two CSV paths or a cohort spec), pipeline settings and worker count.

    The output directory is deliberately not part of the config, so the echoed
    config is identical wherever a run is written.
    """

    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    cohort: CohortSpec | None = field(default_factory=CohortSpec)
    t1: str | None = None
    t2: str | None = None
    columns: dict | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if (self.cohort is None) == (self.t1 is None or self.t2 is None):
            raise ConfigError("give either a cohort spec or both t1 and t2 table paths")

    @property
    def data(self) -> dict:
        if self.cohort is not None:
            return {"cohort": self.cohort.to_dict()}
        d = {"t1": self.t1, "t2": self.t2}
        if self.columns:
            d["columns"] = dict(self.columns)
        return d

    def to_dict(self) -> dict:
        return {
            "schema": "run_config",
            "schema_version": SCHEMA_VERSION,
            "data": self.data,
            **self.pipeline.to_dict(),
            "n_jobs": self.n_jobs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        check_schema(d, "run_config")
        d = {k: v for k, v in d.items() if k not in ("schema", "schema_version")}
        data = d.pop("data", {"cohort": {}})
        n_jobs = d.pop("n_jobs", 1)
        try:
            pipeline = _build(PipelineConfig, d)
            if "cohort" in data:
                return cls(pipeline, CohortSpec.from_dict(data["cohort"]), n_jobs=n_jobs)
            return cls(pipeline, None, data["t1"], data["t2"], data.get("columns"), n_jobs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config (or start from defaults) and apply ``overrides``.

    Overrides are merged key by key into nested sections; ``data`` is replaced
    whole. The merged document is schema-validated before anything is built.
    """
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    return RunConfig.from_dict(_deep_merge(raw, overrides or {}))
