"""Declarative run configuration (YAML)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .bucketing import CLUSTER, STATE
from .eventlog import AttributeSchema, ColumnMapping, PreprocessConfig, DEFAULT_TIMESTAMP_FORMAT
from .predict.bundle import GBT, MethodDescriptor
from .predict.gbt import DEFAULT_GRID as GBT_GRID


class ConfigError(ValueError):
    pass


DEFAULT_GRIDS = {
    "gbt": GBT_GRID,
    "cluster": {"n_clusters": [2, 5, 10]},
    "state": {},
    "transition_system": {"abstraction": ["set", "bag", "sequence"]},
    "mean_baseline": {},
}


@dataclass
class MethodSpec:
    descriptor: MethodDescriptor
    grid: dict[str, list]

    @property
    def name(self) -> str:
        return self.descriptor.name


@dataclass
class RunConfig:
    log_path: Path
    mapping: ColumnMapping
    attributes: AttributeSchema
    preprocess: PreprocessConfig
    methods: list[MethodSpec]
    seed: int
    output_dir: Path
    dataset: str
    max_prefix: int = 20
    train_ratio: float = 0.8
    cv_folds: int = 5
    timeout_seconds: float | None = None
    jobs: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _method_grid(desc: MethodDescriptor, grids: Mapping[str, Mapping]) -> dict[str, list]:
    grid: dict[str, list] = {}
    if desc.predictor == GBT:
        if desc.bucketing == CLUSTER:
            grid.update(grids["cluster"])
        elif desc.bucketing == STATE:
            grid.update(grids["state"])
        grid.update(grids["gbt"])
    else:
        grid.update(grids[desc.predictor])
    return {k: list(v) for k, v in grid.items()}


def _require(d: Mapping, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return d[key]


def parse_methods(items, grids) -> list[MethodSpec]:
    specs, seen = [], set()
    for item in items:
        try:
            if isinstance(item, str):
                desc, override = MethodDescriptor.parse(item), None
            elif isinstance(item, Mapping):
                if "method" in item:
                    desc = MethodDescriptor.parse(item["method"])
                else:
                    predictor = item.get("predictor", GBT)
                    desc = MethodDescriptor(predictor, item.get("bucketing"), item.get("encoding"))
                override = item.get("grid")
            else:
                raise ValueError(f"cannot read method entry {item!r}")
        except ValueError as exc:
            raise ConfigError(f"invalid method descriptor: {exc}") from exc
        if desc.name in seen:
            raise ConfigError(f"duplicate descriptor {desc.name!r}")
        seen.add(desc.name)
        grid = _method_grid(desc, grids)
        if override:
            grid.update({k: list(v) if isinstance(v, (list, tuple)) else [v] for k, v in override.items()})
        specs.append(MethodSpec(desc, grid))
    if not specs:
        raise ConfigError("no methods configured")
    return specs


def load_config(path: str | Path, output_dir: str | Path | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(raw, base_dir=path.parent, output_dir=output_dir)


def config_from_mapping(raw: Mapping[str, Any], base_dir: Path = Path("."),
                        output_dir: str | Path | None = None) -> RunConfig:
    log = _require(raw, "log", "config")
    cols = log.get("columns", {})
    mapping = ColumnMapping(cols.get("case_id", "case_id"), cols.get("activity", "activity"),
                            cols.get("timestamp", "timestamp"),
                            log.get("timestamp_format", DEFAULT_TIMESTAMP_FORMAT))
    try:
        attributes = AttributeSchema.from_dict(log.get("attributes", []))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"log.attributes: {exc}") from exc
    pre = raw.get("preprocess", {}) or {}
    preprocess = PreprocessConfig(tuple(pre.get("incomplete_markers", ())),
                                  int(pre.get("rare_case_threshold", 10)),
                                  bool(pre.get("drop_constant", True)),
                                  bool(pre.get("time_features", True)))
    if "seed" not in raw or raw["seed"] is None:
        raise ConfigError("config: a seed is required")
    grids = {k: dict(v) for k, v in DEFAULT_GRIDS.items()}
    for k, v in (raw.get("grids") or {}).items():
        if k not in grids:
            raise ConfigError(f"grids: unknown section {k!r}")
        grids[k] = dict(v or {})
    methods = parse_methods(_require(raw, "methods", "config"), grids)
    log_path = Path(_require(log, "path", "log"))
    if not log_path.is_absolute():
        log_path = base_dir / log_path
    out = Path(output_dir) if output_dir is not None else Path(raw.get("output_dir", "results"))
    if not out.is_absolute() and output_dir is None:
        out = base_dir / out
    cfg = RunConfig(
        log_path=log_path, mapping=mapping, attributes=attributes, preprocess=preprocess,
        methods=methods, seed=int(raw["seed"]), output_dir=out,
        dataset=str(raw.get("dataset", log_path.stem)),
        max_prefix=int(raw.get("max_prefix", 20)), train_ratio=float(raw.get("train_ratio", 0.8)),
        cv_folds=int(raw.get("cv_folds", 5)), timeout_seconds=raw.get("timeout_seconds"),
        jobs=int(raw.get("jobs", 1)), raw=dict(raw),
    )
    if cfg.max_prefix < 1:
        raise ConfigError("max_prefix must be >= 1")
    if not 0 < cfg.train_ratio < 1:
        raise ConfigError("train_ratio must lie in (0, 1)")
    if cfg.cv_folds < 2:
        raise ConfigError("cv_folds must be >= 2")
    return cfg


def example_config(log_path: str, methods: list[str], seed: int = 42, attributes=()) -> str:
    """YAML text of a minimal run configuration for a synthetic log."""
    doc = {
        "dataset": Path(log_path).stem,
        "log": {"path": log_path,
                "columns": {"case_id": "case_id", "activity": "activity", "timestamp": "timestamp"},
                "timestamp_format": DEFAULT_TIMESTAMP_FORMAT,
                "attributes": list(attributes)},
        "preprocess": {"incomplete_markers": [], "rare_case_threshold": 10},
        "max_prefix": 20,
        "train_ratio": 0.8,
        "cv_folds": 5,
        "seed": seed,
        "output_dir": "results",
        "methods": methods,
    }
    return yaml.safe_dump(doc, sort_keys=False)

