"""Method descriptors, training of bucket x encoding x predictor combinations, and model bundles."""

from __future__ import annotations

import json
import logging
import os
import shutil
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Mapping, Sequence

import numpy as np

from ..bucketing import BUCKETINGS, PREFIX_LENGTH, STATE, Bucketer, assign_buckets, fit_bucketer
from ..encoding import ENCODINGS, INDEX, FeatureSchema, encode_matrix, fit_schema
from ..eventlog import AttributeSchema, LabeledPrefix
from .gbt import DEFAULTS as GBT_DEFAULTS
from .gbt import GbtModel, fit_gbt
from .transition import TransitionSystemModel, fit_transition_system

logger = logging.getLogger(__name__)

GBT = "gbt"
TRANSITION_SYSTEM = "transition_system"
MEAN_BASELINE = "mean_baseline"
PREDICTORS = (GBT, TRANSITION_SYSTEM, MEAN_BASELINE)

BUCKET_PARAMS = ("n_clusters", "abstraction", "horizon", "min_bucket_size")
ENCODING_PARAMS = ("extra_aggregates",)
GBT_PARAMS = tuple(GBT_DEFAULTS) + ("colsample",)
TS_PARAMS = ("abstraction", "horizon", "statistic")
FALLBACK_KEY = "fallback"


@dataclass(frozen=True)
class MethodDescriptor:
    predictor: str
    bucketing: str | None = None
    encoding: str | None = None

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise ValueError(f"unknown predictor {self.predictor!r}")
        if self.predictor == GBT:
            if self.bucketing not in BUCKETINGS:
                raise ValueError(f"unknown bucketing {self.bucketing!r}")
            if self.encoding not in ENCODINGS:
                raise ValueError(f"unknown encoding {self.encoding!r}")
        elif self.bucketing is not None or self.encoding is not None:
            raise ValueError(f"{self.predictor} takes no bucketing/encoding")

    @property
    def name(self) -> str:
        if self.predictor == GBT:
            return f"{self.bucketing}_{self.encoding}_{self.predictor}"
        return self.predictor

    def to_dict(self) -> dict:
        return {"predictor": self.predictor, "bucketing": self.bucketing, "encoding": self.encoding}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MethodDescriptor":
        return cls(d["predictor"], d.get("bucketing"), d.get("encoding"))

    @classmethod
    def parse(cls, text: str) -> "MethodDescriptor":
        """Parse ``bucketing_encoding_gbt``, ``transition_system`` or ``mean_baseline``."""
        if text in (TRANSITION_SYSTEM, MEAN_BASELINE):
            return cls(text)
        for b in BUCKETINGS:
            for e in ENCODINGS:
                if text == f"{b}_{e}_{GBT}":
                    return cls(GBT, b, e)
        raise ValueError(f"invalid method descriptor {text!r}")


@dataclass
class MeanBaselineModel:
    per_length: dict[int, float]
    global_mean: float

    def predict_prefix(self, prefix: LabeledPrefix) -> float:
        return max(0.0, self.per_length.get(prefix.k, self.global_mean))

    def to_dict(self) -> dict:
        return {"type": MEAN_BASELINE, "per_length": {str(k): v for k, v in sorted(self.per_length.items())},
                "global_mean": self.global_mean}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MeanBaselineModel":
        return cls({int(k): v for k, v in d["per_length"].items()}, d["global_mean"])


def fit_mean_baseline(prefixes: Sequence[LabeledPrefix]) -> MeanBaselineModel:
    if not prefixes:
        raise ValueError("cannot fit a baseline on an empty prefix list")
    by_k = defaultdict(list)
    for p in prefixes:
        by_k[p.k].append(p.remaining_seconds)
    return MeanBaselineModel({k: fmean(v) for k, v in sorted(by_k.items())},
                             fmean(p.remaining_seconds for p in prefixes))


@dataclass
class ModelBundle:
    descriptor: MethodDescriptor
    hyperparams: dict
    seed: int
    bucketer: Bucketer
    # model key -> (schema or None, regressor); routes map bucket id -> model key
    models: dict[str, tuple[FeatureSchema | None, object]] = field(default_factory=dict)
    routes: dict[int, str] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# training

def _pick(hp: Mapping, keys) -> dict:
    return {k: hp[k] for k in keys if k in hp}


@dataclass
class PreparedBuckets:
    """Bucketer plus encoded training matrices per bucket; independent of regressor hyperparameters."""

    descriptor: MethodDescriptor
    bucketer: Bucketer
    schemas: dict[str, FeatureSchema]
    matrices: dict[str, tuple[np.ndarray, np.ndarray]]
    routes: dict[int, str]

    def encode_queries(self, prefixes: Sequence[LabeledPrefix]) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """Group query prefixes by model key: [(key, positions, X)]."""
        ids = assign_buckets(self.bucketer, prefixes)
        groups: dict[str, list[int]] = defaultdict(list)
        for pos, b in enumerate(ids):
            groups[self.routes[int(b)]].append(pos)
        out = []
        for key in sorted(groups):
            pos = groups[key]
            X, _ = encode_matrix([prefixes[i] for i in pos], self.schemas[key])
            out.append((key, np.array(pos), X))
        return out


def prepare_buckets(train_prefixes: Sequence[LabeledPrefix], descriptor: MethodDescriptor,
                    hyperparams: Mapping, seed: int, attributes: AttributeSchema,
                    max_prefix: int = 20) -> PreparedBuckets:
    """Fit the bucketer, then one feature schema and training matrix per bucket."""
    bucketer = fit_bucketer(train_prefixes, descriptor.bucketing, _pick(hyperparams, BUCKET_PARAMS), seed)
    ids = assign_buckets(bucketer, train_prefixes)
    members: dict[int, list[LabeledPrefix]] = defaultdict(list)
    for p, b in zip(train_prefixes, ids):
        members[int(b)].append(p)
    enc_opts = _pick(hyperparams, ENCODING_PARAMS)

    def schema_for(prefixes, n):
        return fit_schema(prefixes, descriptor.encoding, attributes,
                          index_length=n if descriptor.encoding == INDEX else None, **enc_opts)

    schemas, matrices, routes = {}, {}, {}
    need_fallback = bucketer.kind == STATE
    for b in bucketer.bucket_ids():
        if b == bucketer.fallback_bucket:
            continue
        if not members.get(b):
            logger.warning("bucket %s has no training prefixes; bound to the fallback regressor", b)
            need_fallback = True
            routes[b] = FALLBACK_KEY
            continue
        key = str(b)
        n = b if bucketer.kind == PREFIX_LENGTH else max_prefix
        schemas[key] = schema_for(members[b], n)
        matrices[key] = encode_matrix(members[b], schemas[key])
        routes[b] = key
    if need_fallback:
        schemas[FALLBACK_KEY] = schema_for(train_prefixes, max_prefix)
        matrices[FALLBACK_KEY] = encode_matrix(train_prefixes, schemas[FALLBACK_KEY])
        if bucketer.fallback_bucket is not None:
            routes[bucketer.fallback_bucket] = FALLBACK_KEY
    return PreparedBuckets(descriptor, bucketer, schemas, matrices, routes)


def fit_prepared(prepared: PreparedBuckets, hyperparams: Mapping, seed: int,
                 metadata: Mapping | None = None) -> ModelBundle:
    gbt_hp = _pick(hyperparams, GBT_PARAMS)
    models = {}
    for key in sorted(prepared.matrices):
        X, y = prepared.matrices[key]
        models[key] = (prepared.schemas[key], fit_gbt(X, y, gbt_hp, seed))
    return ModelBundle(prepared.descriptor, dict(hyperparams), seed, prepared.bucketer, models,
                       dict(prepared.routes), dict(metadata or {}))


def fit_method(train_prefixes: Sequence[LabeledPrefix], descriptor: MethodDescriptor,
               hyperparams: Mapping | None = None, seed: int = 0, *,
               attributes: AttributeSchema = AttributeSchema(), max_prefix: int = 20,
               metadata: Mapping | None = None) -> ModelBundle:
    """Train one method on ``train_prefixes`` only."""
    hp = dict(hyperparams or {})
    if not train_prefixes:
        raise ValueError("no training prefixes")
    if descriptor.predictor == GBT:
        prepared = prepare_buckets(train_prefixes, descriptor, hp, seed, attributes, max_prefix)
        return fit_prepared(prepared, hp, seed, metadata)
    single = Bucketer("single")
    if descriptor.predictor == TRANSITION_SYSTEM:
        model = fit_transition_system(train_prefixes, **_pick(hp, TS_PARAMS))
    else:
        model = fit_mean_baseline(train_prefixes)
    return ModelBundle(descriptor, hp, seed, single, {"0": (None, model)}, {0: "0"}, dict(metadata or {}))


# ---------------------------------------------------------------------------
# prediction

def predict_many(bundle: ModelBundle, prefixes: Sequence[LabeledPrefix]) -> np.ndarray:
    """Predictions in seconds, clamped at zero, aligned with ``prefixes``."""
    out = np.zeros(len(prefixes))
    if not prefixes:
        return out
    if bundle.descriptor.predictor != GBT:
        model = bundle.models["0"][1]
        return np.array([model.predict_prefix(p) for p in prefixes])
    ids = assign_buckets(bundle.bucketer, prefixes)
    groups: dict[str, list[int]] = defaultdict(list)
    for pos, b in enumerate(ids):
        groups[bundle.routes[int(b)]].append(pos)
    for key, pos in groups.items():
        schema, model = bundle.models[key]
        X, _ = encode_matrix([prefixes[i] for i in pos], schema)
        out[pos] = model.predict(X)
    return out


def predict_encoded(bundle: ModelBundle, batch) -> np.ndarray:
    """Predict from :meth:`PreparedBuckets.encode_queries` output."""
    n = sum(len(pos) for _, pos, _ in batch)
    out = np.zeros(n)
    for key, pos, X in batch:
        out[pos] = bundle.models[key][1].predict(X)
    return out


def predict(bundle: ModelBundle, prefix: LabeledPrefix) -> float:
    return float(predict_many(bundle, [prefix])[0])


# ---------------------------------------------------------------------------
# persistence

def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def save_bundle(bundle: ModelBundle, directory: str | os.PathLike) -> Path:
    """Write descriptor.json, bucketer.json and bucket_<id>/{schema,model}.json."""
    root = Path(directory)
    if root.exists():
        shutil.rmtree(root)
    root.mkdir(parents=True)
    _dump({
        "method": bundle.descriptor.name,
        **bundle.descriptor.to_dict(),
        "hyperparams": bundle.hyperparams,
        "seed": bundle.seed,
        "routes": {str(k): v for k, v in sorted(bundle.routes.items())},
        "metadata": bundle.metadata,
    }, root / "descriptor.json")
    _dump(bundle.bucketer.to_dict(), root / "bucketer.json")
    for key, (schema, model) in sorted(bundle.models.items()):
        sub = root / f"bucket_{key}"
        sub.mkdir()
        if schema is not None:
            _dump(schema.to_dict(), sub / "schema.json")
        _dump(model.to_dict(), sub / "model.json")
    return root


_MODEL_TYPES = {"gbt": GbtModel, TRANSITION_SYSTEM: TransitionSystemModel, MEAN_BASELINE: MeanBaselineModel}


def load_bundle(directory: str | os.PathLike) -> ModelBundle:
    root = Path(directory)
    desc = json.loads((root / "descriptor.json").read_text(encoding="utf-8"))
    bucketer = Bucketer.from_dict(json.loads((root / "bucketer.json").read_text(encoding="utf-8")))
    models = {}
    for sub in sorted(root.glob("bucket_*")):
        key = sub.name[len("bucket_"):]
        schema_path = sub / "schema.json"
        schema = (FeatureSchema.from_dict(json.loads(schema_path.read_text(encoding="utf-8")))
                  if schema_path.exists() else None)
        raw = json.loads((sub / "model.json").read_text(encoding="utf-8"))
        models[key] = (schema, _MODEL_TYPES[raw["type"]].from_dict(raw))
    return ModelBundle(MethodDescriptor.from_dict(desc), desc["hyperparams"], desc["seed"], bucketer,
                       models, {int(k): v for k, v in desc["routes"].items()}, desc.get("metadata", {}))
