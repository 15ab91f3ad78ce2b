"""Fixed-width feature encodings of case prefixes (last state, aggregation, index)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .eventlog import CATEGORICAL, AttributeSchema, LabeledPrefix

LAST_STATE = "last_state"
AGGREGATION = "aggregation"
INDEX = "index"
ENCODINGS = (LAST_STATE, AGGREGATION, INDEX)

MISSING_TOKEN = "__missing__"
ACTIVITY = "Activity"
TIME = "Time"
EXTRA_AGGREGATES = ("min", "max", "mean")


@dataclass(frozen=True)
class FeatureSchema:
    """Frozen encoding contract: which attributes, which vocabularies, which columns."""

    encoding_kind: str
    static_attrs: tuple[str, ...]
    dynamic_attrs: tuple[str, ...]
    attr_kinds: Mapping[str, str]
    categorical_vocab: Mapping[str, tuple[str, ...]]
    index_length: int | None = None
    extra_aggregates: tuple[str, ...] = ()
    column_names: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.encoding_kind not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding_kind!r}")
        if self.encoding_kind == INDEX and (self.index_length is None or self.index_length < 1):
            raise ValueError("index encoding needs index_length >= 1")
        bad = set(self.extra_aggregates) - set(EXTRA_AGGREGATES)
        if bad:
            raise ValueError(f"unknown aggregate(s) {sorted(bad)}")
        cols = tuple(_columns(self))
        if len(set(cols)) != len(cols):
            raise ValueError("duplicate column names in feature schema")
        object.__setattr__(self, "column_names", cols)

    @property
    def width(self) -> int:
        return len(self.column_names)

    def is_categorical(self, name: str) -> bool:
        return self.attr_kinds[name] == CATEGORICAL

    def to_dict(self) -> dict:
        return {
            "encoding_kind": self.encoding_kind,
            "static_attrs": list(self.static_attrs),
            "dynamic_attrs": list(self.dynamic_attrs),
            "attr_kinds": dict(self.attr_kinds),
            "categorical_vocab": {k: list(v) for k, v in self.categorical_vocab.items()},
            "index_length": self.index_length,
            "extra_aggregates": list(self.extra_aggregates),
            "column_names": list(self.column_names),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        schema = cls(
            encoding_kind=d["encoding_kind"],
            static_attrs=tuple(d["static_attrs"]),
            dynamic_attrs=tuple(d["dynamic_attrs"]),
            attr_kinds=dict(d["attr_kinds"]),
            categorical_vocab={k: tuple(v) for k, v in d["categorical_vocab"].items()},
            index_length=d.get("index_length"),
            extra_aggregates=tuple(d.get("extra_aggregates", ())),
        )
        if "column_names" in d and list(d["column_names"]) != list(schema.column_names):
            raise ValueError("stored column names do not match the schema definition")
        return schema

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: float
    case_id: str
    k: int


def _onehot_names(prefix: str, vocab: Sequence[str]) -> list[str]:
    return [f"{prefix}={v}" for v in vocab]


def _event_columns(schema: FeatureSchema, suffix: str) -> list[str]:
    cols = _onehot_names(f"{ACTIVITY}_{suffix}", schema.categorical_vocab[ACTIVITY])
    cols.append(f"{TIME}_{suffix}")
    for name in schema.dynamic_attrs:
        if schema.is_categorical(name):
            cols += _onehot_names(f"{name}_{suffix}", schema.categorical_vocab[name])
        else:
            cols.append(f"{name}_{suffix}")
    return cols


def _columns(schema: FeatureSchema) -> list[str]:
    cols = []
    for name in schema.static_attrs:
        if schema.is_categorical(name):
            cols += _onehot_names(name, schema.categorical_vocab[name])
        else:
            cols.append(name)
    if schema.encoding_kind == LAST_STATE:
        cols += _event_columns(schema, "last")
    elif schema.encoding_kind == INDEX:
        for i in range(1, schema.index_length + 1):
            cols += _event_columns(schema, str(i))
    else:
        cols += _onehot_names(f"count_{ACTIVITY}", schema.categorical_vocab[ACTIVITY])
        cat = [n for n in schema.dynamic_attrs if schema.is_categorical(n)]
        num = [n for n in schema.dynamic_attrs if not schema.is_categorical(n)]
        for name in cat:
            cols += _onehot_names(f"count_{name}", schema.categorical_vocab[name])
        cols.append(f"sum_{TIME}")
        cols += [f"sum_{n}" for n in num]
        for agg in schema.extra_aggregates:
            cols += [f"{agg}_{n}" for n in [TIME] + num]
    return cols


def _token(value) -> str:
    return MISSING_TOKEN if value is None else str(value)


def default_dynamic_attrs(attributes: AttributeSchema, encoding_kind: str) -> tuple[str, ...]:
    # elapsed time is the dedicated Time column; aggregation already sums t_prev as sum_Time
    skip = {"t_start"} | ({"t_prev"} if encoding_kind == AGGREGATION else set())
    return tuple(n for n in attributes.dynamic_attrs if n not in skip)


def fit_schema(prefixes: Sequence[LabeledPrefix], encoding_kind: str, attributes: AttributeSchema,
               *, index_length: int | None = None, static_attrs: Sequence[str] | None = None,
               dynamic_attrs: Sequence[str] | None = None,
               extra_aggregates: Sequence[str] = ()) -> FeatureSchema:
    """Freeze vocabularies on ``prefixes`` (training data only).

    By default every static attribute of ``attributes`` is used and every
    dynamic one except those already covered by the Time column.
    """
    if not prefixes:
        raise ValueError("cannot fit a feature schema on an empty prefix list")
    static = tuple(attributes.static_attrs if static_attrs is None else static_attrs)
    dynamic = tuple(default_dynamic_attrs(attributes, encoding_kind) if dynamic_attrs is None
                    else dynamic_attrs)
    kinds = {n: attributes.kind(n) for n in static + dynamic}
    kinds[ACTIVITY] = CATEGORICAL

    seen: dict[str, set[str]] = {ACTIVITY: set()}
    seen.update({n: set() for n in static + dynamic if kinds[n] == CATEGORICAL})
    for p in prefixes:
        for n in static:
            if kinds[n] == CATEGORICAL:
                seen[n].add(_token(p.case_attrs.get(n)))
        for e in p.events:
            seen[ACTIVITY].add(e.activity)
            for n in dynamic:
                if kinds[n] == CATEGORICAL:
                    seen[n].add(_token(e.event_attrs.get(n)))
    vocab = {n: tuple(sorted(v)) for n, v in seen.items()}
    if encoding_kind == INDEX and index_length is None:
        index_length = max(p.k for p in prefixes)
    return FeatureSchema(encoding_kind, static, dynamic, kinds, vocab,
                         index_length if encoding_kind == INDEX else None,
                         tuple(extra_aggregates) if encoding_kind == AGGREGATION else ())


# ---------------------------------------------------------------------------
# symbolic (pre-one-hot) rows

def _elapsed(prefix: LabeledPrefix, i: int) -> float:
    return (prefix.events[i].timestamp - prefix.events[0].timestamp).total_seconds()


def _num(value) -> float:
    return 0.0 if value is None else float(value)


def symbolic_row(prefix: LabeledPrefix, schema: FeatureSchema) -> dict[str, object]:
    """Logical columns before one-hot expansion, e.g. ``Activity_last -> 'D'``.

    Aggregation counts come out as ``Activity_A``-style count columns.
    Padded index positions hold ``None``.
    """
    row: dict[str, object] = {n: prefix.case_attrs.get(n) for n in schema.static_attrs}
    kind = schema.encoding_kind
    if kind in (LAST_STATE, INDEX):
        if kind == LAST_STATE:
            slots = [("last", len(prefix.events) - 1)]
        else:
            slots = [(str(i + 1), i if i < len(prefix.events) else None)
                     for i in range(schema.index_length)]
        for suffix, i in slots:
            e = prefix.events[i] if i is not None else None
            row[f"{ACTIVITY}_{suffix}"] = e.activity if e else None
            row[f"{TIME}_{suffix}"] = _elapsed(prefix, i) if e else None
            for n in schema.dynamic_attrs:
                row[f"{n}_{suffix}"] = e.event_attrs.get(n) if e else None
        return row

    for v in schema.categorical_vocab[ACTIVITY]:
        row[f"{ACTIVITY}_{v}"] = 0
    for e in prefix.events:
        key = f"{ACTIVITY}_{e.activity}"
        row[key] = row.get(key, 0) + 1
    cat = [n for n in schema.dynamic_attrs if schema.is_categorical(n)]
    num = [n for n in schema.dynamic_attrs if not schema.is_categorical(n)]
    for n in cat:
        for v in schema.categorical_vocab[n]:
            row[f"{n}_{v}"] = 0
        for e in prefix.events:
            key = f"{n}_{_token(e.event_attrs.get(n))}"
            row[key] = row.get(key, 0) + 1
    series = {TIME: _time_deltas(prefix)}
    series.update({n: [_num(e.event_attrs.get(n)) for e in prefix.events] for n in num})
    for n, xs in series.items():
        row[f"sum_{n}"] = sum(xs)
    for agg in schema.extra_aggregates:
        for n, xs in series.items():
            row[f"{agg}_{n}"] = _aggregate(agg, xs)
    return row


def _time_deltas(prefix: LabeledPrefix) -> list[float]:
    ts = [e.timestamp for e in prefix.events]
    return [0.0] + [(b - a).total_seconds() for a, b in zip(ts, ts[1:])]


def _aggregate(agg: str, xs: list[float]) -> float:
    if agg == "min":
        return min(xs)
    if agg == "max":
        return max(xs)
    return sum(xs) / len(xs)


# ---------------------------------------------------------------------------
# numeric encoders

class _Writer:
    def __init__(self, width: int):
        self.values = np.zeros(width)
        self.pos = 0

    def numeric(self, x) -> None:
        self.values[self.pos] = _num(x)
        self.pos += 1

    def onehot(self, vocab: Sequence[str], value) -> None:
        # unseen or padded values leave the whole block at zero
        if value is not None or MISSING_TOKEN in vocab:
            token = _token(value)
            try:
                self.values[self.pos + vocab.index(token)] = 1.0
            except ValueError:
                pass
        self.pos += len(vocab)

    def counts(self, vocab: Sequence[str], tokens: Sequence[str]) -> None:
        lookup = {v: i for i, v in enumerate(vocab)}
        for t in tokens:
            i = lookup.get(t)
            if i is not None:
                self.values[self.pos + i] += 1.0
        self.pos += len(vocab)


def _write_static(w: _Writer, prefix: LabeledPrefix, schema: FeatureSchema) -> None:
    for n in schema.static_attrs:
        value = prefix.case_attrs.get(n)
        if schema.is_categorical(n):
            w.onehot(schema.categorical_vocab[n], value)
        else:
            w.numeric(value)


def _write_event(w: _Writer, prefix: LabeledPrefix, schema: FeatureSchema, i: int | None) -> None:
    if i is None:
        w.pos += len(schema.categorical_vocab[ACTIVITY]) + 1
        for n in schema.dynamic_attrs:
            w.pos += len(schema.categorical_vocab[n]) if schema.is_categorical(n) else 1
        return
    e = prefix.events[i]
    w.onehot(schema.categorical_vocab[ACTIVITY], e.activity)
    w.numeric(_elapsed(prefix, i))
    for n in schema.dynamic_attrs:
        if schema.is_categorical(n):
            w.onehot(schema.categorical_vocab[n], e.event_attrs.get(n))
        else:
            w.numeric(e.event_attrs.get(n))


def _vector(prefix: LabeledPrefix, w: _Writer, schema: FeatureSchema) -> FeatureVector:
    assert w.pos == schema.width, (w.pos, schema.width)
    return FeatureVector(w.values, prefix.remaining_seconds, prefix.case_id, prefix.k)


def encode_last_state(prefix: LabeledPrefix, schema: FeatureSchema) -> FeatureVector:
    if schema.encoding_kind != LAST_STATE:
        raise ValueError(f"schema is for {schema.encoding_kind!r}, not last_state")
    w = _Writer(schema.width)
    _write_static(w, prefix, schema)
    _write_event(w, prefix, schema, len(prefix.events) - 1)
    return _vector(prefix, w, schema)


def encode_aggregation(prefix: LabeledPrefix, schema: FeatureSchema) -> FeatureVector:
    if schema.encoding_kind != AGGREGATION:
        raise ValueError(f"schema is for {schema.encoding_kind!r}, not aggregation")
    w = _Writer(schema.width)
    _write_static(w, prefix, schema)
    w.counts(schema.categorical_vocab[ACTIVITY], [e.activity for e in prefix.events])
    cat = [n for n in schema.dynamic_attrs if schema.is_categorical(n)]
    num = [n for n in schema.dynamic_attrs if not schema.is_categorical(n)]
    for n in cat:
        w.counts(schema.categorical_vocab[n], [_token(e.event_attrs.get(n)) for e in prefix.events])
    series = [_time_deltas(prefix)] + [[_num(e.event_attrs.get(n)) for e in prefix.events] for n in num]
    for xs in series:
        w.numeric(sum(xs))
    for agg in schema.extra_aggregates:
        for xs in series:
            w.numeric(_aggregate(agg, xs))
    return _vector(prefix, w, schema)


def encode_index(prefix: LabeledPrefix, schema: FeatureSchema) -> FeatureVector:
    """Positions 1..n in order; shorter prefixes are zero padded, longer ones keep their first n events."""
    if schema.encoding_kind != INDEX:
        raise ValueError(f"schema is for {schema.encoding_kind!r}, not index")
    w = _Writer(schema.width)
    _write_static(w, prefix, schema)
    for i in range(schema.index_length):
        _write_event(w, prefix, schema, i if i < len(prefix.events) else None)
    return _vector(prefix, w, schema)


_ENCODERS = {LAST_STATE: encode_last_state, AGGREGATION: encode_aggregation, INDEX: encode_index}


def encode(prefix: LabeledPrefix, schema: FeatureSchema) -> FeatureVector:
    return _ENCODERS[schema.encoding_kind](prefix, schema)


def encode_matrix(prefixes: Sequence[LabeledPrefix], schema: FeatureSchema) -> tuple[np.ndarray, np.ndarray]:
    """Stack encodings into (X, y)."""
    fn = _ENCODERS[schema.encoding_kind]
    X = np.zeros((len(prefixes), schema.width))
    y = np.zeros(len(prefixes))
    for i, p in enumerate(prefixes):
        X[i] = fn(p, schema).values
        y[i] = p.remaining_seconds
    return X, y
