"""Event logs: CSV parsing, preprocessing, prefix extraction and log statistics."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime
from statistics import fmean, pstdev
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

CATEGORICAL = "categorical"
NUMERIC = "numeric"
OTHER = "other"
DEFAULT_TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
DERIVED_ATTRS = ("weekday", "hour", "t_prev", "t_start")
SECONDS_PER_DAY = 86400.0


class ParseError(ValueError):
    """Fatal problem in an input CSV (missing column, bad timestamp)."""


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str = CATEGORICAL
    static: bool = False

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, NUMERIC):
            raise ValueError(f"attribute {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[AttributeSpec, ...] = ()

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate attribute names in schema: {names}")

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def static_attrs(self) -> list[str]:
        return [a.name for a in self.attributes if a.static]

    @property
    def dynamic_attrs(self) -> list[str]:
        return [a.name for a in self.attributes if not a.static]

    def kind(self, name: str) -> str:
        for a in self.attributes:
            if a.name == name:
                return a.kind
        raise KeyError(name)

    def without(self, names: Iterable[str]) -> "AttributeSchema":
        drop = set(names)
        return AttributeSchema(tuple(a for a in self.attributes if a.name not in drop))

    def to_dict(self) -> list[dict]:
        return [{"name": a.name, "kind": a.kind, "static": a.static} for a in self.attributes]

    @classmethod
    def from_dict(cls, items: Sequence[Mapping]) -> "AttributeSchema":
        return cls(tuple(AttributeSpec(d["name"], d.get("kind", CATEGORICAL), bool(d.get("static", False)))
                         for d in items))


@dataclass(frozen=True)
class ColumnMapping:
    case_id: str = "case_id"
    activity: str = "activity"
    timestamp: str = "timestamp"
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT


@dataclass(frozen=True)
class Event:
    activity: str
    timestamp: datetime
    case_attrs: Mapping[str, object] = field(default_factory=dict)
    # None is the missing marker for both categorical and numeric values
    event_attrs: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    def __len__(self):
        return len(self.events)

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)

    @property
    def start(self) -> datetime:
        return self.events[0].timestamp

    @property
    def duration_seconds(self) -> float:
        return (self.events[-1].timestamp - self.events[0].timestamp).total_seconds()


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]
    schema: AttributeSchema = AttributeSchema()
    numeric_parse_failures: int = 0

    def __post_init__(self):
        ids = [t.case_id for t in self.traces]
        if len(set(ids)) != len(ids):
            raise ValueError("case ids must be unique across traces")

    def __len__(self):
        return len(self.traces)

    def subset(self, case_ids: Iterable[str]) -> "EventLog":
        keep = set(case_ids)
        return replace(self, traces=tuple(t for t in self.traces if t.case_id in keep))


@dataclass(frozen=True)
class LabeledPrefix:
    case_id: str
    k: int
    events: tuple[Event, ...]
    remaining_seconds: float
    elapsed_seconds: float

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)

    @property
    def case_attrs(self) -> Mapping[str, object]:
        return self.events[0].case_attrs


@dataclass(frozen=True)
class LogStats:
    n_cases: int
    distinct_trace_ratio: float
    n_event_classes: int
    mean_distinct_event_ratio: float
    mean_case_length: float
    cv_case_length: float
    mean_case_duration_days: float
    cv_case_duration: float

    def as_row(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# parsing

def _coerce(value: str, kind: str) -> tuple[object, bool]:
    """Return (coerced value, numeric_failure)."""
    value = value.strip()
    if value == "":
        return None, False
    if kind == NUMERIC:
        try:
            x = float(value)
        except ValueError:
            return None, True
        if not math.isfinite(x):
            return None, True
        return x, False
    return value, False


def _open_source(csv_source):
    if isinstance(csv_source, (str, os.PathLike)) and not (isinstance(csv_source, str) and "\n" in csv_source):
        return open(csv_source, newline="", encoding="utf-8")
    if isinstance(csv_source, str):
        return io.StringIO(csv_source)
    return csv_source


def parse_event_log(csv_source, mapping: ColumnMapping = ColumnMapping(),
                    attribute_schema: AttributeSchema = AttributeSchema()) -> EventLog:
    """Parse a CSV event log (one row per event) into an :class:`EventLog`.

    ``csv_source`` is a path, a file object, or the CSV text itself. Columns
    not mentioned in ``mapping`` or ``attribute_schema`` are ignored. Case
    attributes take the value of the first event of the case.
    """
    fh = _open_source(csv_source)
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = [mapping.case_id, mapping.activity, mapping.timestamp] + attribute_schema.names
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"missing mapped column(s) {missing} in header {header} (row 1)")

        failures = 0
        rows_by_case: dict[str, list[tuple[datetime, int, str, dict]]] = defaultdict(list)
        for row_no, row in enumerate(reader, start=2):
            case_id = (row[mapping.case_id] or "").strip()
            if not case_id:
                raise ParseError(f"row {row_no}: empty case id")
            activity = (row[mapping.activity] or "").strip()
            if not activity:
                raise ParseError(f"row {row_no}: empty activity")
            raw_ts = (row[mapping.timestamp] or "").strip()
            try:
                ts = datetime.strptime(raw_ts, mapping.timestamp_format)
            except ValueError as exc:
                raise ParseError(f"row {row_no}: unparseable timestamp {raw_ts!r} "
                                 f"(format {mapping.timestamp_format!r})") from exc
            values = {}
            for spec in attribute_schema.attributes:
                v, failed = _coerce(row[spec.name] or "", spec.kind)
                failures += failed
                values[spec.name] = v
            rows_by_case[case_id].append((ts, row_no, activity, values))
    finally:
        if fh is not csv_source:
            fh.close()

    if failures:
        logger.warning("%d numeric value(s) could not be parsed and were treated as missing", failures)

    static = attribute_schema.static_attrs
    dynamic = attribute_schema.dynamic_attrs
    traces = []
    for case_id in sorted(rows_by_case):
        rows = sorted(rows_by_case[case_id], key=lambda r: (r[0], r[1]))
        case_attrs = {name: rows[0][3][name] for name in static}
        events = tuple(Event(activity=act, timestamp=ts, case_attrs=case_attrs,
                             event_attrs={name: vals[name] for name in dynamic})
                       for ts, _, act, vals in rows)
        traces.append(Trace(case_id, events))
    return EventLog(tuple(traces), attribute_schema, failures)


# ---------------------------------------------------------------------------
# preprocessing

@dataclass(frozen=True)
class PreprocessConfig:
    incomplete_markers: tuple[str, ...] = ()
    rare_case_threshold: int = 10
    drop_constant: bool = True
    time_features: bool = True


def _with_time_features(trace: Trace) -> Trace:
    t0 = trace.events[0].timestamp
    events = []
    prev = t0
    for e in trace.events:
        attrs = dict(e.event_attrs)
        attrs["weekday"] = float(e.timestamp.weekday())
        attrs["hour"] = float(e.timestamp.hour)
        attrs["t_prev"] = (e.timestamp - prev).total_seconds()
        attrs["t_start"] = (e.timestamp - t0).total_seconds()
        prev = e.timestamp
        events.append(replace(e, event_attrs=attrs))
    return replace(trace, events=tuple(events))


def _case_value_counts(traces: Sequence[Trace], name: str, static: bool) -> Counter:
    counts: Counter = Counter()
    for t in traces:
        if static:
            values = {t.events[0].case_attrs.get(name)}
        else:
            values = {e.event_attrs.get(name) for e in t.events}
        values.discard(None)
        counts.update(values)
    return counts


def _map_attribute(traces: list[Trace], name: str, static: bool, fn) -> list[Trace]:
    out = []
    for t in traces:
        if static:
            ca = dict(t.events[0].case_attrs)
            ca[name] = fn(ca.get(name))
            events = tuple(replace(e, case_attrs=ca) for e in t.events)
        else:
            events = tuple(replace(e, event_attrs={**e.event_attrs, name: fn(e.event_attrs.get(name))})
                           for e in t.events)
        out.append(replace(t, events=events))
    return out


def _drop_attributes(traces: list[Trace], names: set[str]) -> list[Trace]:
    out = []
    for t in traces:
        ca = {k: v for k, v in t.events[0].case_attrs.items() if k not in names}
        events = tuple(replace(e, case_attrs=ca,
                               event_attrs={k: v for k, v in e.event_attrs.items() if k not in names})
                       for e in t.events)
        out.append(replace(t, events=events))
    return out


def preprocess(log: EventLog, config: PreprocessConfig = PreprocessConfig()) -> EventLog:
    """Drop pending cases, derive time features, merge rare values, drop constant attributes.

    The activity label is not subject to rare-value merging.
    """
    markers = set(config.incomplete_markers)
    traces = [t for t in log.traces if t.events[-1].activity not in markers]
    if markers:
        logger.info("dropped %d incomplete case(s)", len(log.traces) - len(traces))
    schema = log.schema

    if config.time_features:
        traces = [_with_time_features(t) for t in traces]
        schema = AttributeSchema(schema.without(DERIVED_ATTRS).attributes
                                 + tuple(AttributeSpec(n, NUMERIC, False) for n in DERIVED_ATTRS))

    if config.rare_case_threshold > 0:
        for spec in schema.attributes:
            if spec.kind != CATEGORICAL:
                continue
            counts = _case_value_counts(traces, spec.name, spec.static)
            rare = {v for v, c in counts.items() if c < config.rare_case_threshold and v != OTHER}
            if rare:
                traces = _map_attribute(traces, spec.name, spec.static,
                                        lambda v, rare=rare: OTHER if v in rare else v)

    if config.drop_constant and traces:
        constant = set()
        for spec in schema.attributes:
            if spec.static:
                values = {t.events[0].case_attrs.get(spec.name) for t in traces}
            else:
                values = {e.event_attrs.get(spec.name) for t in traces for e in t.events}
            if len(values) <= 1:
                constant.add(spec.name)
        if constant:
            logger.info("dropping constant attribute(s): %s", sorted(constant))
            traces = _drop_attributes(traces, constant)
            schema = schema.without(constant)

    return EventLog(tuple(traces), schema, log.numeric_parse_failures)


# ---------------------------------------------------------------------------
# prefixes

def make_prefix(trace: Trace, k: int) -> LabeledPrefix:
    """hd^k of ``trace`` with its remaining-time label; any 1 <= k <= len(trace)."""
    if not 1 <= k <= len(trace):
        raise ValueError(f"prefix length {k} outside 1..{len(trace)}")
    first, last, end = trace.events[0].timestamp, trace.events[k - 1].timestamp, trace.events[-1].timestamp
    return LabeledPrefix(case_id=trace.case_id, k=k, events=trace.events[:k],
                         remaining_seconds=(end - last).total_seconds(),
                         elapsed_seconds=(last - first).total_seconds())


def extract_prefix_log(log: EventLog, max_prefix: int = 20) -> list[LabeledPrefix]:
    """All prefixes with 1 <= k <= min(|trace| - 1, max_prefix), ordered by case id then k."""
    if max_prefix < 1:
        raise ValueError("max_prefix must be >= 1")
    out = []
    for trace in sorted(log.traces, key=lambda t: t.case_id):
        for k in range(1, min(len(trace) - 1, max_prefix) + 1):
            out.append(make_prefix(trace, k))
    return out


# ---------------------------------------------------------------------------
# statistics

def _cv(values: Sequence[float]) -> float:
    m = fmean(values)
    return pstdev(values) / m if m > 0 else 0.0


def log_stats(log: EventLog) -> LogStats:
    if not log.traces:
        raise ValueError("no cases")
    lengths = [len(t) for t in log.traces]
    durations = [t.duration_seconds / SECONDS_PER_DAY for t in log.traces]
    sequences = {t.activities for t in log.traces}
    classes = {a for t in log.traces for a in t.activities}
    der = fmean(len(set(t.activities)) / len(t) for t in log.traces)
    return LogStats(
        n_cases=len(log.traces),
        distinct_trace_ratio=len(sequences) / len(log.traces),
        n_event_classes=len(classes),
        mean_distinct_event_ratio=der,
        mean_case_length=fmean(lengths),
        cv_case_length=_cv(lengths),
        mean_case_duration_days=fmean(durations),
        cv_case_duration=_cv(durations),
    )


def mean_case_duration_seconds(log: EventLog) -> float:
    if not log.traces:
        raise ValueError("no cases")
    return fmean(t.duration_seconds for t in log.traces)
