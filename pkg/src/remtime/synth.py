"""Synthetic event logs with controllable control flow and timing."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np

from .eventlog import DEFAULT_TIMESTAMP_FORMAT, AttributeSchema, AttributeSpec, ColumnMapping, parse_event_log

SYNTH_MAPPING = ColumnMapping("case_id", "activity", "timestamp", DEFAULT_TIMESTAMP_FORMAT)


@dataclass(frozen=True)
class Pattern:
    activities: tuple[str, ...]
    gap_seconds: float = 100.0
    weight: float = 1.0

    @classmethod
    def parse(cls, text: str) -> "Pattern":
        """``A,B,C`` or ``A,B,C:250`` or ``A,B,C:250:2`` (gap seconds, sampling weight)."""
        parts = text.split(":")
        acts = tuple(a.strip() for a in parts[0].split(",") if a.strip())
        if not acts:
            raise ValueError(f"empty pattern {text!r}")
        gap = float(parts[1]) if len(parts) > 1 else 100.0
        weight = float(parts[2]) if len(parts) > 2 else 1.0
        return cls(acts, gap, weight)


def generate_rows(n_cases: int, patterns: Sequence[Pattern], *, noise: float = 0.0, seed: int = 0,
                  start: datetime = datetime(2020, 1, 6), case_interval: float = 3600.0,
                  resources: Sequence[str] = ()) -> list[dict]:
    """One dict per event. Gaps are ``gap * (1 + noise * U(-1, 1))`` rounded to whole seconds."""
    rng = np.random.default_rng(seed)
    weights = np.array([p.weight for p in patterns], dtype=float)
    choice = rng.choice(len(patterns), size=n_cases, p=weights / weights.sum())
    width = len(str(max(n_cases - 1, 0)))
    rows = []
    for c in range(n_cases):
        pattern = patterns[choice[c]]
        t = start + timedelta(seconds=round(c * case_interval))
        for i, act in enumerate(pattern.activities):
            if i:
                gap = pattern.gap_seconds * (1.0 + noise * rng.uniform(-1.0, 1.0)) if noise else pattern.gap_seconds
                t += timedelta(seconds=max(0, round(gap)))
            row = {"case_id": f"c{c:0{width}d}", "activity": act,
                   "timestamp": t.strftime(DEFAULT_TIMESTAMP_FORMAT)}
            if resources:
                row["resource"] = resources[int(rng.integers(len(resources)))]
            rows.append(row)
    return rows


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    fields = list(rows[0]) if rows else ["case_id", "activity", "timestamp"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def synth_schema(rows: Sequence[dict]) -> AttributeSchema:
    if rows and "resource" in rows[0]:
        return AttributeSchema((AttributeSpec("resource", "categorical", False),))
    return AttributeSchema()


def generate_log(n_cases: int, patterns: Sequence[Pattern], **kwargs):
    rows = generate_rows(n_cases, patterns, **kwargs)
    return parse_event_log(rows_to_csv(rows), SYNTH_MAPPING, synth_schema(rows))
