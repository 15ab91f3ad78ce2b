"""Annotated transition system: remaining time per abstracted state."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from statistics import fmean, median
from typing import Mapping, Sequence

from ..bucketing import ABSTRACTIONS, state_key
from ..eventlog import LabeledPrefix

STATISTICS = ("mean", "median")


def _stat(values: Sequence[float], statistic: str) -> float:
    return fmean(values) if statistic == "mean" else float(median(values))


@dataclass
class TransitionSystemModel:
    abstraction: str
    horizon: int | None
    statistic: str
    annotations: dict[str, list[float]] = field(default_factory=dict)
    global_statistic: float = 0.0
    _cache: dict[str, float] = field(default_factory=dict, init=False, repr=False, compare=False)

    def state_prediction(self, key: str) -> float:
        if key not in self._cache:
            obs = self.annotations.get(key)
            self._cache[key] = _stat(obs, self.statistic) if obs else self.global_statistic
        return self._cache[key]

    def predict_prefix(self, prefix: LabeledPrefix) -> float:
        return max(0.0, self.state_prediction(state_key(prefix.activities, self.abstraction, self.horizon)))

    def to_dict(self) -> dict:
        return {
            "type": "transition_system",
            "abstraction": self.abstraction,
            "horizon": self.horizon,
            "statistic": self.statistic,
            "annotations": {k: self.annotations[k] for k in sorted(self.annotations)},
            "global_statistic": self.global_statistic,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TransitionSystemModel":
        return cls(d["abstraction"], d.get("horizon"), d["statistic"],
                   {k: list(v) for k, v in d["annotations"].items()}, d["global_statistic"])


def fit_transition_system(prefixes: Sequence[LabeledPrefix], abstraction: str = "sequence",
                          horizon: int | None = None, statistic: str = "mean") -> TransitionSystemModel:
    if not prefixes:
        raise ValueError("cannot fit a transition system on an empty prefix list")
    if abstraction not in ABSTRACTIONS:
        raise ValueError(f"unknown abstraction {abstraction!r}")
    if statistic not in STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}")
    annotations: dict[str, list[float]] = defaultdict(list)
    for p in prefixes:
        annotations[state_key(p.activities, abstraction, horizon)].append(p.remaining_seconds)
    labels = [p.remaining_seconds for p in prefixes]
    return TransitionSystemModel(abstraction, horizon, statistic, dict(annotations), _stat(labels, statistic))
