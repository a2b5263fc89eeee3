"""Output events: measurable subsets of a mechanism's output space."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from dpaudit.data import CLASSIFICATION

MAX_EVENTS = 512
DECILES = tuple(q / 10 for q in range(1, 10))


@dataclass(frozen=True)
class LabelEvent:
    """Label pattern over the batch positions; ``None`` is a wildcard."""

    pattern: tuple

    def __post_init__(self):
        if all(p is None for p in self.pattern):
            raise ValueError("an event must constrain at least one position")

    def contains(self, outputs: np.ndarray) -> np.ndarray:
        outputs = np.asarray(outputs)
        mask = np.ones(outputs.shape[0], dtype=bool)
        for pos, label in enumerate(self.pattern):
            if label is not None:
                mask &= outputs[:, pos] == label
        return mask

    def describe(self) -> str:
        return "labels=(" + ",".join("*" if p is None else str(p) for p in self.pattern) + ")"

    def to_dict(self) -> dict:
        return {"type": "labels", "pattern": list(self.pattern), "text": self.describe()}


@dataclass(frozen=True)
class IntervalEvent:
    """Conjunction of ``output[pos] < t`` / ``output[pos] >= t`` constraints."""

    constraints: tuple  # of (position, threshold, "<" | ">=")

    def __post_init__(self):
        if not self.constraints:
            raise ValueError("an event must constrain at least one position")
        for _, _, op in self.constraints:
            if op not in ("<", ">="):
                raise ValueError(f"unknown comparison {op!r}")

    def contains(self, outputs: np.ndarray) -> np.ndarray:
        outputs = np.asarray(outputs)
        mask = np.ones(outputs.shape[0], dtype=bool)
        for pos, t, op in self.constraints:
            mask &= outputs[:, pos] < t if op == "<" else outputs[:, pos] >= t
        return mask

    def positions(self) -> set:
        return {pos for pos, _, _ in self.constraints}

    def describe(self) -> str:
        return " & ".join(f"out[{p}] {op} {t!r}" for p, t, op in self.constraints)

    def to_dict(self) -> dict:
        return {
            "type": "intervals",
            "constraints": [[p, t, op] for p, t, op in self.constraints],
            "text": self.describe(),
        }


def event_from_dict(d: dict):
    if d["type"] == "labels":
        return LabelEvent(tuple(d["pattern"]))
    return IntervalEvent(tuple((int(p), float(t), op) for p, t, op in d["constraints"]))


def _label_events(outputs: np.ndarray, limit: int) -> list:
    m = outputs.shape[1]
    labels = np.unique(outputs).tolist()
    events = []
    for pos in range(m):
        for label in labels:
            pattern = [None] * m
            pattern[pos] = int(label)
            events.append(LabelEvent(tuple(pattern)))
    seen = set(events)
    patterns, freq = np.unique(outputs, axis=0, return_counts=True)
    # Most frequent observed patterns first; lexicographic among equals.
    for i in sorted(range(len(patterns)), key=lambda i: -freq[i]):
        ev = LabelEvent(tuple(int(v) for v in patterns[i]))
        if ev not in seen:
            seen.add(ev)
            events.append(ev)
    return events[:limit]


def _interval_events(outputs: np.ndarray, ranked, limit: int) -> list:
    events = []
    for pos in range(outputs.shape[1]):
        thresholds = np.unique(np.quantile(outputs[:, pos], DECILES))
        for t in thresholds:
            for op in ("<", ">="):
                events.append(IntervalEvent(((pos, float(t), op),)))
    if ranked:
        top = [ev for ev in ranked if len(ev.constraints) == 1][:6]
        for a, b in itertools.combinations(top, 2):
            if a.positions() & b.positions():
                continue
            events.append(IntervalEvent(tuple(sorted(a.constraints + b.constraints))))
    return events[:limit]


def enumerate_events(sample_outputs, task: str, ranked=None, limit: int = MAX_EVENTS) -> list:
    """Candidate events from pooled exploratory outputs of shape ``(N, m)``.

    Discrete outputs give every single-position label constraint plus the
    observed full patterns. Real outputs give per-position decile thresholds
    in both orientations; passing ``ranked`` (best single-position events
    first) adds their pairwise conjunctions across positions.
    """
    outputs = np.asarray(sample_outputs)
    if outputs.ndim == 1:
        outputs = outputs[:, None]
    if outputs.shape[0] == 0:
        raise ValueError("need at least one sample output")
    if task == CLASSIFICATION:
        return _label_events(outputs, limit)
    return _interval_events(outputs, ranked, limit)
