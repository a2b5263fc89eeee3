import numpy as np
import pytest

from dpaudit.data import CLASSIFICATION, REGRESSION
from dpaudit.events import IntervalEvent, LabelEvent, enumerate_events, event_from_dict


def test_label_event_contains_and_wildcards():
    out = np.array([[0, 1], [1, 1], [0, 0]])
    assert LabelEvent((0, None)).contains(out).tolist() == [True, False, True]
    assert LabelEvent((0, 1)).contains(out).tolist() == [True, False, False]
    with pytest.raises(ValueError):
        LabelEvent((None, None))


def test_interval_event_contains():
    out = np.array([[0.5, 2.0], [1.5, -1.0], [1.0, 0.0]])
    assert IntervalEvent(((0, 1.0, "<"),)).contains(out).tolist() == [True, False, False]
    assert IntervalEvent(((0, 1.0, ">="), (1, 0.0, ">="))).contains(out).tolist() == [False, False, True]
    with pytest.raises(ValueError):
        IntervalEvent(((0, 1.0, "<="),))


def test_label_enumeration_covers_each_position_label():
    out = np.array([[0, 2], [1, 2], [0, 0], [0, 2]])
    events = enumerate_events(out, CLASSIFICATION)
    singles = {e.pattern for e in events if sum(p is not None for p in e.pattern) == 1}
    assert singles == {(lab, None) for lab in (0, 1, 2)} | {(None, lab) for lab in (0, 1, 2)}
    patterns = [e.pattern for e in events if None not in e.pattern]
    # most frequent observed pattern first
    assert patterns[0] == (0, 2)
    assert set(patterns) == {(0, 2), (1, 2), (0, 0)}


def test_interval_enumeration_deciles_both_sides():
    out = np.arange(100, dtype=float)[:, None]
    events = enumerate_events(out, REGRESSION)
    assert len(events) == 18
    thresholds = sorted({e.constraints[0][1] for e in events})
    np.testing.assert_allclose(thresholds, np.quantile(out[:, 0], np.arange(1, 10) / 10))
    for e in events:
        frac = e.contains(out).mean()
        assert 0.05 <= frac <= 0.95


def test_constant_outputs_collapse_thresholds():
    events = enumerate_events(np.full((50, 1), 3.0), REGRESSION)
    assert len(events) == 2


def test_conjunctions_only_across_positions():
    rng = np.random.default_rng(0)
    out = rng.normal(size=(200, 3))
    base = enumerate_events(out, REGRESSION)
    # interleave positions so the top of the ranking spans all three
    ranked = sorted(base, key=lambda e: (base.index(e) % 18, e.constraints[0][0]))
    events = enumerate_events(out, REGRESSION, ranked=ranked)
    extras = events[len(base):]
    assert len(extras) == 12  # 15 pairs of the top six, minus 3 same-position pairs
    for e in extras:
        assert len(e.constraints) == 2
        assert len(e.positions()) == 2
    assert len(enumerate_events(out, REGRESSION, ranked=ranked, limit=10)) == 10


def test_event_dict_round_trip():
    for e in (LabelEvent((1, None, 0)), IntervalEvent(((0, 0.25, "<"), (2, -1.5, ">=")))):
        assert event_from_dict(e.to_dict()) == e


def test_binary_batch_of_three():
    out = np.array([[0, 1, 1], [1, 1, 0], [0, 1, 1]])
    events = enumerate_events(out, CLASSIFICATION)
    singles = [e for e in events if sum(p is not None for p in e.pattern) == 1]
    assert len(singles) == 6
    assert len(events) == 6 + 2


def test_constant_outputs_all_or_nothing():
    out = np.full((40, 2), 1.5)
    for e in enumerate_events(out, REGRESSION):
        assert e.contains(out).mean() in (0.0, 1.0)
