import math

import numpy as np
import pytest

from dpaudit.data import AdjacencySpec, Dataset
from dpaudit.detector import (
    AuditError,
    CandidateInput,
    SweepConfig,
    default_grid,
    epsilon_sweep,
    generate_inputs,
    measured_epsilon,
    run_hypothesis_test,
    sample_outputs,
    select_event,
    select_test_points,
)
from dpaudit.events import IntervalEvent
from dpaudit.mechanisms import ConstantMechanism, Mechanism, NoisyCount, bernoulli_pair, broken_noisy_count
from dpaudit.models import get_model_kind
from dpaudit.report import from_sweep
from dpaudit.resampling import split_minority
from dpaudit.streams import Streams, resolve_workers, run_chunked

FULL = AdjacencySpec()


def regression_data(n=60, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    return Dataset.from_arrays(X, X @ [1.0, -2.0] + rng.exponential(size=n))


def test_measured_epsilon_rule():
    grid = [0.1, 0.2, 0.3, 0.4]
    assert measured_epsilon(grid, [0.0, 0.01, 0.2, 0.9], 0.05).to_dict() == {"status": "in-grid", "value": 0.3, "rendered": 0.3}
    below = measured_epsilon(grid, [0.5, 0.6, 0.7, 0.8], 0.05)
    assert below.status == "below-grid" and below.rendered == 0.0 and below.value == 0.1
    above = measured_epsilon(grid, [0.0] * 4, 0.05)
    assert above.status == "above-grid" and above.rendered == 0.4
    # exactly alpha counts as a rejection
    assert measured_epsilon(grid, [0.05, 0.06, 0.0, 0.0], 0.05).value == 0.2


def test_default_grid():
    g = default_grid(1.0)
    assert len(g) == 20 and g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(2.0)
    assert default_grid(1.0, k=2)[-1] == pytest.approx(4.0)
    assert default_grid(math.inf)[-1] == pytest.approx(10.0)


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(grid=())
    with pytest.raises(ValueError):
        SweepConfig(grid=(0.2, 0.1))
    with pytest.raises(ValueError):
        SweepConfig(grid=(0.1,), strategy="nope")


def test_generate_inputs_random_groups():
    d = regression_data()
    inputs = generate_inputs(d, 3, 8, "random", np.random.default_rng(0), args=(1, 2))
    assert len(inputs) == 8
    for c in inputs:
        assert c.d1 == FULL and c.d2.k == 3 and c.args == (1, 2)
    assert len({c.d2 for c in inputs}) == 8


def test_generate_inputs_extreme_and_minority():
    d = regression_data()
    ext = generate_inputs(d, 1, 4, "extreme", np.random.default_rng(0))
    top = int(np.argmax(d.targets))
    assert ext[0].d2.removed_indices == (top,)
    minority, _ = split_minority(d)
    mino = generate_inputs(d, 2, 5, "minority", np.random.default_rng(0))
    assert all(set(c.d2.removed_indices) <= set(minority.tolist()) for c in mino)
    mixed = generate_inputs(d, 1, 6, "mixed", np.random.default_rng(0))
    assert mixed[0].d2.removed_indices == (top,)
    assert len({c.d2 for c in mixed}) == len(mixed)


def test_generate_inputs_errors():
    d = regression_data(n=5)
    with pytest.raises(ValueError):
        generate_inputs(d, 5, 1, "random", np.random.default_rng(0))
    with pytest.raises(ValueError):
        CandidateInput(FULL, FULL, (0,))


def test_select_test_points_classification_margin():
    X = np.array([[-2.0], [-1.0], [0.0], [1.0], [2.0], [0.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    d = Dataset.from_arrays(X, y, task="classification")
    pts = select_test_points(d, get_model_kind("gaussian_nb"), 2, 5, np.random.default_rng(0))
    # rows 2 and 5 sit on the same point near the boundary: lower index first
    assert pts[:2] == [2, 5]


def test_select_test_points_regression_extremes():
    x = np.linspace(-1, 1, 41)
    d = Dataset.from_arrays(x, 3 * x + np.random.default_rng(0).normal(size=41))
    pts = select_test_points(d, get_model_kind("linear_regression"), 2, 30, np.random.default_rng(1))
    # prediction variance of a line fit grows with distance from the centre
    assert all(min(i, 40 - i) <= 2 for i in pts)


def test_sample_outputs_independent_of_workers():
    m = NoisyCount(1.0)
    a = sample_outputs(m, FULL, [0], 20_000, Streams(3).child("x"), workers=1)
    b = sample_outputs(m, FULL, [0], 20_000, Streams(3).child("x"), workers=4)
    assert a.tobytes() == b.tobytes()


def test_streams_distinct_keys():
    r = Streams(1)
    draws = {tuple(r.child(*k).generator().random(4)) for k in [("explore", 0), ("test", 0), ("test", 1, 0), ("grid", 0)]}
    assert len(draws) == 4
    assert r.child("a", 2).derive_seed() == Streams(1, ("a", 2)).derive_seed()
    with pytest.raises(ValueError):
        r.child(-1)


def test_run_chunked_order():
    out = run_chunked(lambda i, size, rng: np.full(size, i), 10, 3, Streams(0), workers=3)
    assert out.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2, 3]


def test_resolve_workers_env(monkeypatch):
    monkeypatch.setenv("DP_AUDIT_THREADS", "2")
    assert resolve_workers(8) == 2
    assert resolve_workers(None) == 2
    monkeypatch.delenv("DP_AUDIT_THREADS")
    assert resolve_workers(None) == 1
    monkeypatch.setenv("DP_AUDIT_THREADS", "x")
    with pytest.raises(ValueError):
        resolve_workers(1)


def test_swap_symmetry_exact():
    m = NoisyCount(0.5)
    cand = CandidateInput(FULL, AdjacencySpec.of([0]), (0,))
    ev = IntervalEvent(((0, 4.5, ">="),))
    s = Streams(9).child("grid", 0)
    a = run_hypothesis_test(m, cand, ev, 0.3, 5000, 50, s)
    b = run_hypothesis_test(m, cand.swapped(), ev, 0.3, 5000, 50, s)
    assert (a.p_top.value, a.p_bottom.value) == (b.p_bottom.value, b.p_top.value)
    assert (a.counts.c1, a.counts.c2) == (b.counts.c2, b.counts.c1)


def test_select_event_prefers_informative_threshold():
    m = broken_noisy_count(0.5)
    cand = CandidateInput(FULL, AdjacencySpec.of([0]), (0,))
    sel = select_event(m, 0.5, [cand], 2000, Streams(0))
    assert sel.score < 0.05
    (pos, t, op), = sel.event.constraints
    # the count is 5 vs 4: tail events beyond the midpoint carry the signal
    assert (op == ">=" and t > 4.5) or (op == "<" and t < 4.5)


def test_broken_mechanism_rejected_at_claim():
    m = broken_noisy_count(0.5)
    cfg = SweepConfig(grid=(0.5,), n_iterations=50_000, n_candidates=2)
    rep = epsilon_sweep(m, cfg, seed=4)
    assert rep.results[0].p_min < 0.05
    assert rep.measured.status == "above-grid"


def test_correct_mechanism_not_rejected_above_true_epsilon():
    rejections = 0
    for seed in range(10):
        rep = epsilon_sweep(NoisyCount(1.0), SweepConfig(grid=(1.2,), n_iterations=20_000, n_candidates=2), seed)
        rejections += rep.results[0].p_min < 0.05
    assert rejections <= 2


def test_constant_mechanism_reads_zero():
    rep = epsilon_sweep(ConstantMechanism(), SweepConfig(grid=(0.1, 0.5, 1.0), n_iterations=1000), seed=0)
    assert rep.measured.status == "below-grid" and rep.measured.rendered == 0.0


def test_bernoulli_detects_true_level():
    grid = tuple(round(0.05 * i, 2) for i in range(1, 21))
    rep = epsilon_sweep(bernoulli_pair(0.5, 0.2), SweepConfig(grid=grid, n_iterations=200_000, n_candidates=1), seed=2)
    assert abs(rep.measured.value - 0.5) <= 0.1


def test_reports_identical_across_worker_counts():
    cfg = SweepConfig(grid=(0.5, 1.0, 1.5), n_iterations=30_000, n_candidates=3)
    a = from_sweep(epsilon_sweep(NoisyCount(1.0), cfg, seed=7, workers=1)).dumps()
    b = from_sweep(epsilon_sweep(NoisyCount(1.0), cfg, seed=7, workers=8)).dumps()
    assert a == b


class _Exploding(Mechanism):
    def __init__(self):
        self.dataset = regression_data(5)

    def sample(self, adjacency, args, size, rng):
        raise FloatingPointError("boom")


def test_errors_carry_epsilon():
    with pytest.raises(AuditError) as info:
        epsilon_sweep(_Exploding(), SweepConfig(grid=(0.7,), n_iterations=100, n_candidates=1), seed=0)
    assert info.value.epsilon == 0.7
    assert "0.7" in str(info.value)


def test_power_warning_for_small_n():
    rep = epsilon_sweep(ConstantMechanism(), SweepConfig(grid=(0.1,), n_iterations=500), seed=0)
    assert rep.warnings and "4.61" in rep.warnings[0]


def test_random_strategy_counting():
    d = Dataset.from_arrays(np.zeros((100, 1)), np.arange(1, 101, dtype=float))
    inputs = generate_inputs(d, 1, 100, "random", np.random.default_rng(0))
    assert len(inputs) <= 100
    assert len({c.d2 for c in inputs}) == len(inputs)
    ext = generate_inputs(d, 1, 1, "extreme", np.random.default_rng(0))
    assert d.targets[ext[0].d2.removed_indices[0]] == 100


def test_select_test_points_nearest_midline():
    # mirrored classes: equal variances, decision boundary exactly at 0
    x = np.array([0.3, 1.1, 0.05, 2.0, 0.7, 1.6, 0.2, 0.9])
    X = np.concatenate([-x, x])[:, None]
    d = Dataset.from_arrays(X, np.repeat([0, 1], len(x)), task="classification")
    pts = select_test_points(d, get_model_kind("gaussian_nb"), 3, 5, np.random.default_rng(0))
    expected = np.lexsort((np.arange(16), np.abs(X[:, 0])))[:3]
    assert pts == expected.tolist()
    everything = select_test_points(d, get_model_kind("gaussian_nb"), 16, 5, np.random.default_rng(0))
    assert sorted(everything) == list(range(16))


def test_select_event_ties_return_first_pair():
    m = ConstantMechanism(n_rows=6)
    inputs = generate_inputs(m.dataset, 1, 3, "random", np.random.default_rng(0))
    sel = select_event(m, 0.5, inputs, 50, Streams(0))
    assert sel.input == inputs[0]
    assert sel.score >= 0.5


def test_bernoulli_selects_output_one():
    m = bernoulli_pair(1.0, 0.2)
    cand = CandidateInput(FULL, AdjacencySpec.of([0]), (0,))
    sel = select_event(m, 0.2, [cand], 2000, Streams(1))
    assert sel.event.pattern == (1,)


def test_bernoulli_power_and_null():
    m = bernoulli_pair(1.0, 0.2)
    cand = CandidateInput(FULL, AdjacencySpec.of([0]), (0,))
    from dpaudit.events import LabelEvent

    ev = LabelEvent((1,))
    low = run_hypothesis_test(m, cand, ev, 0.2, 10_000, 100, Streams(2))
    high = run_hypothesis_test(m, cand, ev, 1.5, 10_000, 100, Streams(3))
    assert low.p_min < 0.05 < high.p_min


def test_bernoulli_pvalues_monotone_over_grid():
    grid = tuple(round(0.1 * i, 1) for i in range(1, 11))
    rep = epsilon_sweep(bernoulli_pair(0.5, 0.2), SweepConfig(grid=grid, n_iterations=100_000, n_candidates=1), seed=5)
    p = rep.p_values
    drops = [a - b for a, b in zip(p, p[1:]) if b < a]
    assert len(drops) <= 1 and all(d < 0.02 for d in drops)


def test_false_positive_control_at_true_epsilon():
    rejected = 0
    for seed in range(20):
        rep = epsilon_sweep(NoisyCount(1.0), SweepConfig(grid=(1.0,), n_iterations=50_000, n_candidates=2), seed)
        rejected += rep.results[0].p_min < 0.05
    assert rejected <= 1


def test_claimed_level_recovered():
    grid = tuple(np.round(np.linspace(0.37, 7.4, 20), 4))
    rep = epsilon_sweep(NoisyCount(3.7), SweepConfig(grid=grid, n_iterations=100_000, n_candidates=2), seed=0)
    assert rep.p_values[0] < 0.05
    assert abs(rep.measured.value - 3.7) <= 0.4
