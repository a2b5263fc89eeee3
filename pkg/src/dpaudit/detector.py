"""Counterexample search: candidate inputs, event selection, the two-ordering
hypothesis test and the epsilon sweep."""

from __future__ import annotations

import math
from itertools import zip_longest
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from dpaudit.data import CLASSIFICATION, REGRESSION, AdjacencySpec, Dataset
from dpaudit.events import enumerate_events
from dpaudit.mechanisms import Mechanism
from dpaudit.resampling import ImbalanceSpec, split_minority
from dpaudit.stats import CountPair, PValue, dp_test_pvalue
from dpaudit.streams import Streams, run_chunked

STRATEGIES = ("random", "extreme", "minority", "mixed")


class AuditError(RuntimeError):
    """A failure inside the audit, annotated with the grid epsilon."""

    def __init__(self, message: str, epsilon: float | None = None):
        super().__init__(message if epsilon is None else f"at epsilon={epsilon:g}: {message}")
        self.epsilon = epsilon


@dataclass(frozen=True)
class CandidateInput:
    d1: AdjacencySpec
    d2: AdjacencySpec
    args: tuple

    def __post_init__(self):
        if self.d1 == self.d2:
            raise ValueError("candidate sides must differ")
        if not self.args:
            raise ValueError("candidate needs at least one test point")
        object.__setattr__(self, "args", tuple(int(a) for a in self.args))

    def swapped(self) -> CandidateInput:
        return CandidateInput(self.d2, self.d1, self.args)

    def to_dict(self) -> dict:
        return {
            "d1": list(self.d1.removed_indices),
            "d2": list(self.d2.removed_indices),
            "args": list(self.args),
            "text": f"{self.d1.describe()} vs {self.d2.describe()} on rows {list(self.args)}",
        }


@dataclass(frozen=True)
class TestResult:
    epsilon: float
    p_top: PValue
    p_bottom: PValue
    counts: CountPair
    event: object
    input: CandidateInput

    __test__ = False  # not a pytest class

    @property
    def p_min(self) -> float:
        return min(self.p_top.value, self.p_bottom.value)


@dataclass(frozen=True)
class MeasuredEpsilon:
    status: str  # "in-grid" | "below-grid" | "above-grid"
    value: float | None = None

    @property
    def rendered(self) -> float | None:
        """Numeric reading: the grid value, 0 below the grid, None above."""
        if self.status == "below-grid":
            return 0.0
        return self.value

    def text(self) -> str:
        if self.status == "below-grid":
            return f"0 (<= grid start {self.value:g})"
        if self.status == "above-grid":
            return f"> grid end {self.value:g}"
        return f"{self.value:g}"

    def to_dict(self) -> dict:
        return {"status": self.status, "value": self.value, "rendered": self.rendered}


@dataclass(frozen=True)
class SweepConfig:
    grid: tuple
    alpha: float = 0.05
    k: int = 1
    n_iterations: int = 50_000
    n_explore: int = 200
    mc_draws: int = 100
    n_candidates: int = 10
    strategy: str = "random"
    batch_size: int = 3
    reselect_events: bool = True
    imbalance: ImbalanceSpec = ImbalanceSpec()

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ValueError("epsilon grid must be non-empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("epsilon grid must be strictly increasing")
        if grid[0] < 0:
            raise ValueError("epsilon grid must be non-negative")
        object.__setattr__(self, "grid", grid)
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.k < 1:
            raise ValueError("group size k must be >= 1")
        if self.n_iterations < 100:
            raise ValueError("n_iterations must be >= 100")
        if self.n_explore < 10:
            raise ValueError("n_explore must be >= 10")
        if self.mc_draws < 1:
            raise ValueError("mc_draws must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")

    def to_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "alpha": self.alpha,
            "k": self.k,
            "iterations": self.n_iterations,
            "explore": self.n_explore,
            "mc_draws": self.mc_draws,
            "candidates": self.n_candidates,
            "strategy": self.strategy,
            "batch_size": self.batch_size,
            "reselect_events": self.reselect_events,
            "imbalance": {"quantile": self.imbalance.quantile, "tail": self.imbalance.tail},
        }


def default_grid(epsilon0: float, k: int = 1, num: int = 20) -> tuple:
    """``num`` points over ``[0.1, 2] * k * epsilon0``."""
    if not math.isfinite(epsilon0):
        epsilon0 = 5.0
    return tuple(float(v) for v in np.linspace(0.1 * k * epsilon0, 2.0 * k * epsilon0, num))


@dataclass
class SweepReport:
    grid: tuple
    results: list
    measured: MeasuredEpsilon
    alpha: float
    seed: int
    config: dict
    mechanism: dict
    group_size: int = 1
    args: tuple = ()
    warnings: list = field(default_factory=list)

    @property
    def p_values(self) -> list:
        return [r.p_min for r in self.results]

    @property
    def measured_label(self) -> str:
        if self.group_size > 1:
            return f"{self.group_size}*epsilon (group privacy, k={self.group_size})"
        return "epsilon"


# Input generation --------------------------------------------------------------


def _feature_norm_ranking(d: Dataset) -> np.ndarray:
    widths = np.where(d.widths > 0, d.widths, 1.0)
    centred = (d.features - d.features.mean(axis=0)) / widths
    score = np.linalg.norm(centred, axis=1)
    return np.lexsort((np.arange(d.n_rows), -score))


def _target_ranking(d: Dataset, tail: str) -> np.ndarray:
    y = d.targets.astype(float)
    score = y if tail == "upper" else -y
    return np.lexsort((np.arange(d.n_rows), -score))


def _random_groups(pool: np.ndarray, k: int, n: int, rng) -> list:
    if len(pool) < k:
        raise ValueError(f"cannot draw groups of {k} from {len(pool)} rows")
    return [tuple(sorted(rng.choice(pool, size=k, replace=False).tolist())) for _ in range(n)]


def _extreme_groups(d: Dataset, k: int, n: int, tail: str) -> list:
    rankings = []
    if d.task == REGRESSION:
        rankings.append(_target_ranking(d, tail))
    rankings.append(_feature_norm_ranking(d))
    groups = []
    for i in range(n):
        r = rankings[i % len(rankings)]
        j = i // len(rankings)
        chunk = r[j * k:(j + 1) * k]
        if len(chunk) < k:
            break
        groups.append(tuple(sorted(chunk.tolist())))
    return groups


def generate_inputs(
    d: Dataset,
    k: int,
    n_candidates: int,
    strategy: str,
    rng: np.random.Generator,
    args: Sequence[int] = (0,),
    imbalance: ImbalanceSpec = ImbalanceSpec(),
) -> list:
    """Full dataset versus ``k``-row removals chosen by ``strategy``."""
    if k < 1 or n_candidates < 1:
        raise ValueError("need k >= 1 and n_candidates >= 1")
    if k >= d.n_rows:
        raise ValueError(f"group size {k} must be below the row count {d.n_rows}")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    all_rows = np.arange(d.n_rows)

    def minority_groups(n):
        minority, _ = split_minority(d, imbalance)
        return _random_groups(minority, k, n, rng)

    if strategy == "random":
        groups = _random_groups(all_rows, k, n_candidates, rng)
    elif strategy == "extreme":
        groups = _extreme_groups(d, k, n_candidates, imbalance.tail)
    elif strategy == "minority":
        groups = minority_groups(n_candidates)
    else:
        sources = [
            _extreme_groups(d, k, n_candidates, imbalance.tail),
            minority_groups(n_candidates) if d.task == REGRESSION else [],
            _random_groups(all_rows, k, n_candidates, rng),
        ]
        groups = [g for tier in zip_longest(*sources) for g in tier if g is not None]

    seen, out = set(), []
    for g in groups:
        if g not in seen:
            seen.add(g)
            out.append(CandidateInput(AdjacencySpec(()), AdjacencySpec(g), tuple(args)))
        if len(out) == n_candidates:
            break
    return out


# Test points --------------------------------------------------------------------


def select_test_points(d: Dataset, model, m: int, n_bootstrap: int, rng: np.random.Generator) -> list:
    """Rows whose predictions are most sensitive to the training set.

    Classification: smallest margin between the top two class log-scores of
    one non-private model. Regression: largest prediction variance across
    ``n_bootstrap`` non-private models fit on bootstrap resamples.
    """
    from dpaudit.models import TrainConfig, nb_log_scores

    if m < 1:
        raise ValueError("batch size must be >= 1")
    if m > d.n_rows:
        raise ValueError(f"batch size {m} exceeds {d.n_rows} rows")
    plain = TrainConfig()
    order_index = np.arange(d.n_rows)
    if d.task == CLASSIFICATION:
        fitted = model.train(d, plain, rng)
        scores = np.sort(nb_log_scores(fitted, d.features), axis=1)
        margin = scores[:, -1] - scores[:, -2] if scores.shape[1] > 1 else np.zeros(d.n_rows)
        order = np.lexsort((order_index, margin))
    else:
        preds = []
        for _ in range(n_bootstrap):
            boot = d.take(rng.integers(0, d.n_rows, size=d.n_rows))
            preds.append(model.predict(model.train(boot, plain, rng), d.features))
        var = np.var(np.array(preds), axis=0)
        order = np.lexsort((order_index, -var))
    return [int(i) for i in order[:m]]


# Sampling -----------------------------------------------------------------------


def sample_outputs(mech: Mechanism, adjacency: AdjacencySpec, args, n: int, streams: Streams, workers: int = 1) -> np.ndarray:
    """``n`` independent mechanism runs on one side, shape ``(n, len(args))``."""

    def chunk(_i, size, rng):
        return mech.sample(adjacency, list(args), size, rng)

    return run_chunked(chunk, n, mech.chunk_size, streams, workers)


def _score(c1, c2, n, epsilon, mc_draws, rng, n_target=None) -> float:
    if n_target is not None and n_target > n:
        # project the exploratory frequencies onto the final test size, so
        # events are ranked by the power they would have there
        c1, c2 = round(c1 * n_target / n), round(c2 * n_target / n)
        n = n_target
    top = dp_test_pvalue(CountPair(c1, c2, n), epsilon, mc_draws, rng, fast=True).value
    bottom = dp_test_pvalue(CountPair(c2, c1, n), epsilon, mc_draws, rng, fast=True).value
    return min(top, bottom)


@dataclass(frozen=True)
class Selection:
    event: object
    input: CandidateInput
    score: float


def select_event(
    mech: Mechanism,
    epsilon: float,
    inputs: Sequence[CandidateInput],
    n_explore: int,
    streams: Streams,
    mc_draws: int = 100,
    workers: int = 1,
    cache: dict | None = None,
    n_target: int | None = None,
) -> Selection:
    """Pick the (event, input) pair with the smallest exploratory p-value.

    Exploration samples come from the ``explore`` branch of ``streams`` and
    are never reused by :func:`run_hypothesis_test`. With ``n_target`` the
    exploratory counts are scaled to that many runs before scoring.
    """
    if not inputs:
        raise ValueError("no candidate inputs")
    if n_explore < 10:
        raise ValueError("n_explore must be >= 10")
    cache = {} if cache is None else cache

    def explore(adj, args):
        key = (adj, args, n_explore)
        if key not in cache:
            cache[key] = sample_outputs(mech, adj, args, n_explore, streams.child("explore", *adj.key()), workers)
        return cache[key]

    best = None
    for ci, cand in enumerate(inputs):
        s1, s2 = explore(cand.d1, cand.args), explore(cand.d2, cand.args)
        rng = streams.child("select-mc", repr(float(epsilon)), ci).generator()
        pooled = np.concatenate([s1, s2])
        events = enumerate_events(pooled, mech.task)
        scored = [(_score(int(ev.contains(s1).sum()), int(ev.contains(s2).sum()), n_explore, epsilon, mc_draws, rng, n_target), i, ev) for i, ev in enumerate(events)]
        if mech.task == REGRESSION and s1.shape[1] > 1:
            ranked = [ev for _, _, ev in sorted(scored, key=lambda t: (t[0], t[1]))]
            extra = enumerate_events(pooled, mech.task, ranked=ranked)[len(events):]
            for j, ev in enumerate(extra):
                c1, c2 = int(ev.contains(s1).sum()), int(ev.contains(s2).sum())
                scored.append((_score(c1, c2, n_explore, epsilon, mc_draws, rng, n_target), len(events) + j, ev))
        for score, _, ev in scored:
            if best is None or score < best.score:
                best = Selection(ev, cand, score)
    return best


def run_hypothesis_test(
    mech: Mechanism,
    cand: CandidateInput,
    event,
    epsilon: float,
    n_iterations: int,
    mc_draws: int,
    streams: Streams,
    workers: int = 1,
) -> TestResult:
    """Fresh runs on both sides; p-values for both orderings.

    Streams are keyed by adjacency rather than by position, so swapping the
    sides of ``cand`` swaps the two p-values exactly.
    """
    if n_iterations < 100:
        raise ValueError("n_iterations must be >= 100")
    s1 = sample_outputs(mech, cand.d1, cand.args, n_iterations, streams.child("test", *cand.d1.key()), workers)
    s2 = sample_outputs(mech, cand.d2, cand.args, n_iterations, streams.child("test", *cand.d2.key()), workers)
    c1, c2 = int(event.contains(s1).sum()), int(event.contains(s2).sum())
    counts = CountPair(c1, c2, n_iterations)
    rng_top = streams.child("test-mc", *cand.d1.key(), *cand.d2.key()).generator()
    rng_bottom = streams.child("test-mc", *cand.d2.key(), *cand.d1.key()).generator()
    p_top = dp_test_pvalue(counts, epsilon, mc_draws, rng_top)
    p_bottom = dp_test_pvalue(counts.swapped(), epsilon, mc_draws, rng_bottom)
    return TestResult(float(epsilon), p_top, p_bottom, counts, event, cand)


def measured_epsilon(grid: Sequence[float], p_values: Sequence[float], alpha: float) -> MeasuredEpsilon:
    """Smallest grid epsilon whose p-value exceeds ``alpha``."""
    passed = [p > alpha for p in p_values]
    if all(passed):
        return MeasuredEpsilon("below-grid", float(grid[0]))
    for eps, ok in zip(grid, passed):
        if ok:
            return MeasuredEpsilon("in-grid", float(eps))
    return MeasuredEpsilon("above-grid", float(grid[-1]))


def _power_warnings(cfg: SweepConfig) -> list:
    out = []
    if cfg.n_iterations < 10_000:
        ceiling = math.log(cfg.n_iterations / 5.0)
        out.append(
            f"n_iterations={cfg.n_iterations} per side: rejections are only possible up to "
            f"epsilon ~ {ceiling:.2f}; larger true levels read as saturated"
        )
    return out


def epsilon_sweep(mech: Mechanism, cfg: SweepConfig, seed: int, workers: int = 1, extra_config: dict | None = None) -> SweepReport:
    """Run event selection and a fresh hypothesis test at every grid epsilon."""
    root = Streams(seed)
    args = tuple(mech.select_args(cfg.batch_size, root.child("args").generator()))
    try:
        inputs = generate_inputs(
            mech.dataset, cfg.k, cfg.n_candidates, cfg.strategy, root.child("inputs").generator(), args, cfg.imbalance
        )
    except ValueError as exc:
        raise AuditError(str(exc)) from exc
    cache: dict = {}
    results = []
    selection = None
    for i, eps in enumerate(cfg.grid):
        try:
            if selection is None or cfg.reselect_events:
                selection = select_event(mech, eps, inputs, cfg.n_explore, root, cfg.mc_draws, workers, cache, cfg.n_iterations)
            result = run_hypothesis_test(
                mech, selection.input, selection.event, eps, cfg.n_iterations, cfg.mc_draws, root.child("grid", i), workers
            )
        except AuditError:
            raise
        except Exception as exc:
            raise AuditError(f"{type(exc).__name__}: {exc}", eps) from exc
        results.append(result)
    measured = measured_epsilon(cfg.grid, [r.p_min for r in results], cfg.alpha)
    config = cfg.to_dict()
    if extra_config:
        config.update(extra_config)
    return SweepReport(
        grid=cfg.grid,
        results=results,
        measured=measured,
        alpha=cfg.alpha,
        seed=int(seed),
        config=config,
        mechanism=mech.describe(),
        group_size=cfg.k,
        args=args,
        warnings=_power_warnings(cfg),
    )


def with_grid(cfg: SweepConfig, grid) -> SweepConfig:
    return replace(cfg, grid=tuple(grid))
