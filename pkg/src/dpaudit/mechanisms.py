"""Reference mechanisms with analytically known privacy levels."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from dpaudit.data import CLASSIFICATION, REGRESSION, AdjacencySpec, Dataset
from dpaudit.stats import _open_uniform


def laplace_inverse_cdf(u, scale: float = 1.0):
    """Laplace(0, scale) quantile for ``u`` in (0, 1)."""
    u = np.asarray(u, dtype=float)
    d = u - 0.5
    return -scale * np.sign(d) * np.log1p(-2.0 * np.abs(d))


def laplace_noise(scale: float, rng: np.random.Generator, size=None):
    """Laplace draws by inverse CDF so a fixed stream reproduces bit-exactly."""
    if not scale > 0:
        raise ValueError(f"Laplace scale must be positive, got {scale}")
    u = _open_uniform(rng, 1 if size is None else size)
    out = laplace_inverse_cdf(u, scale)
    return float(out[0]) if size is None else out


def noisy_count(db, epsilon: float, rng: np.random.Generator) -> float:
    """Count of ones plus Laplace(1/epsilon) noise."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return float(np.sum(db)) + laplace_noise(1.0 / epsilon, rng)


class Mechanism:
    """A randomized procedure run on ``D`` or one of its adjacent datasets.

    Subclasses implement :meth:`sample`, returning an ``(size, m)`` array of
    outputs for ``m`` test positions. ``chunk_size`` fixes how many
    iterations share one random stream.
    """

    claimed_epsilon: float = math.inf
    task: str = REGRESSION
    chunk_size: int = 1
    dataset: Dataset

    def sample(self, adjacency: AdjacencySpec, args: Sequence[int], size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def select_args(self, batch_size: int, rng: np.random.Generator) -> list[int]:
        return [0]

    def describe(self) -> dict:
        return {"mechanism": type(self).__name__, "claimed_epsilon": self.claimed_epsilon}


class NoisyCount(Mechanism):
    """Laplace counting query over a bit vector.

    Removing a one-entry lowers the count by one, so the mechanism is
    ``1 / scale``-DP under single-row removal and ``k / scale``-DP for
    groups of ``k`` one-entries.
    """

    task = REGRESSION
    chunk_size = 8192

    def __init__(self, epsilon: float, db=None, scale: float | None = None):
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        bits = np.ones(5) if db is None else np.asarray(db, dtype=float)
        if bits.ndim != 1 or not np.all((bits == 0) | (bits == 1)):
            raise ValueError("db must be a bit vector")
        self.claimed_epsilon = float(epsilon)
        self.scale = 1.0 / epsilon if scale is None else float(scale)
        self.bits = bits
        self.dataset = Dataset(bits[:, None], bits.copy(), REGRESSION, [[0.0, 1.0]], (0.0, 1.0), columns=("bit",), target_name="bit")

    @property
    def true_epsilon(self) -> float:
        return 1.0 / self.scale

    def count(self, adjacency: AdjacencySpec) -> float:
        removed = list(adjacency.removed_indices)
        return float(self.bits.sum() - self.bits[removed].sum())

    def sample(self, adjacency, args, size, rng):
        base = self.count(adjacency)
        return (base + laplace_noise(self.scale, rng, size=size))[:, None]

    def describe(self):
        return {
            "mechanism": "noisy_count",
            "claimed_epsilon": self.claimed_epsilon,
            "noise_scale": self.scale,
            "db": [int(b) for b in self.bits],
        }


def broken_noisy_count(epsilon_claimed: float, db=None) -> NoisyCount:
    """A noisy count that claims ``epsilon_claimed`` but uses half the noise
    scale, so its true level is ``2 * epsilon_claimed``."""
    if not epsilon_claimed > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon_claimed}")
    m = NoisyCount(epsilon_claimed, db=db, scale=1.0 / (2.0 * epsilon_claimed))
    return m


class BernoulliPair(Mechanism):
    """Outputs 1 with probability ``exp(eps_true) * p0`` on the full dataset
    and ``p0`` on any adjacent one; tight at ``eps_true`` on ``{output = 1}``."""

    task = CLASSIFICATION
    chunk_size = 8192

    def __init__(self, epsilon_true: float, p0: float):
        if epsilon_true < 0 or not 0 <= p0 <= 1:
            raise ValueError("need epsilon_true >= 0 and p0 in [0, 1]")
        p1 = math.exp(epsilon_true) * p0
        if p1 > 1:
            raise ValueError(f"infeasible pair: exp({epsilon_true}) * {p0} = {p1} > 1")
        self.epsilon_true = float(epsilon_true)
        self.claimed_epsilon = float(epsilon_true)
        self.p0, self.p1 = float(p0), p1
        self.dataset = Dataset(np.zeros((2, 1)), np.zeros(2, dtype=int), CLASSIFICATION, [[0.0, 0.0]], (0.0, 0.0), n_classes=2)

    def probability(self, adjacency: AdjacencySpec) -> float:
        return self.p1 if adjacency.is_full else self.p0

    def sample(self, adjacency, args, size, rng):
        u = _open_uniform(rng, size)
        return (u < self.probability(adjacency)).astype(np.int64)[:, None]

    def describe(self):
        return {"mechanism": "bernoulli_pair", "claimed_epsilon": self.claimed_epsilon, "epsilon_true": self.epsilon_true, "p0": self.p0}


def bernoulli_pair(epsilon_true: float, p0: float) -> BernoulliPair:
    return BernoulliPair(epsilon_true, p0)


class ConstantMechanism(Mechanism):
    """Deterministic mechanism whose output ignores the dataset."""

    task = REGRESSION
    chunk_size = 8192

    def __init__(self, value: float = 1.0, n_rows: int = 5):
        self.value = float(value)
        self.claimed_epsilon = 0.0
        self.dataset = Dataset.from_arrays(np.arange(n_rows, dtype=float), np.arange(n_rows, dtype=float))

    def sample(self, adjacency, args, size, rng):
        return np.full((size, 1), self.value)

    def describe(self):
        return {"mechanism": "constant", "value": self.value}
