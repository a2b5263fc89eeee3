"""Exact small-sample statistics for the DP hypothesis test.

The null hypothesis ``P(M(D1) in E) <= exp(eps) * P(M(D2) in E)`` is reduced
to an equality test by thinning the first count with probability
``exp(-eps)``; a one-sided Fisher exact test is then applied and averaged
over Monte Carlo thinnings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import stats as _sps
from scipy.special import gammaln


@dataclass(frozen=True)
class CountPair:
    """Event counts from ``n`` runs on each side."""

    c1: int
    c2: int
    n: int

    def __post_init__(self):
        if self.n < 1 or not (0 <= self.c1 <= self.n and 0 <= self.c2 <= self.n):
            raise ValueError(f"invalid counts {self}")

    def swapped(self) -> CountPair:
        return CountPair(self.c2, self.c1, self.n)


@dataclass(frozen=True)
class PValue:
    value: float
    mc_draws: int = 0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"p-value {self.value} outside [0, 1]")

    def __float__(self) -> float:
        return self.value


def _log_comb(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _check_hypergeom(K, n, N):
    if N < 0 or not (0 <= K <= N) or not (0 <= n <= N):
        raise ValueError(f"invalid hypergeometric parameters K={K}, n={n}, N={N}")


def hypergeometric_pmf(k: int, K: int, n: int, N: int) -> float:
    """P(X = k) for X successes in ``n`` draws without replacement from a
    population of ``N`` containing ``K`` successes."""
    _check_hypergeom(K, n, N)
    if k < max(0, n + K - N) or k > min(n, K):
        return 0.0
    return float(np.exp(_log_comb(K, k) + _log_comb(N - K, n - k) - _log_comb(N, n)))


def hypergeometric_pmf_exact(k: int, K: int, n: int, N: int) -> Fraction:
    """Exact rational pmf using integer binomials."""
    _check_hypergeom(K, n, N)
    if k < max(0, n + K - N) or k > min(n, K):
        return Fraction(0)
    return Fraction(math.comb(K, k) * math.comb(N - K, n - k), math.comb(N, n))


def _tail_sum(start: int, stop: int, K: int, n: int, N: int) -> float:
    """Sum of pmf over ``start..stop`` inclusive via term-ratio recurrence."""
    if stop < start:
        return 0.0
    k = np.arange(start, stop)
    # pmf(k+1) / pmf(k)
    log_ratio = (
        np.log(K - k) + np.log(n - k) - np.log(k + 1.0) - np.log(N - K - n + k + 1.0)
    )
    log_first = _log_comb(K, start) + _log_comb(N - K, n - start) - _log_comb(N, n)
    logs = np.concatenate(([log_first], log_first + np.cumsum(log_ratio)))
    return float(np.exp(logs).sum())


@lru_cache(maxsize=1 << 16)
def _upper_tail(c: int, K: int, n: int, N: int) -> float:
    lo, hi = max(0, n + K - N), min(n, K)
    if c <= lo:
        return 1.0
    if c > hi:
        return 0.0
    # Hoeffding: mass further than `width` from the mean is below exp(-50).
    spread = min(n, N - n, K, N - K)
    width = int(math.ceil(math.sqrt(25.0 * spread))) + 2
    mean = n * K / N
    if c >= mean:
        return min(1.0, _tail_sum(c, min(hi, c + width), K, n, N))
    lower = _tail_sum(max(lo, c - 1 - width), c - 1, K, n, N)
    return min(1.0, max(0.0, 1.0 - lower))


def fisher_upper_tail(c1: int, n1: int, c2: int, n2: int) -> float:
    """One-sided Fisher exact p-value as a plain float."""
    if not (0 <= c1 <= n1 and 0 <= c2 <= n2):
        raise ValueError(f"counts out of range: ({c1}/{n1}, {c2}/{n2})")
    return _upper_tail(int(c1), int(c1 + c2), int(n1), int(n1 + n2))


def fisher_one_sided(c1: int, n1: int, c2: int, n2: int) -> PValue:
    """Probability of a first-group count >= ``c1`` under equal success
    rates, conditioned on the table margins (hypergeometric upper tail)."""
    return PValue(fisher_upper_tail(c1, n1, c2, n2))


def fisher_one_sided_exact(c1: int, n1: int, c2: int, n2: int) -> Fraction:
    K, N = c1 + c2, n1 + n2
    hi = min(n1, K)
    return sum((hypergeometric_pmf_exact(k, K, n1, N) for k in range(c1, hi + 1)), Fraction(0))


def _open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    # (k + 0.5) / 2**53 lies strictly inside (0, 1).
    return (rng.integers(0, 1 << 53, size=size, dtype=np.int64) + 0.5) / float(1 << 53)


def binomial_sample(trials: int, p: float, rng: np.random.Generator, size=None):
    """Binomial draws by inverse CDF, one uniform per draw.

    Using the quantile function couples draws across ``p`` for a fixed
    stream: a smaller ``p`` never yields a larger count.
    """
    if trials < 0 or not 0.0 <= p <= 1.0:
        raise ValueError(f"invalid binomial parameters trials={trials}, p={p}")
    u = _open_uniform(rng, size if size is not None else 1)
    if p == 1.0 or trials == 0:
        out = np.full(u.shape, trials, dtype=np.int64) if p == 1.0 else np.zeros(u.shape, dtype=np.int64)
    elif p == 0.0:
        out = np.zeros(u.shape, dtype=np.int64)
    else:
        out = _sps.binom.ppf(u, trials, p).astype(np.int64)
    return int(out[0]) if size is None else out


def subsample_count(c1: int, epsilon: float, rng: np.random.Generator, size=None):
    """Thin ``c1`` successes, keeping each with probability ``exp(-epsilon)``."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return binomial_sample(c1, math.exp(-epsilon), rng, size=size)


def dp_test_pvalue(counts: CountPair, epsilon: float, mc_draws: int, rng: np.random.Generator, fast: bool = False) -> PValue:
    """Monte Carlo averaged p-value for ``P1 <= exp(eps) * P2``.

    ``fast`` evaluates the tails with scipy's vectorized hypergeometric
    survival function (agreement ~1e-9 at large counts); it consumes the
    same random draws, so only the tail arithmetic differs.
    """
    if mc_draws < 1:
        raise ValueError("mc_draws must be >= 1")
    thinned = subsample_count(counts.c1, max(epsilon, 0.0), rng, size=mc_draws)
    values, weights = np.unique(thinned, return_counts=True)
    n, c2 = counts.n, counts.c2
    if fast:
        tails = np.clip(_sps.hypergeom.sf(values - 1, 2 * n, values + c2, n), 0.0, 1.0)
        total = float(np.dot(weights, tails))
    else:
        total = sum(int(w) * _upper_tail(int(v), int(v) + c2, n, 2 * n) for v, w in zip(values, weights))
    return PValue(min(1.0, total / mc_draws), mc_draws)
