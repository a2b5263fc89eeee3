import math

import numpy as np
import pytest
from scipy import stats

from dpaudit.data import AdjacencySpec
from dpaudit.mechanisms import (
    BernoulliPair,
    NoisyCount,
    bernoulli_pair,
    broken_noisy_count,
    laplace_inverse_cdf,
    laplace_noise,
    noisy_count,
)


def laplace_cdf(x, b):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.5 * np.exp(x / b), 1 - 0.5 * np.exp(-x / b))


FULL = AdjacencySpec()
DROP0 = AdjacencySpec.of([0])


def test_inverse_cdf_points():
    assert laplace_inverse_cdf(0.5, 3.0) == 0.0
    assert float(laplace_inverse_cdf(0.75, 1.0)) == pytest.approx(-math.log(0.5), abs=1e-15)
    assert float(laplace_inverse_cdf(0.25, 2.0)) == pytest.approx(2 * math.log(0.5), abs=1e-15)


def test_inverse_cdf_matches_closed_form_cdf():
    u = np.linspace(0.0005, 0.9995, 1000)
    for b in (0.5, 1.0, 7.0):
        assert np.max(np.abs(laplace_cdf(laplace_inverse_cdf(u, b), b) - u)) <= 1e-12


def test_laplace_variance():
    b = 1.7
    x = laplace_noise(b, np.random.default_rng(0), size=100_000)
    assert x.var() == pytest.approx(2 * b * b, rel=0.05)


def test_laplace_rejects_bad_scale():
    with pytest.raises(ValueError):
        laplace_noise(0.0, np.random.default_rng(0))


def test_laplace_bit_reproducible():
    a = laplace_noise(1.0, np.random.default_rng(5), size=10)
    b = laplace_noise(1.0, np.random.default_rng(5), size=10)
    assert a.tobytes() == b.tobytes()


def test_noisy_count_limit_and_errors():
    assert noisy_count([1, 1, 1, 1, 1], 1e12, np.random.default_rng(0)) == pytest.approx(5.0, abs=1e-9)
    with pytest.raises(ValueError):
        noisy_count([1], 0.0, np.random.default_rng(0))


def test_noisy_count_cdf_ratio_bounded():
    eps = 0.8
    m = NoisyCount(eps)
    n = 200_000
    s1 = m.sample(FULL, [0], n, np.random.default_rng(1))[:, 0]
    s2 = m.sample(DROP0, [0], n, np.random.default_rng(2))[:, 0]
    b = 1 / eps
    for t in np.linspace(2.0, 7.0, 26):
        exact = laplace_cdf(t - 5, b) / laplace_cdf(t - 4, b)
        assert exact <= math.exp(eps) + 1e-12
        assert 1 / exact <= math.exp(eps) + 1e-12
        f1, f2 = np.mean(s1 < t), np.mean(s2 < t)
        assert f1 / f2 == pytest.approx(exact, rel=0.05)


def test_noisy_count_ks():
    m = NoisyCount(1.3, db=[1, 0, 1, 1])
    x = m.sample(FULL, [0], 100_000, np.random.default_rng(3))[:, 0]
    res = stats.kstest(x, lambda v: laplace_cdf(v - 3.0, 1 / 1.3))
    assert res.statistic < 0.01


def test_noisy_count_removal_counts():
    m = NoisyCount(1.0, db=[1, 0, 1])
    assert m.count(FULL) == 2.0
    assert m.count(AdjacencySpec.of([1])) == 2.0
    assert m.count(AdjacencySpec.of([0, 2])) == 0.0


def test_broken_noisy_count():
    m = broken_noisy_count(0.5)
    assert m.claimed_epsilon == 0.5
    assert m.true_epsilon == pytest.approx(1.0)
    assert m.scale == pytest.approx(1.0)


def test_bernoulli_pair_closed_forms():
    m = bernoulli_pair(0.0, 0.3)
    assert m.probability(FULL) == m.probability(DROP0) == 0.3
    m = bernoulli_pair(math.log(2), 0.25)
    assert m.probability(FULL) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        BernoulliPair(2.0, 0.5)


def test_bernoulli_pair_frequency_ratio():
    eps, p0, n = 0.5, 0.2, 400_000
    m = BernoulliPair(eps, p0)
    f1 = m.sample(FULL, [0], n, np.random.default_rng(1)).mean()
    f2 = m.sample(DROP0, [0], n, np.random.default_rng(2)).mean()
    ratio = f1 / f2
    # delta-method standard error of a ratio of independent proportions
    se = ratio * math.sqrt((1 - f1) / (n * f1) + (1 - f2) / (n * f2))
    assert abs(ratio - math.exp(eps)) <= 3 * se
