"""Tests the gmix.divergence module"""

import math
from contextlib import ExitStack as does_not_raise

import numpy as np
import pytest

from gmix import divergence, exceptions


@pytest.mark.parametrize(
    "probs, expected_exception",
    [
        ([0.5, 0.5], does_not_raise()),
        ([0.5, 0.6], pytest.raises(exceptions.DomainError)),
        ([1.5, -0.5], pytest.raises(exceptions.DomainError)),
        ([], pytest.raises(exceptions.DomainError)),
        ([[0.5, 0.5]], pytest.raises(exceptions.DomainError)),
    ],
)
def test_as_dist(probs, expected_exception):
    """Tests divergence.as_dist()"""
    with expected_exception:
        divergence.as_dist(probs)


def test_support_mismatch():
    """Laws on different supports cannot be compared"""
    with pytest.raises(exceptions.SupportMismatchError):
        divergence.tv([0.5, 0.5], [0.2, 0.3, 0.5])

    assert issubclass(exceptions.SupportMismatchError, exceptions.DomainError)


def test_known_values():
    """Divergences of small laws computed by hand"""
    assert divergence.tv([0.9, 0.1], [0.2, 0.8]) == pytest.approx(0.7)
    assert divergence.kl([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2.0))
    assert divergence.kl([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert divergence.chi2([0.5, 0.5], [0.25, 0.75]) == pytest.approx(1.0 / 3.0)
    assert divergence.chi2([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert divergence.chi2([0.3, 0.7], [0.3, 0.7]) == 0


def test_chi2_batch():
    """Row-wise chi-square matches the scalar version"""
    p = np.array([[0.5, 0.5], [0.1, 0.9]])
    q = np.array([[0.25, 0.75], [0.1, 0.9]])

    np.testing.assert_allclose(divergence.chi2_batch(p, q), [1.0 / 3.0, 0.0], atol=1e-15)


@pytest.mark.parametrize(
    "kl_value, expected_pinsker, expected_bh",
    [(0.0, 0.0, 0.0), (2.0, 1.0, math.sqrt(1 - math.exp(-2.0))), (math.inf, math.inf, 1.0)],
)
def test_tv_bounds(kl_value, expected_pinsker, expected_bh):
    """Tests divergence.pinsker_tv_bound() and divergence.bh_tv_bound()"""
    assert divergence.pinsker_tv_bound(kl_value) == pytest.approx(expected_pinsker)
    assert divergence.bh_tv_bound(kl_value) == pytest.approx(expected_bh)


@pytest.mark.parametrize("kl_value", [-1e-3, math.nan])
def test_tv_bounds_domain(kl_value):
    """Negative or undefined divergences are rejected"""
    with pytest.raises(exceptions.DomainError):
        divergence.pinsker_tv_bound(kl_value)
    with pytest.raises(exceptions.DomainError):
        divergence.bh_tv_bound(kl_value)


def test_divergence_inequalities():
    """Pinsker, Bretagnolle-Huber and kl <= chi2 on random pairs"""
    rng = np.random.default_rng(0)
    for _ in range(2000):
        size = int(rng.integers(2, 21))
        p = rng.dirichlet(np.ones(size))
        q = rng.dirichlet(np.ones(size))
        tv, kl, chi2 = divergence.tv(p, q), divergence.kl(p, q), divergence.chi2(p, q)

        assert kl / 2 - tv**2 >= -1e-12
        assert divergence.bh_tv_bound(kl) - tv >= -1e-12
        assert chi2 - kl >= -1e-12


@pytest.mark.parametrize(
    "p, q",
    [
        ([0.9, 0.1], [0.2, 0.8]),
        ([0.2, 0.3, 0.5], [0.5, 0.3, 0.2]),
        ([0.25, 0.25, 0.25, 0.25], [0.7, 0.1, 0.1, 0.1]),
    ],
)
def test_maximal_coupling_disagreement_rate(p, q):
    """Disagreement happens with probability tv(p, q) and marginals are preserved"""
    rng = np.random.default_rng(1)
    count = 100_000
    x, y = divergence.maximal_coupling_sample(p, q, rng, size=count)
    tv = divergence.tv(p, q)
    se = math.sqrt(tv * (1 - tv) / count)

    assert abs(np.mean(x != y) - tv) <= 5 * se
    for draws, law in ((x, p), (y, q)):
        freq = np.bincount(draws, minlength=len(law)) / count
        assert np.all(np.abs(freq - law) <= 5 * np.sqrt(np.asarray(law) / count) + 1e-12)


def test_maximal_coupling_extremes():
    """Identical laws always agree and disjoint laws always disagree"""
    rng = np.random.default_rng(2)
    x, y = divergence.maximal_coupling_sample([0.3, 0.7], [0.3, 0.7], rng, size=1000)
    assert np.all(x == y)

    x, y = divergence.maximal_coupling_sample([1.0, 0.0], [0.0, 1.0], rng, size=1000)
    assert np.all(x == 0) and np.all(y == 1)


def test_maximal_coupling_single_pair():
    """Without a size one pair of ints is returned"""
    x, y = divergence.maximal_coupling_sample([0.5, 0.5], [0.5, 0.5], np.random.default_rng(3))

    assert isinstance(x, int) and x == y
