"""
f-divergences between finite discrete distributions and maximal coupling
"""

import math

import numpy as np
import scipy.special

from gmix import exceptions, utils

# Residual mass below which two laws are treated as identical when coupling
RESIDUAL_TOL = 1e-14


def as_dist(probs, tol=1e-12):
    """Validate a probability vector and return it as a float array"""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or len(probs) == 0:
        raise exceptions.DomainError("A distribution needs a nonempty one-dimensional support")
    if np.any(probs < 0) or abs(math.fsum(probs) - 1.0) > tol:
        raise exceptions.DomainError("A distribution must be nonnegative and sum to 1")

    return probs


def _pair(p, q):
    p, q = as_dist(p), as_dist(q)
    if p.shape != q.shape:
        raise exceptions.SupportMismatchError(
            f"Supports differ in size ({len(p)} vs {len(q)})"
        )

    return p, q


def tv(p, q):
    """Total variation distance ``1/2 sum |p - q|``"""
    p, q = _pair(p, q)
    return 0.5 * float(np.abs(p - q).sum())


def kl(p, q):
    """Kullback-Leibler divergence ``D(p || q)``, infinite off absolute continuity"""
    p, q = _pair(p, q)
    return float(scipy.special.rel_entr(p, q).sum())


def chi2_batch(p, q):
    """Row-wise Pearson chi-square ``sum (p - q)^2 / q`` along the last axis

    Terms where ``q = 0`` contribute 0 if ``p = 0`` as well and infinity
    otherwise.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    safe_q = np.where(q > 0, q, 1.0)
    terms = np.where(q > 0, (p - q) ** 2 / safe_q, np.where(p > 0, np.inf, 0.0))
    return terms.sum(axis=-1)


def chi2(p, q):
    """Pearson chi-square divergence ``D_chi2(p || q)``"""
    p, q = _pair(p, q)
    return float(chi2_batch(p, q))


def _check_kl(kl_value):
    if kl_value < 0 or math.isnan(kl_value):
        raise exceptions.DomainError(f"KL value must be nonnegative, got {kl_value}")


def pinsker_tv_bound(kl_value):
    """Pinsker's bound ``sqrt(kl / 2)`` on the total variation distance"""
    _check_kl(kl_value)
    return math.sqrt(kl_value / 2.0)


def bh_tv_bound(kl_value):
    """Bretagnolle-Huber bound ``sqrt(1 - exp(-kl))`` on the total variation distance"""
    _check_kl(kl_value)
    return math.sqrt(-math.expm1(-kl_value))


def maximal_coupling_from_uniforms(P, Q, u):
    """Draw from the maximal coupling of each row pair of ``P`` and ``Q``

    With probability ``sum min(P, Q)`` both draws come from the common part
    ``min(P, Q)``; otherwise they come independently from the two normalised
    residuals, which have disjoint supports. Disagreement therefore happens
    with probability exactly ``tv(P, Q)``.

    Args:
        P (np.ndarray): Array of shape ``(R, S)``, rows summing to 1.
        Q (np.ndarray): Array of shape ``(R, S)``, rows summing to 1.
        u (np.ndarray): Uniforms of shape ``(R, 3)``: the first picks the
            branch, the other two drive inverse-CDF sampling.

    Returns:
        tuple: Two integer arrays of shape ``(R,)``.
    """
    common = np.minimum(P, Q)
    overlap = common.sum(axis=1)
    resid_p = P - common
    resid_q = Q - common

    same = (u[:, 0] < overlap) | (resid_p.sum(axis=1) <= RESIDUAL_TOL)
    joint = utils.inverse_cdf(common, u[:, 1])
    x = np.where(same, joint, utils.inverse_cdf(resid_p, u[:, 1]))
    y = np.where(same, joint, utils.inverse_cdf(resid_q, u[:, 2]))
    return x, y


def maximal_coupling_sample(p, q, rng, size=None):
    """Sample from the maximal coupling of ``p`` and ``q``

    Args:
        p: Probability vector.
        q: Probability vector on the same support.
        rng (np.random.Generator): Source of randomness.
        size (int, default=None): Number of pairs. With ``None`` a single pair
            of ints is returned.
    """
    p, q = _pair(p, q)
    count = 1 if size is None else int(size)
    P = np.broadcast_to(p, (count, len(p)))
    Q = np.broadcast_to(q, (count, len(q)))
    x, y = maximal_coupling_from_uniforms(P, Q, rng.random((count, 3)))
    if size is None:
        return int(x[0]), int(y[0])

    return x, y
