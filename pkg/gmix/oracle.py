"""
Exact computations for finite-alphabet chains of finite reach

Everything here works on context states: the last ``m`` symbols, indexed with
the most recent symbol least significant. Laws are propagated exactly through
the context transfer operator, and the block coupling is followed on pairs of
contexts. Every routine has an explicit capacity and raises
`gmix.exceptions.CapacityError` rather than truncating.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Optional

import numpy as np
import scipy.stats

from gmix import divergence, exceptions
from gmix.coupling import BlockSchedule
from gmix.potentials import History, PotentialModel, context_windows

logger = logging.getLogger(__name__)

MAX_CONTEXTS = 1_000_000
MAX_DENSE_CONTEXTS = 4096
MAX_JOINT_ENTRIES = 10_000_000
# Slack on the deviation threshold so that exact ties count as deviations
THRESHOLD_TOL = 1e-9


def _capacity(message):
    return exceptions.CapacityError(message, origin=__name__)


@dataclasses.dataclass(frozen=True)
class StateDist:
    """A law on context states of a given order"""

    order: int
    probs: np.ndarray

    def symbol_marginal(self, size: int) -> np.ndarray:
        """Law of the most recent symbol of the context"""
        if self.order == 0:
            raise exceptions.DomainError("An order-0 context carries no symbol")

        return np.bincount(np.arange(len(self.probs)) % size, weights=self.probs, minlength=size)


class ContextChain:
    """The chain driven by ``model`` seen on contexts of length ``order``

    ``order`` defaults to the model's reach and may exceed it (the model then
    reads only the most recent ``reach`` symbols of each context).
    """

    def __init__(self, model: PotentialModel, order: Optional[int] = None, capacity=MAX_CONTEXTS):
        if not model.alphabet.is_finite:
            raise exceptions.DomainError("Exact computations need a finite alphabet")

        self.model = model
        self.size = model.alphabet.size
        self.order = model.reach if order is None else max(int(order), model.reach)
        self.n_states = self.size**self.order
        if self.n_states > capacity:
            raise _capacity(
                f"{self.n_states} context states exceed the exact-computation capacity {capacity}"
            )

        windows = context_windows(self.size, self.order)
        self.kernel = model.pmf_batch(windows[self.order - model.reach :]).reshape(
            self.n_states, self.size
        )
        keep = self.size ** max(self.order - 1, 0)
        ctx = np.arange(self.n_states)[:, None]
        symbols = np.arange(self.size)[None, :]
        # Appending symbol a to context c shifts c up one digit
        self.successor = symbols + self.size * (ctx % keep) if self.order else 0 * (ctx + symbols)
        self._blocks = {}

    def context_of(self, x: History) -> int:
        window = x.window(self.order)
        powers = self.size ** np.arange(self.order)
        return int(np.dot(powers, window[::-1].astype(np.int64))) if self.order else 0

    def point_mass(self, x: History) -> np.ndarray:
        dist = np.zeros(self.n_states)
        dist[self.context_of(x)] = 1.0
        return dist

    def step(self, dist: np.ndarray) -> np.ndarray:
        weights = (dist[:, None] * self.kernel).ravel()
        return np.bincount(self.successor.ravel(), weights=weights, minlength=self.n_states)

    def next_symbol_law(self, dist: np.ndarray) -> np.ndarray:
        return dist @ self.kernel

    def block_tables(self, length: int):
        """Outcome probabilities and end contexts of every block of ``length``

        Returns:
            tuple: ``probs`` and ``ends``, both of shape ``(n_states, S**length)``.
        """
        if length in self._blocks:
            return self._blocks[length]

        probs = np.ones((self.n_states, 1))
        ends = np.arange(self.n_states)[:, None]
        for _ in range(length):
            step = self.kernel[ends]
            probs = (probs[:, :, None] * step).reshape(self.n_states, -1)
            ends = self.successor[ends].reshape(self.n_states, -1)

        self._blocks[length] = (probs, ends)
        return probs, ends


def exact_marginal(model: PotentialModel, y: History, n: int) -> np.ndarray:
    """Exact law of ``eta_n`` for the chain started from the past ``y``"""
    if n < 1:
        raise exceptions.DomainError(f"n must be at least 1, got {n}")

    chain = ContextChain(model)
    dist = chain.point_mass(y)
    for _ in range(n - 1):
        dist = chain.step(dist)

    law = chain.next_symbol_law(dist)
    return law / law.sum()


def exact_tv_coordinate(model: PotentialModel, y: History, z: History, n: int) -> float:
    """Total variation distance between the laws of ``eta_n`` from ``y`` and from ``z``"""
    return divergence.tv(exact_marginal(model, y, n), exact_marginal(model, z, n))


class _PairChain:
    """The block-maximal coupling followed on pairs of contexts"""

    def __init__(self, model, schedule, n_max):
        if n_max < 1:
            raise exceptions.DomainError(f"n_max must be at least 1, got {n_max}")

        self.chain = ContextChain(model)
        self.bounds = schedule.boundaries(n_max)
        states = self.chain.n_states
        for n in range(n_max):
            outcomes = self.chain.size ** int(self.bounds[n + 1] - self.bounds[n])
            if states * states * outcomes > MAX_JOINT_ENTRIES or outcomes**2 > MAX_JOINT_ENTRIES:
                raise _capacity(
                    f"Block {n + 1} needs {states}^2 x {outcomes} coupled entries, more than"
                    f" {MAX_JOINT_ENTRIES}"
                )

    def block(self, n):
        """Tables for block ``n`` (1-based): tv, common parts, end contexts"""
        probs, ends = self.chain.block_tables(int(self.bounds[n] - self.bounds[n - 1]))
        common = np.minimum(probs[:, None, :], probs[None, :, :])
        tv = 0.5 * np.abs(probs[:, None, :] - probs[None, :, :]).sum(axis=2)
        return probs, ends, common, tv

    def forward(self, y, z):
        """Joint context laws before each block, and ``P[X_n = 1]``"""
        states = self.chain.n_states
        joint = np.zeros((states, states))
        joint[self.chain.context_of(y), self.chain.context_of(z)] = 1.0
        laws, fail = [], []
        for n in range(1, len(self.bounds)):
            probs, ends, common, tv = self.block(n)
            laws.append(joint)
            fail.append(float(np.sum(joint * tv)))

            nxt = np.zeros_like(joint)
            cx, cy = np.nonzero(joint)
            mass = joint[cx, cy]
            np.add.at(
                nxt,
                (ends[cx], ends[cy]),
                mass[:, None] * common[cx, cy],
            )
            for i in np.nonzero(tv[cx, cy] > 0)[0]:
                sx, sy = cx[i], cy[i]
                rp = probs[sx] - common[sx, sy]
                rq = probs[sy] - common[sx, sy]
                iv, iw = np.nonzero(rp > 0)[0], np.nonzero(rq > 0)[0]
                np.add.at(
                    nxt,
                    (ends[sx][iv][:, None], ends[sy][iw][None, :]),
                    mass[i] * rp[iv][:, None] * rq[iw][None, :] / tv[sx, sy],
                )
            joint = nxt

        return laws, np.array(fail)


def exact_block_coupling_fail(
    model: PotentialModel, y: History, z: History, schedule: BlockSchedule, n_max: int
) -> np.ndarray:
    """Exact ``P[X_n = 1]`` for ``n = 1..n_max`` under the block-maximal coupling"""
    return _PairChain(model, schedule, n_max).forward(y, z)[1]


def exact_meeting_tail(
    model: PotentialModel, y: History, z: History, schedule: BlockSchedule, n_max: int
) -> np.ndarray:
    """Exact ``P[some block in [n, n_max] disagrees]`` for ``n = 1..n_max``"""
    pairs = _PairChain(model, schedule, n_max)
    laws, _ = pairs.forward(y, z)
    states = pairs.chain.n_states
    later = np.zeros((states, states))
    tail = np.zeros(n_max)
    for n in range(n_max, 0, -1):
        _, ends, common, tv = pairs.block(n)
        # Disagree now, or agree on outcome w and disagree later
        agree_later = later[ends[:, None, :], ends[None, :, :]]
        later = tv + np.sum(common * agree_later, axis=2)
        tail[n - 1] = float(np.sum(laws[n - 1] * later))

    return tail


def exact_stationary(model: PotentialModel, order: Optional[int] = None) -> StateDist:
    """Stationary law of the context chain (unique for an irreducible chain)"""
    chain = ContextChain(model, order=order, capacity=MAX_DENSE_CONTEXTS)
    states = chain.n_states
    transfer = np.zeros((states, states))
    np.add.at(
        transfer,
        (np.repeat(np.arange(states), chain.size), chain.successor.ravel()),
        chain.kernel.ravel(),
    )
    system = np.vstack([transfer.T - np.eye(states), np.ones((1, states))])
    rhs = np.zeros(states + 1)
    rhs[-1] = 1.0
    probs = np.linalg.lstsq(system, rhs, rcond=None)[0]
    probs = np.clip(probs, 0.0, None)
    return StateDist(order=chain.order, probs=probs / probs.sum())


def exact_correlation(model: PotentialModel, f, fhat, n: int) -> float:
    """Stationary covariance of ``f`` at time ``t - n`` and ``fhat`` at time ``t``

    ``f`` and ``fhat`` are observables with ``depth`` and ``table`` attributes,
    evaluated on the most recent ``depth`` symbols.
    """
    if n < 0:
        raise exceptions.DomainError(f"Lag must be nonnegative, got {n}")

    order = max(model.reach, f.depth, fhat.depth, 1)
    chain = ContextChain(model, order=order, capacity=MAX_DENSE_CONTEXTS)
    pi = exact_stationary(model, order=order).probs
    contexts = np.arange(chain.n_states)
    f_vals = np.asarray(f.table, dtype=float)[contexts % chain.size**f.depth]
    later = np.asarray(fhat.table, dtype=float)[contexts % chain.size**fhat.depth]
    mean_fhat = float(pi @ later)
    for _ in range(n):
        later = np.sum(chain.kernel * later[chain.successor], axis=1)

    return float(pi @ (f_vals * later)) - float(pi @ f_vals) * mean_fhat


def exact_iid_deviation(p_plus: float, n: int, t: float) -> float:
    """``P[|mean - (2p - 1)| >= t]`` for ``n`` IID ``+-1`` symbols with ``P[+1] = p``"""
    if n < 1 or not 0 <= p_plus <= 1:
        raise exceptions.DomainError("exact_iid_deviation needs n >= 1 and p in [0, 1]")

    # mean - (2p - 1) = 2 (K - n p) / n with K ~ Binomial(n, p)
    centre = n * p_plus
    half_width = n * t / 2.0
    low = math.floor(centre - half_width + THRESHOLD_TOL)
    high = math.ceil(centre + half_width - THRESHOLD_TOL)
    below = scipy.stats.binom.cdf(low, n, p_plus) if low >= 0 else 0.0
    above = scipy.stats.binom.sf(high - 1, n, p_plus) if high <= n else 0.0
    return float(below + above)
