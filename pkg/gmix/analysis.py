"""
Statistics of stationary paths: correlation decay, functional CLT checks and
deviation probabilities

Observables are finite tables on cylinders. An observable of ``depth`` d reads
the d most recent symbols and its table is indexed like a context, with the
most recent symbol least significant.

Every estimator takes an `gmix.simulator.RngStream`. Replicate ``i`` draws its
path from ``rng.replicate(0).replicate(i)`` and calibration runs draw from
``rng.replicate(1)``, so estimates do not depend on chunking or threads.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import List, Optional, Sequence

import numpy as np
import scipy.stats

from gmix import exceptions, renewal, utils
from gmix.potentials import PotentialModel, var_upper
from gmix.simulator import RngStream, map_replicates, sample_stationary_paths

logger = logging.getLogger(__name__)

# Normalising constants below this are treated as zero
MIN_SIGMA = 1e-6
MIN_KS_SAMPLES = 100
DEVIATION_TOL = 1e-12
CALIBRATION_FACTOR = 10
BATCH_FACTOR = 50
FCLT_GRID_POINTS = 10


@dataclasses.dataclass(frozen=True)
class Observable:
    """A real function of the ``depth`` most recent symbols"""

    depth: int
    table: np.ndarray

    def __post_init__(self):
        table = np.atleast_1d(np.asarray(self.table, dtype=float))
        object.__setattr__(self, "table", table)
        if self.depth < 0:
            raise exceptions.DomainError(f"Observable depth must be nonnegative, got {self.depth}")
        if not np.all(np.isfinite(table)):
            raise exceptions.DomainError("Observable tables must be finite")
        if self.depth == 0 and len(table) != 1:
            raise exceptions.DomainError("A depth-0 observable is a single constant")
        if self.depth > 0 and self.alphabet_size**self.depth != len(table):
            raise exceptions.DomainError(
                f"A depth-{self.depth} table needs S**{self.depth} entries, got {len(table)}"
            )

    @property
    def alphabet_size(self) -> int:
        if self.depth == 0:
            return 1

        return int(round(len(self.table) ** (1.0 / self.depth)))

    def range(self) -> float:
        """``R(h) = max h - min h``"""
        return float(self.table.max() - self.table.min())

    def variation(self, k: int) -> float:
        """``var_k`` of the table: largest spread among cylinders sharing k symbols"""
        if k >= self.depth:
            return 0.0
        if k == 0:
            return self.range()

        groups = np.arange(len(self.table)) % self.alphabet_size**k
        spread = 0.0
        for group in np.unique(groups):
            values = self.table[groups == group]
            spread = max(spread, float(values.max() - values.min()))

        return spread

    def evaluate(self, path) -> np.ndarray:
        """Values along ``path`` (time on the first axis)

        Entry ``j`` of the result belongs to time ``j + depth - 1``. A depth-0
        observable returns one value per time.
        """
        path = np.asarray(path)
        if self.depth == 0:
            return np.full(path.shape, self.table[0])
        if len(path) < self.depth:
            raise exceptions.DomainError(f"A path shorter than {self.depth} has no values")
        if path.min() < 0 or path.max() >= self.alphabet_size:
            raise exceptions.DomainError("Path symbols fall outside the observable's table")

        length = len(path) - self.depth + 1
        # The most recent symbol is the least significant digit
        idx = np.zeros((length,) + path.shape[1:], dtype=np.int64)
        for i in range(self.depth):
            idx = idx * self.alphabet_size + path[i : i + length]
        return self.table[idx]


def seminorm_phi(obs: Observable, model: PotentialModel) -> float:
    """``sup_k var_k(f) / var_k(e^phi)`` over the finitely many nonzero terms

    Raises:
        `SeminormError`: when ``f`` varies at some ``k`` where the kernel does not.
    """
    ratio = 0.0
    for k in range(1, obs.depth):
        numerator = obs.variation(k)
        if numerator == 0:
            continue

        denominator = var_upper(model, k, kind="kernel")
        if denominator <= 0:
            raise exceptions.SeminormError(
                f"The seminorm is undefined: the observable varies at k={k}"
                " where the potential is constant"
            )
        ratio = max(ratio, numerator / denominator)

    return ratio


@dataclasses.dataclass(frozen=True)
class CorrelationEstimate:
    n: int
    rho_hat: float
    se: float


def _aligned(obs, paths):
    """Observable values on the full time axis, NaN before the first full window"""
    values = np.full(paths.shape, np.nan)
    values[max(obs.depth - 1, 0) :] = obs.evaluate(paths)
    return values


def _lag_sums(f_vals, g_vals, first, lag, batch):
    """Totals and per-batch sums of ``F_{t-lag}``, ``G_t`` and their product"""
    a = f_vals[first - lag : len(f_vals) - lag]
    g = g_vals[first:]
    prod = a * g
    full = (len(a) // batch) * batch
    count = a.shape[1]

    def batches(values):
        return values[:full].reshape(-1, batch, count).sum(axis=1).ravel()

    return {
        "totals": np.array([a.sum(), g.sum(), prod.sum(), a.size], dtype=float),
        "batches": np.stack([batches(a), batches(g), batches(prod)]),
    }


def correlation_decay(
    model: PotentialModel,
    f: Observable,
    fhat: Observable,
    lags: Sequence[int],
    burn_in: int,
    path_len: int,
    replicates: int,
    rng: RngStream,
    threads: int = 1,
    chunk_size: Optional[int] = None,
) -> List[CorrelationEstimate]:
    """Stationary covariances of ``f`` at ``t - n`` and ``fhat`` at ``t``

    Means are pooled over all replicates and times. Standard errors are batch
    means with batches of ``50 n`` products (at least 50) inside each path.
    """
    lags = [int(n) for n in lags]
    depth = max(f.depth, fhat.depth, 1)
    if min(lags, default=0) < 0:
        raise exceptions.DomainError("Lags must be nonnegative")
    if replicates < 1:
        raise exceptions.DomainError("Need at least one replicate")

    plan = []
    for n in lags:
        first = max(f.depth - 1 + n, fhat.depth - 1, 0)
        batch = BATCH_FACTOR * max(n, 1)
        if (path_len - first) // batch * replicates < 2:
            raise exceptions.DomainError(
                f"path_len={path_len} leaves fewer than 2 batches of {batch} at lag {n}"
            )
        plan.append((n, first, batch))

    stream = rng.replicate(0)

    def chunk(start, stop):
        paths = sample_stationary_paths(model, burn_in, path_len, stream, start, stop)
        f_vals, g_vals = _aligned(f, paths), _aligned(fhat, paths)
        return [_lag_sums(f_vals, g_vals, first, n, batch) for n, first, batch in plan]

    logger.debug("Estimating correlations at %d lags with depth %d", len(lags), depth)
    parts = map_replicates(
        chunk,
        replicates,
        per_replicate_elements=4 * (burn_in + path_len),
        threads=threads,
        chunk_size=chunk_size,
    )

    estimates = []
    for i, (n, _, batch) in enumerate(plan):
        totals = sum(part[i]["totals"] for part in parts)
        sums = np.concatenate([part[i]["batches"] for part in parts], axis=1)
        sum_f, sum_g, sum_fg, count = totals
        mean_f, mean_g = sum_f / count, sum_g / count
        rho_hat = sum_fg / count - mean_f * mean_g
        centered = (sums[2] - mean_g * sums[0] - mean_f * sums[1]) / batch + mean_f * mean_g
        _, se = utils.mean_and_se(centered)
        estimates.append(CorrelationEstimate(n=n, rho_hat=float(rho_hat), se=float(se)))

    return estimates


def correlation_envelope(
    model: PotentialModel,
    fhat: Observable,
    estimates: Sequence[CorrelationEstimate],
    delta_prime: Optional[float] = None,
) -> Optional[np.ndarray]:
    """``C * rate(n)`` with ``C`` the smallest constant covering the estimates

    The constant is fitted for display only. Returns ``None`` when the
    seminorm of ``fhat`` is undefined or no positive lag was estimated.
    """
    try:
        seminorm_phi(fhat, model)
    except exceptions.SeminormError as exc:
        logger.warning("No correlation envelope: %s", exc)
        return None

    lags = np.array([est.n for est in estimates], dtype=float)
    if not np.any(lags > 0):
        return None

    delta = model.regularity.chi2_delta
    if delta <= 1 and delta_prime is None:
        delta_prime = delta / 2.0

    rate = np.full(len(lags), np.nan)
    rate[lags > 0] = renewal.theorem2_rate(delta, lags[lags > 0], delta_prime)
    observed = np.abs([est.rho_hat for est in estimates])
    scale = np.nanmax(np.where(lags > 0, observed / rate, np.nan))
    return scale * rate


def resolvable_slope(estimates: Sequence[CorrelationEstimate], min_z: float = 2.0):
    """Log-log slope of ``|rho|`` over lags where it is ``min_z`` SEs from zero"""
    points = [
        (est.n, abs(est.rho_hat))
        for est in estimates
        if est.n > 0 and abs(est.rho_hat) > min_z * est.se
    ]
    if len(points) < 2:
        raise exceptions.DomainError("Fewer than 2 resolvable lags for a slope fit")

    index, values = zip(*points)
    return renewal.fit_decay_slope(values, index=index)


def _calibrated_center(model, h, length, burn_in, rng):
    calibration = rng.replicate(1)
    path = sample_stationary_paths(model, burn_in, length, calibration, 0, 1)[:, 0]
    center = float(np.mean(h.evaluate(path)))
    logger.debug("Calibrated centre %.6g from %d steps", center, length)
    return center


def _check_symbol_observable(h):
    if h.depth != 1:
        raise exceptions.DomainError(f"Expected a depth-1 observable, got depth {h.depth}")


@dataclasses.dataclass(frozen=True)
class FcltSamples:
    """Normalised partial-sum processes on a fixed time grid"""

    grid: np.ndarray
    samples: np.ndarray
    sigma: float
    center: float

    def ks(self) -> float:
        """Distance of ``zeta_n(1)`` to the standard normal"""
        return ks_statistic(self.samples[:, -1])

    def variance_ratio(self) -> np.ndarray:
        """``Var(zeta_n(t)) / t`` across the grid"""
        return self.samples.var(axis=0, ddof=1) / self.grid


def fclt_paths(
    model: PotentialModel,
    h: Observable,
    n: int,
    replicates: int,
    burn_in: int,
    rng: RngStream,
    center: Optional[float] = None,
    threads: int = 1,
    chunk_size: Optional[int] = None,
) -> FcltSamples:
    """Sample ``zeta_n(t) = sigma^-1 n^-1/2 sum_{i<=nt} (h(eta_i) - E h)``

    Without ``center`` the mean of ``h`` comes from a calibration run ten
    times longer than ``n``.
    ``sigma`` is the replicate standard deviation of the unnormalised
    ``zeta_n(1)``.
    """
    _check_symbol_observable(h)
    if n < 1 or replicates < 2:
        raise exceptions.DomainError("fclt_paths needs n >= 1 and at least 2 replicates")

    if center is None:
        center = _calibrated_center(model, h, CALIBRATION_FACTOR * n, burn_in, rng)
    steps = np.arange(1, FCLT_GRID_POINTS + 1)
    grid = steps / FCLT_GRID_POINTS
    cut = (n * steps) // FCLT_GRID_POINTS
    stream = rng.replicate(0)

    def chunk(start, stop):
        paths = sample_stationary_paths(model, burn_in, n, stream, start, stop)
        steps_sum = np.cumsum(h.evaluate(paths) - center, axis=0)
        partial = np.concatenate([np.zeros((1, stop - start)), steps_sum])
        return partial[cut].T / np.sqrt(n)

    raw = np.concatenate(
        map_replicates(
            chunk,
            replicates,
            per_replicate_elements=3 * (burn_in + n),
            threads=threads,
            chunk_size=chunk_size,
        )
    )
    sigma = float(np.std(raw[:, -1], ddof=1))
    if sigma < MIN_SIGMA:
        raise exceptions.DegenerateError(
            f"Estimated sigma {sigma:.3g} is below {MIN_SIGMA}; the observable does not fluctuate"
        )

    return FcltSamples(grid=grid, samples=raw / sigma, sigma=sigma, center=center)


@dataclasses.dataclass(frozen=True)
class DeviationEstimate:
    n: int
    probability: float
    se: float


def chernoff_deviation(
    model: PotentialModel,
    h: Observable,
    n_list: Sequence[int],
    t: float,
    replicates: int,
    burn_in: int,
    rng: RngStream,
    center: Optional[float] = None,
    threads: int = 1,
    chunk_size: Optional[int] = None,
) -> List[DeviationEstimate]:
    """Empirical ``P[|n^-1 sum_{i<n} h(eta_i) - E h| >= t]`` for each ``n``

    All lengths are read off prefixes of the same paths. Without ``center``
    the mean of ``h`` is calibrated on a run ten times the longest ``n``.
    """
    _check_symbol_observable(h)
    n_list = [int(n) for n in n_list]
    if t <= 0:
        raise exceptions.DomainError(f"t must be positive, got {t}")
    if not n_list or min(n_list) < 1 or replicates < 1:
        raise exceptions.DomainError("chernoff_deviation needs lengths >= 1 and replicates")

    longest = max(n_list)
    if center is None:
        center = _calibrated_center(model, h, CALIBRATION_FACTOR * longest, burn_in, rng)

    ends = np.array(n_list) - 1
    stream = rng.replicate(0)

    def chunk(start, stop):
        paths = sample_stationary_paths(model, burn_in, longest, stream, start, stop)
        means = np.cumsum(h.evaluate(paths), axis=0)[ends] / (ends + 1)[:, None]
        return (np.abs(means - center) >= t - DEVIATION_TOL).sum(axis=1)

    hits = sum(
        map_replicates(
            chunk,
            replicates,
            per_replicate_elements=3 * (burn_in + longest),
            threads=threads,
            chunk_size=chunk_size,
        )
    )
    probs = hits / replicates
    se = utils.bernoulli_se(probs, replicates)
    return [
        DeviationEstimate(n=n, probability=float(p), se=float(s))
        for n, p, s in zip(n_list, probs, se)
    ]


def ks_statistic(samples) -> float:
    """Kolmogorov-Smirnov distance of the empirical law to ``N(0, 1)``"""
    samples = np.asarray(samples, dtype=float).ravel()
    if len(samples) < MIN_KS_SAMPLES:
        raise exceptions.DomainError(
            f"A KS distance needs at least {MIN_KS_SAMPLES} samples, got {len(samples)}"
        )

    return float(scipy.stats.kstest(samples, "norm").statistic)
