"""
Block coupling of two chains started from different pasts

Coordinates are numbered from 1 and split into blocks ``[M_n, M_{n+1})`` with
``M_n = floor(n**beta)``. Given everything realised so far, each block of the
two chains is drawn from a maximal coupling of the two block conditionals
(`BlockMaximal`), or coordinate by coordinate from maximal couplings of the
one-step kernels (`CoordinateSequential`). Realised blocks are always appended
to the pasts, whether or not the chains agreed.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Optional, Tuple, Union

import numpy as np

from gmix import divergence, exceptions, simulator, utils
from gmix.potentials import History, PotentialModel

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class BlockSchedule:
    """Block boundaries ``M_n = floor(n**beta)``"""

    beta: float

    def __post_init__(self):
        if not self.beta >= 1:
            raise exceptions.DomainError(
                f"The schedule exponent must be at least 1, got {self.beta}"
            )

    def boundary(self, n: int) -> int:
        """``M_n``"""
        if n < 1:
            raise exceptions.DomainError(f"Block indices start at 1, got {n}")

        # Guard against n**beta landing a hair below an integer
        return int(math.floor(n**self.beta * (1 + 1e-12)))

    def boundaries(self, n_max: int) -> np.ndarray:
        """``M_1, ..., M_{n_max + 1}``"""
        return np.array([self.boundary(n) for n in range(1, n_max + 2)], dtype=np.int64)

    def block_of(self, coord: int) -> int:
        """The block index ``n`` with ``M_n <= coord < M_{n+1}``"""
        if coord < 1:
            raise exceptions.DomainError(f"Coordinates start at 1, got {coord}")

        n = max(1, int(coord ** (1.0 / self.beta)) - 1)
        while self.boundary(n + 1) <= coord:
            n += 1
        while self.boundary(n) > coord:
            n -= 1
        return n


def block_bounds(schedule: BlockSchedule, n: int) -> Tuple[int, int]:
    """The half-open coordinate range ``[M_n, M_{n+1})`` of block ``n``"""
    return schedule.boundary(n), schedule.boundary(n + 1)


@dataclasses.dataclass(frozen=True)
class BlockMaximal:
    """Exact maximal coupling of whole blocks, by enumeration of block outcomes"""

    max_block_states: int = 1 << 20
    name = "block-maximal"


@dataclasses.dataclass(frozen=True)
class CoordinateSequential:
    """Maximal coupling of each coordinate given the coupled past (diagnostic)"""

    name = "coordinate-sequential"


CouplingMode = Union[BlockMaximal, CoordinateSequential]


def mode_from_name(name: str, max_block_states: Optional[int] = None) -> CouplingMode:
    if name == BlockMaximal.name:
        return BlockMaximal(max_block_states or BlockMaximal.max_block_states)
    elif name == CoordinateSequential.name:
        return CoordinateSequential()
    else:
        raise exceptions.DomainError(f'Unknown coupling mode "{name}"')


@dataclasses.dataclass(frozen=True)
class CoupledRun:
    """One realisation of the coupling over ``N`` blocks

    Attributes:
        x_indicators: ``X_n`` for ``n = 1..N``.
        disagreements: Per-coordinate disagreement for coordinates
            ``1..M_{N+1}-1``.
        theta_block: First block after which every later block agreed, or
            ``None`` if block ``N`` disagreed (censored at the horizon).
        theta: Coordinate meeting time, censored the same way.
        trajectories: The two realised paths, oldest first.
    """

    x_indicators: np.ndarray
    disagreements: np.ndarray
    theta_block: Optional[int]
    theta: Optional[int]
    trajectories: Optional[Tuple[np.ndarray, np.ndarray]] = None


def _check_block_capacity(model, length, mode):
    states = model.support_size**length
    if states > mode.max_block_states:
        raise exceptions.CapacityError(
            f"Block of length {length} has {states} outcomes, more than"
            f" max_block_states={mode.max_block_states}",
            origin=__name__,
        )


class _Coupler:
    """Vectorised coupling engine for a chunk of replicates

    Holds one buffer per chain of shape ``(reach + T, R)``. Coordinate ``j``
    lives at row ``reach + j - 1``, so the window preceding it is
    ``buf[j - 1 : j - 1 + reach]``.
    """

    def __init__(self, model, y, z, schedule, n_blocks, mode):
        self.model = model
        self.schedule = schedule
        self.mode = mode
        self.bounds = schedule.boundaries(n_blocks)
        self.horizon = int(self.bounds[-1]) - 1
        self.y = y
        self.z = z
        if isinstance(mode, BlockMaximal):
            for n in range(n_blocks):
                _check_block_capacity(model, int(self.bounds[n + 1] - self.bounds[n]), mode)

    def uniform_shape(self):
        if isinstance(self.mode, BlockMaximal):
            return (len(self.bounds) - 1, 3)

        return (self.horizon, 3)

    def per_replicate_elements(self):
        reach = self.model.reach
        if isinstance(self.mode, BlockMaximal):
            longest = int(np.max(np.diff(self.bounds)))
            outcomes = self.model.support_size**longest
            return 2 * outcomes * (reach + longest + 1) + 2 * (reach + self.horizon)

        return 2 * (reach + self.horizon + self.model.support_size) + 3 * self.horizon

    def run(self, uniforms):
        """Couple the chunk; ``uniforms`` has shape ``uniform_shape() + (R,)``"""
        count = uniforms.shape[-1]
        reach = self.model.reach
        buf_x = np.empty((reach + self.horizon, count))
        buf_y = np.empty((reach + self.horizon, count))
        buf_x[:reach] = self.y.window(reach)[:, None]
        buf_y[:reach] = self.z.window(reach)[:, None]

        if isinstance(self.mode, BlockMaximal):
            for n in range(len(self.bounds) - 1):
                lo, hi = int(self.bounds[n]), int(self.bounds[n + 1])
                self._couple_block(buf_x, buf_y, lo, hi, uniforms[n].T)
        else:
            for j in range(1, self.horizon + 1):
                self._couple_coordinate(buf_x, buf_y, j, uniforms[j - 1].T)

        return buf_x[reach:], buf_y[reach:]

    def _couple_coordinate(self, buf_x, buf_y, j, u):
        reach = self.model.reach
        P = self.model.pmf_batch(buf_x[j - 1 : j - 1 + reach])
        Q = self.model.pmf_batch(buf_y[j - 1 : j - 1 + reach])
        x, y = divergence.maximal_coupling_from_uniforms(P, Q, u)
        buf_x[reach + j - 1] = x
        buf_y[reach + j - 1] = y

    def block_law(self, past, length):
        """Probabilities of every block outcome, shape ``(R, S**length)``

        ``past`` holds the ``reach`` symbols preceding the block, shape
        ``(reach, R)``. Outcome indices put the first block symbol in the most
        significant digit.
        """
        model = self.model
        reach = model.reach
        size = model.support_size
        count = past.shape[1]
        probs = np.ones((count, 1))
        for t in range(length):
            outcomes = size**t
            digits = _outcome_digits(size, t)[max(0, t - reach) :]
            head = past[reach - max(0, reach - t) :]
            window = np.concatenate(
                [
                    np.broadcast_to(head[:, :, None], head.shape + (outcomes,)),
                    np.broadcast_to(digits[:, None, :], (len(digits), count, outcomes)),
                ]
            ).reshape(reach, count * outcomes)
            step = model.pmf_batch(window).reshape(count, outcomes, size)
            probs = (probs[:, :, None] * step).reshape(count, outcomes * size)

        return probs

    def _couple_block(self, buf_x, buf_y, lo, hi, u):
        reach = self.model.reach
        length = hi - lo
        P = self.block_law(buf_x[lo - 1 : lo - 1 + reach], length)
        Q = self.block_law(buf_y[lo - 1 : lo - 1 + reach], length)
        x_idx, y_idx = divergence.maximal_coupling_from_uniforms(P, Q, u)
        digits = _outcome_digits(self.model.support_size, length)
        buf_x[reach + lo - 1 : reach + hi - 1] = digits[:, x_idx]
        buf_y[reach + lo - 1 : reach + hi - 1] = digits[:, y_idx]


def _outcome_digits(size, length):
    """Digits of every outcome index, shape ``(length, size**length)``

    The first digit is the most significant one.
    """
    idx = np.arange(size**length)
    powers = size ** np.arange(length - 1, -1, -1)
    return ((idx[None, :] // powers[:, None]) % size).astype(float)


@dataclasses.dataclass
class CouplingTally:
    """Sufficient statistics of many coupled runs

    Tallies from disjoint chunks merge with `merge`, in any grouping.
    """

    bounds: np.ndarray
    x_counts: np.ndarray
    coord_counts: np.ndarray
    last_disagreement: np.ndarray
    censored: np.ndarray

    @property
    def replicates(self) -> int:
        return len(self.last_disagreement)

    def px(self) -> EstimateSeries:
        """Block failure frequencies ``P[X_n = 1]``"""
        mean, se = _proportions(self.x_counts, self.replicates)
        return EstimateSeries(index=np.arange(1, len(self.x_counts) + 1), mean=mean, se=se)

    def coordinates(self, coords) -> EstimateSeries:
        """Disagreement frequencies at the given coordinates"""
        coords = np.asarray(coords, dtype=np.int64)
        if len(coords) and coords[-1] > len(self.coord_counts):
            raise exceptions.DomainError("Coordinates beyond the simulated horizon")

        mean, se = _proportions(self.coord_counts[coords - 1], self.replicates)
        return EstimateSeries(index=coords, mean=mean, se=se)

    def meeting_tail(self, ks) -> EstimateSeries:
        """Frequencies of ``theta > k``, with the censored share"""
        ks = np.asarray(ks, dtype=np.int64)
        counts = (self.last_disagreement[None, :] >= ks[:, None]).sum(axis=1)
        mean, se = _proportions(counts, self.replicates)
        censored_share = float(self.censored.mean())
        if censored_share > 0:
            logger.warning(
                "%.3g of meeting times are censored at the horizon of %d blocks",
                censored_share,
                len(self.x_counts),
            )
        return EstimateSeries(
            index=ks, mean=mean, se=se, censored=np.full(len(ks), censored_share)
        )

    def merge(self, other: CouplingTally) -> CouplingTally:
        return CouplingTally(
            bounds=self.bounds,
            x_counts=self.x_counts + other.x_counts,
            coord_counts=self.coord_counts + other.coord_counts,
            last_disagreement=np.concatenate([self.last_disagreement, other.last_disagreement]),
            censored=np.concatenate([self.censored, other.censored]),
        )


def _tally(bounds, disagree):
    """Tally a ``(T, R)`` disagreement array"""
    count = disagree.shape[1]
    block_ids = np.repeat(np.arange(len(bounds) - 1), np.diff(bounds))
    x = np.zeros((len(bounds) - 1, count), dtype=bool)
    np.logical_or.at(x, block_ids, disagree)
    coords = np.arange(1, disagree.shape[0] + 1)
    last = np.max(np.where(disagree, coords[:, None], 0), axis=0)
    return CouplingTally(
        bounds=bounds,
        x_counts=x.sum(axis=1),
        coord_counts=disagree.sum(axis=1),
        last_disagreement=last.astype(np.int64),
        censored=x[-1].copy(),
    ), x


def _validate(model, y, z, n_blocks):
    if n_blocks < 1:
        raise exceptions.DomainError(f"n_blocks must be at least 1, got {n_blocks}")

    if model.alphabet.is_finite:
        for h in (y, z):
            bad = [s for s in h.prefix + (h.tail_symbol,) if not model.alphabet.contains(s)]
            if bad:
                raise exceptions.DomainError(f"Symbols {bad} are not in the alphabet")


def step_block(
    model: PotentialModel,
    pasts: Tuple[History, History],
    schedule: BlockSchedule,
    n: int,
    mode: CouplingMode,
    rng: simulator.RngStream,
) -> Tuple[Tuple[History, History], bool]:
    """Couple block ``n`` given the two pasts preceding it

    Returns:
        The pasts extended by their realised blocks, and ``X_n``.
    """
    lo, hi = block_bounds(schedule, n)
    length = hi - lo
    reach = model.reach
    if isinstance(mode, BlockMaximal):
        _check_block_capacity(model, length, mode)

    coupler = _Coupler(model, pasts[0], pasts[1], schedule, 1, mode)
    buf_x = np.empty((reach + length, 1))
    buf_y = np.empty((reach + length, 1))
    buf_x[:reach] = pasts[0].window(reach)[:, None]
    buf_y[:reach] = pasts[1].window(reach)[:, None]

    gen = rng.generator()
    if isinstance(mode, BlockMaximal):
        coupler._couple_block(buf_x, buf_y, 1, 1 + length, gen.random((1, 3)))
    else:
        for j in range(1, length + 1):
            coupler._couple_coordinate(buf_x, buf_y, j, gen.random((1, 3)))

    block_x = buf_x[reach:, 0].astype(int)
    block_y = buf_y[reach:, 0].astype(int)
    extended = (pasts[0].extend(block_x.tolist()), pasts[1].extend(block_y.tolist()))
    return extended, bool(np.any(block_x != block_y))


def _simulate_chunk(model, y, z, schedule, n_blocks, mode, stream, start, stop):
    coupler = _Coupler(model, y, z, schedule, n_blocks, mode)
    uniforms = simulator.replicate_uniforms(stream, start, stop, coupler.uniform_shape())
    path_x, path_y = coupler.run(uniforms)
    return path_x, path_y, coupler.bounds


def run_coupling(
    model: PotentialModel,
    y: History,
    z: History,
    n_blocks: int,
    schedule: BlockSchedule,
    mode: CouplingMode,
    rng: simulator.RngStream,
) -> CoupledRun:
    """Realise the coupling from pasts ``y`` and ``z`` over ``n_blocks`` blocks

    The run uses the uniforms of ``rng.replicate(0)``, so it reproduces
    replicate 0 of `simulate_coupling` with the same stream.
    """
    _validate(model, y, z, n_blocks)
    path_x, path_y, bounds = _simulate_chunk(model, y, z, schedule, n_blocks, mode, rng, 0, 1)
    disagree = path_x != path_y
    tally, x = _tally(bounds, disagree)
    last_block = int(np.max(np.nonzero(x[:, 0])[0], initial=-1)) + 1
    censored = bool(tally.censored[0])
    return CoupledRun(
        x_indicators=x[:, 0],
        disagreements=disagree[:, 0],
        theta_block=None if censored else last_block + 1,
        theta=None if censored else int(tally.last_disagreement[0]) + 1,
        trajectories=(path_x[:, 0].astype(np.int64), path_y[:, 0].astype(np.int64)),
    )


def simulate_coupling(
    model: PotentialModel,
    y: History,
    z: History,
    n_blocks: int,
    replicates: int,
    schedule: BlockSchedule,
    mode: CouplingMode,
    rng: simulator.RngStream,
    threads: int = 1,
    chunk_size: Optional[int] = None,
) -> CouplingTally:
    """Run ``replicates`` independent couplings and tally them"""
    _validate(model, y, z, n_blocks)
    if replicates < 1:
        raise exceptions.DomainError(f"replicates must be at least 1, got {replicates}")

    sizing = _Coupler(model, y, z, schedule, n_blocks, mode)
    logger.debug(
        "Coupling %d replicates over %d blocks (%d coordinates) in %s mode",
        replicates,
        n_blocks,
        sizing.horizon,
        mode.name,
    )

    def chunk(start, stop):
        path_x, path_y, bounds = _simulate_chunk(
            model, y, z, schedule, n_blocks, mode, rng, start, stop
        )
        return _tally(bounds, path_x != path_y)[0]

    tallies = simulator.map_replicates(
        chunk, replicates, sizing.per_replicate_elements(), threads=threads, chunk_size=chunk_size
    )
    total = tallies[0]
    for tally in tallies[1:]:
        total = total.merge(tally)
    return total


@dataclasses.dataclass(frozen=True)
class EstimateSeries:
    """Monte Carlo estimates indexed by block, coordinate or threshold"""

    index: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    censored: Optional[np.ndarray] = None

    def __iter__(self):
        return iter(zip(self.mean.tolist(), self.se.tolist()))

    def __len__(self):
        return len(self.index)


def _proportions(counts, total):
    mean = np.asarray(counts, dtype=float) / total
    return mean, utils.bernoulli_se(mean, total)


def estimate_px(
    model, y, z, n_blocks, replicates, schedule, mode, rng, threads=1, chunk_size=None
) -> EstimateSeries:
    """Estimates of ``P[X_n = 1]`` for ``n = 1..n_blocks``"""
    tally = simulate_coupling(
        model, y, z, n_blocks, replicates, schedule, mode, rng, threads, chunk_size
    )
    return tally.px()


def estimate_L(
    model, y, z, coord_list, replicates, schedule, mode, rng, threads=1, chunk_size=None
) -> EstimateSeries:
    """Per-coordinate disagreement frequencies, upper estimates of ``L(k)``"""
    coords = np.asarray(sorted(set(int(k) for k in coord_list)), dtype=np.int64)
    if len(coords) == 0 or coords[0] < 1:
        raise exceptions.DomainError("Coordinates must be a nonempty list of integers >= 1")

    n_blocks = schedule.block_of(int(coords[-1]))
    tally = simulate_coupling(
        model, y, z, n_blocks, replicates, schedule, mode, rng, threads, chunk_size
    )
    return tally.coordinates(coords)


def estimate_M_tail(
    model,
    y,
    z,
    k_list,
    replicates,
    schedule,
    mode,
    rng,
    n_blocks=None,
    threads=1,
    chunk_size=None,
) -> EstimateSeries:
    """Estimates of the meeting-time tail ``P[theta > k]``

    ``theta > k`` exactly when some coordinate ``j >= k`` disagrees within the
    horizon. Replicates whose last block disagrees are right-censored; their
    share is reported in ``censored`` for every ``k``.
    """
    ks = np.asarray(sorted(set(int(k) for k in k_list)), dtype=np.int64)
    if len(ks) == 0 or ks[0] < 1:
        raise exceptions.DomainError("Thresholds must be a nonempty list of integers >= 1")

    n_blocks = n_blocks or schedule.block_of(int(ks[-1]))
    if schedule.boundary(n_blocks + 1) - 1 < ks[-1]:
        raise exceptions.DomainError("The horizon must cover the largest threshold")

    tally = simulate_coupling(
        model, y, z, n_blocks, replicates, schedule, mode, rng, threads, chunk_size
    )
    return tally.meeting_tail(ks)
