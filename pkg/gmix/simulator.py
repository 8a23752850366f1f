"""
Sampling trajectories of a chain driven by a potential

Every replicate owns an `RngStream`. Its uniforms are drawn up front from its
own stream and the kernel is then evaluated for whole chunks of replicates at
once, so a replicate's path does not depend on how replicates are chunked or
on how many threads run the chunks.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from gmix import exceptions, utils
from gmix.potentials import History, PotentialModel

logger = logging.getLogger(__name__)

# Reference history for stationary sampling is the all-zero past
REFERENCE_HISTORY = History(prefix=(), tail_symbol=0)


@dataclasses.dataclass(frozen=True)
class RngStream:
    """A reproducible, independent source of randomness

    Identical ``(seed, stream_id, spawn_key)`` always give identical draws.
    Streams with different ids (or different replicate keys) come from
    distinct branches of the same `numpy.random.SeedSequence` tree.
    """

    seed: int
    stream_id: int = 0
    spawn_key: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise exceptions.DomainError("Seeds and stream ids must be nonnegative")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id,) + self.spawn_key
        )

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of the stream"""
        return np.random.default_rng(self.seed_sequence())

    def replicate(self, index: int) -> RngStream:
        """The stream owned by replicate ``index``"""
        return dataclasses.replace(self, spawn_key=self.spawn_key + (int(index),))

    def child(self, stream_id: int) -> RngStream:
        """An independent stream for another purpose of the same run"""
        return RngStream(self.seed, int(stream_id))


def replicate_uniforms(stream: RngStream, start: int, stop: int, shape) -> np.ndarray:
    """Uniforms for replicates ``start..stop-1`` stacked on the last axis

    Each replicate draws ``shape`` uniforms from its own stream.
    """
    shape = tuple(np.atleast_1d(shape))
    draws = [stream.replicate(i).generator().random(shape) for i in range(start, stop)]
    return np.stack(draws, axis=-1) if draws else np.empty(shape + (0,))


@dataclasses.dataclass(frozen=True)
class Trajectory:
    start_history: History
    symbols: np.ndarray

    def __len__(self):
        return len(self.symbols)


def run_from_windows(model: PotentialModel, start: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Run the chain from explicit start windows

    Args:
        model: The potential.
        start: Windows of shape ``(reach, R)``.
        uniforms: One uniform per step and replicate, shape ``(n, R)``.

    Returns:
        np.ndarray: Symbols of shape ``(n, R)``, oldest first.
    """
    reach = model.reach
    n, count = uniforms.shape
    buf = np.empty((reach + n, count))
    buf[:reach] = start
    for t in range(n):
        probs = model.pmf_batch(buf[t : t + reach])
        buf[reach + t] = utils.inverse_cdf(probs, uniforms[t])

    return buf[reach:].astype(np.int64)


def _start_windows(model, y, count):
    return np.repeat(y.window(model.reach)[:, None], count, axis=1)


def sample_paths(
    model: PotentialModel, y: History, n: int, streams: Sequence[RngStream]
) -> np.ndarray:
    """Sample one path of length ``n`` per stream, returned as columns"""
    if n < 1:
        raise exceptions.DomainError(f"Path length must be at least 1, got {n}")

    uniforms = np.stack([s.generator().random(n) for s in streams], axis=1)
    return run_from_windows(model, _start_windows(model, y, len(streams)), uniforms)


def sample_path(model: PotentialModel, y: History, n: int, rng: RngStream) -> Trajectory:
    """Sample ``eta_1..eta_n`` under the chain started from the past ``y``"""
    return Trajectory(start_history=y, symbols=sample_paths(model, y, n, [rng])[:, 0])


def sample_stationary_paths(
    model: PotentialModel,
    burn_in: int,
    n: int,
    stream: RngStream,
    start: int,
    stop: int,
    y: Optional[History] = None,
) -> np.ndarray:
    """Paths of replicates ``start..stop-1`` after ``burn_in`` steps

    Returns:
        np.ndarray: Symbols of shape ``(n, stop - start)``.
    """
    if burn_in < 0 or n < 1:
        raise exceptions.DomainError("burn_in must be nonnegative and n at least 1")

    y = y or REFERENCE_HISTORY
    uniforms = replicate_uniforms(stream, start, stop, burn_in + n)
    return run_from_windows(model, _start_windows(model, y, stop - start), uniforms)[burn_in:]


def sample_stationary(model: PotentialModel, burn_in: int, n: int, rng: RngStream) -> Trajectory:
    """Approximate draw from the stationary chain

    Runs ``burn_in + n`` steps from the all-zero reference past and keeps the
    last ``n`` symbols. The law of the kept symbols differs from the
    stationary law by at most the single-coordinate relaxation bound at
    ``burn_in`` (see `gmix.renewal.corollary1_bound`).
    """
    if burn_in < 0 or n < 1:
        raise exceptions.DomainError("burn_in must be nonnegative and n at least 1")

    symbols = sample_paths(model, REFERENCE_HISTORY, burn_in + n, [rng])[burn_in:, 0]
    return Trajectory(start_history=REFERENCE_HISTORY, symbols=symbols)


def map_replicates(
    func, replicates: int, per_replicate_elements: int, threads=1, chunk_size=None
) -> List:
    """Run ``func(start, stop)`` over chunks of replicates, in replicate order"""
    size = utils.auto_chunk_size(per_replicate_elements, chunk_size)
    chunks = utils.chunk_bounds(replicates, size)
    logger.debug("Running %d replicates in %d chunks of %d", replicates, len(chunks), size)
    return utils.map_chunks(lambda bounds: func(*bounds), chunks, threads=threads)
