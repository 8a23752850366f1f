"""
Utilities for gmix
"""

import concurrent.futures
import logging

import numpy as np

logger = logging.getLogger(__name__)

# Element budget for one chunk of vectorised replicate work
CHUNK_ELEMENT_BUDGET = 2_000_000


def inverse_cdf(probs, u):
    """Sample one index per row of ``probs`` by CDF inversion

    Args:
        probs (np.ndarray): Array of shape ``(R, S)`` of nonnegative weights.
            Rows need not be normalised; each row is scaled by its own total.
        u (np.ndarray): Uniforms in ``[0, 1)`` of shape ``(R,)``.

    Returns:
        np.ndarray: Integer indices of shape ``(R,)``.
    """
    cdf = np.cumsum(probs, axis=1)
    target = u * cdf[:, -1]
    idx = (cdf <= target[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def tail_sums(values):
    """Extended-precision tail sums ``T[i] = sum(values[i:])``

    The result has one more entry than ``values`` with ``T[len] = 0``.
    Summation runs from the smallest (last) terms up in ``np.longdouble``.
    """
    values = np.asarray(values, dtype=np.longdouble)
    tails = np.zeros(len(values) + 1, dtype=np.longdouble)
    tails[:-1] = np.cumsum(values[::-1], dtype=np.longdouble)[::-1]
    return tails


def prefix_sums(values):
    """Extended-precision prefix sums ``P[i] = sum(values[:i])``"""
    values = np.asarray(values, dtype=np.longdouble)
    prefix = np.zeros(len(values) + 1, dtype=np.longdouble)
    prefix[1:] = np.cumsum(values, dtype=np.longdouble)
    return prefix


def chunk_bounds(total, chunk_size):
    """Split ``range(total)`` into consecutive ``(start, stop)`` chunks"""
    chunk_size = max(1, int(chunk_size))
    return [(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def auto_chunk_size(per_replicate_elements, requested=None):
    """Pick how many replicates to vectorise together

    Args:
        per_replicate_elements (int): Approximate array elements one replicate
            occupies while being simulated.
        requested (int, default=None): Explicit chunk size from the config.
    """
    if requested:
        return int(requested)

    return max(1, CHUNK_ELEMENT_BUDGET // max(1, int(per_replicate_elements)))


def map_chunks(func, chunks, threads=1):
    """Map ``func`` over chunks, preserving order

    With ``threads > 1`` the chunks run on a thread pool. Results are always
    returned in chunk order so reductions do not depend on scheduling.
    """
    if threads <= 1 or len(chunks) <= 1:
        return [func(chunk) for chunk in chunks]

    logger.debug("Mapping %d chunks over %d threads", len(chunks), threads)
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, chunks))


def format_float(value):
    """Round-trippable text for a float (17 significant digits)"""
    if value is None:
        return ""

    return format(float(value), ".17g")


def mean_and_se(samples, axis=0):
    """Sample mean and standard error along ``axis``"""
    samples = np.asarray(samples, dtype=float)
    count = samples.shape[axis]
    mean = samples.mean(axis=axis)
    if count < 2:
        return mean, np.zeros_like(mean)

    return mean, samples.std(axis=axis, ddof=1) / np.sqrt(count)


def bernoulli_se(proportion, count):
    """Standard error of a sample proportion (``ddof=1`` convention)"""
    proportion = np.asarray(proportion, dtype=float)
    if count < 2:
        return np.zeros_like(proportion)

    return np.sqrt(proportion * (1.0 - proportion) / (count - 1))
