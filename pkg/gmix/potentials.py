"""
Alphabets, semi-infinite histories, potentials and their regularity

A potential is represented by its probability kernel ``g = e^phi``. Every
built-in model reads a finite number of past symbols (its ``reach``), so the
kernel is evaluated on *windows*: arrays of shape ``(reach, R)`` holding ``R``
pasts in chronological order, the last row being the most recent symbol
``x_{-1}``. Symbols are stored as floats so windows can feed BLAS directly.

Context indices used by the Markov model and by observables put the most
recent symbol in the least significant digit: ``sum_i x_{-i} * S**(i-1)``.
"""

from __future__ import annotations

import abc
import dataclasses
import functools
import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.special
import scipy.stats

from gmix import divergence, exceptions, utils

logger = logging.getLogger(__name__)

# Largest number of context pairs enumerated for exact Markov variations
MAX_ENUMERATED_PAIRS = 1_000_000
# Tolerance used when checking that explicit sequences are non-increasing
MONOTONE_RTOL = 1e-9


@dataclasses.dataclass(frozen=True)
class Alphabet:
    """A finite alphabet ``{0, ..., size-1}`` or the nonnegative integers

    Use `Alphabet.finite` or `Alphabet.countable` to construct one.
    """

    size: Optional[int] = None

    def __post_init__(self):
        if self.size is not None and self.size < 2:
            raise exceptions.DomainError(
                f"A finite alphabet needs at least 2 symbols, got {self.size}"
            )

    @classmethod
    def finite(cls, size: int) -> Alphabet:
        return cls(size=int(size))

    @classmethod
    def countable(cls) -> Alphabet:
        return cls(size=None)

    @property
    def is_finite(self) -> bool:
        return self.size is not None

    def contains(self, symbol) -> bool:
        if isinstance(symbol, bool) or int(symbol) != symbol or symbol < 0:
            return False

        return self.size is None or symbol < self.size

    def symbols(self) -> range:
        if self.size is None:
            raise exceptions.DomainError("The countable alphabet cannot be enumerated")

        return range(self.size)


@dataclasses.dataclass(frozen=True)
class History:
    """A semi-infinite past: a finite prefix followed by a constant tail

    ``prefix[0]`` is the most recent symbol ``x_{-1}``, ``prefix[1]`` is
    ``x_{-2}`` and so on. Every coordinate deeper than the prefix equals
    ``tail_symbol``.
    """

    prefix: Tuple[int, ...]
    tail_symbol: int

    def lookup(self, depth: int) -> int:
        """The symbol ``x_{-depth}``"""
        if depth < 1:
            raise exceptions.DomainError(f"History depth must be at least 1, got {depth}")

        return self.prefix[depth - 1] if depth <= len(self.prefix) else self.tail_symbol

    def window(self, reach: int) -> np.ndarray:
        """The most recent ``reach`` symbols in chronological order"""
        window = np.full(reach, float(self.tail_symbol))
        recent = np.asarray(self.prefix[:reach], dtype=float)[::-1]
        if len(recent):
            window[reach - len(recent) :] = recent

        return window

    def extend(self, symbols: Sequence[int]) -> History:
        """Append symbols (given oldest first) to the history"""
        return History(tuple(int(s) for s in reversed(symbols)) + self.prefix, self.tail_symbol)


def make_history(prefix, tail_symbol, alphabet: Optional[Alphabet] = None) -> History:
    """Build a `History`, checking symbols against ``alphabet`` when given"""
    prefix = tuple(int(s) for s in prefix)
    if alphabet is not None:
        bad = [s for s in prefix + (int(tail_symbol),) if not alphabet.contains(s)]
        if bad:
            raise exceptions.DomainError(f"Symbols {bad} are not in the alphabet")

    return History(prefix, int(tail_symbol))


def lookup(x: History, depth: int) -> int:
    """The symbol of ``x`` at ``depth`` (``x_{-depth}``)"""
    return x.lookup(depth)


@dataclasses.dataclass(frozen=True)
class RegularityProfile:
    """Upper bounds on the chi-square and variation rates of a potential

    Without explicit sequences, ``chi2(k) = chi2_C / k**(1 + chi2_delta)``.
    With them, ``explicit_chi2[k-1]`` is used up to its length and
    ``min(explicit_chi2[-1], chi2_C / k**(1 + chi2_delta))`` beyond.
    ``chi2_zero`` bounds ``chi2_0``, the divergence between pasts with nothing
    in common, when it is known.
    """

    chi2_C: float
    chi2_delta: float
    explicit_chi2: Optional[Tuple[float, ...]] = None
    explicit_var: Optional[Tuple[float, ...]] = None
    chi2_zero: Optional[float] = None

    def __post_init__(self):
        if self.chi2_C < 0 or not self.chi2_delta > 0:
            raise exceptions.DomainError(
                f"Profile needs C >= 0 and delta > 0, got C={self.chi2_C}, delta={self.chi2_delta}"
            )
        if self.chi2_zero is not None and not self.chi2_zero >= 0:
            raise exceptions.DomainError(f"chi2_zero must be nonnegative, got {self.chi2_zero}")

        for name in ("explicit_chi2", "explicit_var"):
            values = getattr(self, name)
            if values is None:
                continue

            arr = np.asarray(values, dtype=float)
            if len(arr) == 0 or np.any(arr < 0):
                raise exceptions.DomainError(f"{name} must be a nonempty nonnegative sequence")
            if np.any(np.diff(arr) > MONOTONE_RTOL * arr[:-1] + 1e-300):
                raise exceptions.DomainError(f"{name} must be non-increasing")

        if self.explicit_chi2 is not None:
            ks = np.arange(1, len(self.explicit_chi2) + 1, dtype=float)
            power = self.chi2_C / ks**self._exponent
            if np.any(np.asarray(self.explicit_chi2) > power * (1 + MONOTONE_RTOL) + 1e-300):
                raise exceptions.DomainError(
                    "explicit_chi2 must lie below chi2_C / k**(1 + delta)"
                )

    @property
    def _exponent(self) -> float:
        return 1.0 + self.chi2_delta

    @functools.cached_property
    def _explicit_prefix(self):
        return utils.prefix_sums(self.explicit_chi2)

    def chi2(self, k):
        """Bound on ``chi2_k`` (vectorised over ``k >= 1``)"""
        k = np.asarray(k, dtype=float)
        power = self.chi2_C / k**self._exponent
        if self.explicit_chi2 is None:
            return power

        explicit = np.asarray(self.explicit_chi2, dtype=float)
        idx = np.clip(k.astype(int) - 1, 0, len(explicit) - 1)
        beyond = np.minimum(explicit[-1], power)
        return np.where(k <= len(explicit), explicit[idx], beyond)

    def var(self, k):
        """Bound on the kernel variation ``var_k(e^phi)``

        Falls back to ``sqrt(chi2(k))`` (the variation squared never exceeds
        the chi-square variation) when no explicit sequence is stored.
        """
        k = np.asarray(k, dtype=float)
        if self.explicit_var is None:
            return np.sqrt(self.chi2(k))

        explicit = np.asarray(self.explicit_var, dtype=float)
        idx = np.clip(k.astype(int) - 1, 0, len(explicit) - 1)
        beyond = np.minimum(explicit[-1], np.sqrt(self.chi2(k)))
        return np.where(k <= len(explicit), explicit[idx], beyond)

    def _power_sum(self, lo, hi):
        """``C * sum_{j=lo}^{hi} j**-(1+delta)``, with ``hi`` possibly infinite"""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        s = self._exponent
        finite = np.isfinite(hi)
        upper = np.where(finite, scipy.special.zeta(s, np.where(finite, hi, 0) + 1), 0.0)
        total = self.chi2_C * (scipy.special.zeta(s, lo) - upper)
        return np.where(hi >= lo, np.maximum(total, 0.0), 0.0)

    def chi2_block_sum(self, lo, hi):
        """``sum_{j=lo}^{hi} chi2(j)`` for ``lo >= 1`` (vectorised, ``hi`` may be inf)"""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(lo < 1):
            raise exceptions.DomainError("chi-square indices start at 1")

        if self.explicit_chi2 is None:
            return self._power_sum(lo, hi)

        length = len(self.explicit_chi2)
        prefix = self._explicit_prefix
        e_lo = np.clip(lo, 1, length + 1).astype(int)
        e_hi = np.clip(hi, 0, length).astype(int)
        explicit_part = (prefix[e_hi] - prefix[e_lo - 1]).astype(float)
        explicit_part = np.where(e_hi >= e_lo, explicit_part, 0.0)

        last = float(self.explicit_chi2[-1])
        if last == 0.0 or self.chi2_C == 0.0:
            return explicit_part

        # Beyond the explicit range the bound is min(last, C j^-s): flat up to
        # the crossing index, power law after it
        crossing = math.floor((self.chi2_C / last) ** (1.0 / self._exponent))
        b_lo = np.maximum(lo, length + 1)
        flat_hi = np.minimum(hi, crossing)
        flat = np.where(flat_hi >= b_lo, (flat_hi - b_lo + 1) * last, 0.0)
        power = self._power_sum(np.maximum(b_lo, crossing + 1), hi)
        return explicit_part + flat + power

    def chi2_total(self) -> float:
        """``sum_{j>=1} chi2(j)``"""
        return float(self.chi2_block_sum(1, np.inf))

    @classmethod
    def from_sequences(cls, chi2_seq, var_seq, delta, chi2_zero=None) -> RegularityProfile:
        """Profile from explicit sequences, with the smallest valid ``C`` for ``delta``"""
        chi2_seq = np.minimum.accumulate(np.asarray(chi2_seq, dtype=float))
        var_seq = np.minimum.accumulate(np.asarray(var_seq, dtype=float))
        ks = np.arange(1, len(chi2_seq) + 1, dtype=float)
        const = float(np.max(chi2_seq * ks ** (1.0 + delta))) if len(chi2_seq) else 0.0
        return cls(
            chi2_C=const,
            chi2_delta=float(delta),
            explicit_chi2=tuple(chi2_seq.tolist()),
            explicit_var=tuple(var_seq.tolist()),
            chi2_zero=chi2_zero,
        )


def poisson_chi2(lam_x, lam_y):
    """Chi-square divergence of ``Poisson(lam_x)`` from ``Poisson(lam_y)``"""
    lam_x = np.asarray(lam_x, dtype=float)
    lam_y = np.asarray(lam_y, dtype=float)
    return np.expm1((lam_x - lam_y) ** 2 / lam_y)


class PotentialModel(abc.ABC):
    """A normalised potential given through its kernel on finite windows"""

    alphabet: Alphabet
    reach: int

    @property
    def memory_order(self) -> int:
        """The finite memory order ``m`` (all built-in models have one)"""
        return self.reach

    @property
    def support_size(self) -> int:
        """Number of symbols carried by `pmf_batch` rows"""
        return self.alphabet.size

    @property
    def default_delta(self) -> float:
        return 2.0

    @abc.abstractmethod
    def pmf_batch(self, window: np.ndarray) -> np.ndarray:
        """Kernel rows ``g(. | x)`` for a batch of windows

        Args:
            window: Array of shape ``(reach, R)``.

        Returns:
            Array of shape ``(R, support_size)``.
        """

    @abc.abstractmethod
    def chi2_upper(self, k: int) -> float:
        """Upper bound on ``chi2_k(phi)``"""

    @abc.abstractmethod
    def var_upper(self, k: int, kind: str = "kernel") -> float:
        """Upper bound on ``var_k(e^phi)`` (``kind="kernel"``) or ``var_k(phi)``"""

    def _check_symbol(self, a):
        if not self.alphabet.contains(a):
            raise exceptions.DomainError(f"Symbol {a!r} is not in the alphabet")

    def log_prob(self, a: int, x: History) -> float:
        """``phi(a . x)``"""
        self._check_symbol(a)
        if a >= self.support_size:
            return -math.inf

        row = self.pmf_batch(x.window(self.reach)[:, None])[0]
        return math.log(row[a]) if row[a] > 0 else -math.inf

    def random_windows(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniformly drawn windows of shape ``(reach, count)``"""
        return rng.integers(0, self.alphabet.size, size=(self.reach, count)).astype(float)

    def extreme_windows(self):
        """Constant windows, one per symbol"""
        return [np.full(self.reach, float(a)) for a in self.alphabet.symbols()]

    def chi2_empirical(self, k: int, n_contexts: int, rng: np.random.Generator) -> float:
        """Lower estimate of ``chi2_k`` by searching context triples ``(z, x, y)``

        ``k = 0`` searches pasts with nothing in common.
        """
        if k >= self.reach:
            return 0.0

        depth = self.reach - k
        xs = self.random_windows(n_contexts, rng)
        ys = self.random_windows(n_contexts, rng)
        ys[depth:] = xs[depth:]

        extremes = self.extreme_windows()
        pairs = [
            (np.concatenate([x[:depth], z[depth:]]), np.concatenate([y[:depth], z[depth:]]))
            for z, x, y in itertools.product(extremes, repeat=3)
        ]
        if pairs:
            xs = np.column_stack([xs] + [p[0][:, None] for p in pairs])
            ys = np.column_stack([ys] + [p[1][:, None] for p in pairs])

        px = self.pmf_batch(xs)
        py = self.pmf_batch(ys)
        values = np.maximum(divergence.chi2_batch(px, py), divergence.chi2_batch(py, px))
        return float(np.max(values)) if len(values) else 0.0

    @functools.cached_property
    def regularity(self) -> RegularityProfile:
        """Explicit chi-square and variation sequences up to the model's reach"""
        length = max(self.reach, 1)
        ks = range(1, length + 1)
        return RegularityProfile.from_sequences(
            [self.chi2_upper(k) for k in ks],
            [self.var_upper(k) for k in ks],
            self.default_delta,
            chi2_zero=self.chi2_upper(0),
        )

    def normalization_error(self, x: History) -> float:
        """``|sum_a e^{phi(a.x)} - 1|`` over the carried support"""
        total = math.fsum(math.exp(self.log_prob(a, x)) for a in range(self.support_size))
        return abs(total - 1.0)


@dataclasses.dataclass(frozen=True, eq=False)
class IIDModel(PotentialModel):
    """Independent symbols with law ``probs``"""

    probs: Tuple[float, ...]

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise exceptions.DomainError("IID probabilities must be nonnegative and sum to 1")

        object.__setattr__(self, "alphabet", Alphabet.finite(len(probs)))
        object.__setattr__(self, "reach", 0)
        object.__setattr__(self, "_probs", probs)

    def pmf_batch(self, window):
        return np.broadcast_to(self._probs, (window.shape[1], len(self._probs)))

    def chi2_upper(self, k):
        return 0.0

    def var_upper(self, k, kind="kernel"):
        return 0.0


def context_index(window: np.ndarray, size: int) -> np.ndarray:
    """Context index of each window column (most recent symbol least significant)"""
    order = window.shape[0]
    powers = float(size) ** np.arange(order)
    if not order:
        return np.zeros(window.shape[1], dtype=np.int64)

    return (powers @ window[::-1]).astype(np.int64)


def context_windows(size: int, order: int) -> np.ndarray:
    """Every window of length ``order`` as columns, in context-index order"""
    count = size**order
    idx = np.arange(count)
    digits = (idx[None, :] // (size ** np.arange(order))[:, None]) % size
    return digits[::-1].astype(float)


@dataclasses.dataclass(frozen=True, eq=False)
class MarkovModel(PotentialModel):
    """A Markov chain of order ``order`` over ``{0, ..., S-1}``

    ``table[c]`` is the next-symbol law after context ``c``
    (``c = sum_i x_{-i} S**(i-1)``).
    """

    order: int
    table: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.ndim != 2 or table.shape[1] < 2:
            raise exceptions.DomainError("Markov table must be a matrix with at least 2 columns")

        size = table.shape[1]
        if table.shape[0] != size**self.order:
            raise exceptions.DomainError(
                f"Markov table of order {self.order} needs {size ** self.order} rows,"
                f" got {table.shape[0]}"
            )
        if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-9):
            raise exceptions.DomainError("Markov table rows must be probability vectors")

        object.__setattr__(self, "alphabet", Alphabet.finite(size))
        object.__setattr__(self, "reach", int(self.order))
        object.__setattr__(self, "_table", table)

    def pmf_batch(self, window):
        return self._table[context_index(window, self.alphabet.size)]

    def _pair_extremes(self, k):
        """Maximal chi-square and variations over contexts agreeing on ``k`` recents"""
        size = self.alphabet.size
        n_ctx = size**self.order
        group_size = size ** (self.order - k)
        if n_ctx * group_size > MAX_ENUMERATED_PAIRS:
            return None

        # Contexts sharing their k most recent symbols share idx mod S^k
        shared = size**k
        rows = self._table[np.arange(n_ctx).reshape(group_size, shared).T]
        p = rows[:, :, None, :]
        q = rows[:, None, :, :]
        chi2 = divergence.chi2_batch(p, q).max()
        kernel = np.abs(p - q).max()
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.log(rows)
            diff = np.abs(logs[:, :, None, :] - logs[:, None, :, :])
            # Both zero gives nan and no variation; one zero is an infinite variation
            potential = np.nan_to_num(diff, nan=0.0, posinf=np.inf).max()
        return float(chi2), float(kernel), float(potential)

    def chi2_upper(self, k):
        if k >= self.order:
            return 0.0

        extremes = self._pair_extremes(k)
        if extremes is None:
            logger.debug("Markov chi2_%d beyond enumeration capacity, using 1/min g - 1", k)
            return float(1.0 / self._table.min() - 1.0)

        return extremes[0]

    def var_upper(self, k, kind="kernel"):
        if k >= self.order:
            return 0.0

        extremes = self._pair_extremes(k)
        if extremes is None:
            return 1.0 if kind == "kernel" else math.inf

        return extremes[1] if kind == "kernel" else extremes[2]


@dataclasses.dataclass(frozen=True, eq=False)
class LongMemoryBinaryModel(PotentialModel):
    """Binary chain with ``g(1|x) = 1/2 + eps0 * sum_k w_k xi(x_{-k})``

    ``xi(0) = -1``, ``xi(1) = 1`` and ``w_k`` is proportional to
    ``k**(-(3 + delta)/2)`` for ``k <= k_max``, normalised to sum to one.
    """

    eps0: float
    delta: float
    k_max: int

    def __post_init__(self):
        if not 0 < self.eps0 < 0.5:
            raise exceptions.DomainError(f"eps0 must lie in (0, 1/2), got {self.eps0}")
        if not self.delta > 0 or self.k_max < 1:
            raise exceptions.DomainError("delta must be positive and k_max at least 1")

        ks = np.arange(1, self.k_max + 1, dtype=float)
        raw = ks ** (-(3.0 + self.delta) / 2.0)
        weights = raw / math.fsum(raw)
        tails = utils.tail_sums(weights)
        object.__setattr__(self, "alphabet", Alphabet.finite(2))
        object.__setattr__(self, "reach", int(self.k_max))
        object.__setattr__(self, "weights", weights)
        # weight_tails[k] = sum_{j > k} w_j
        object.__setattr__(self, "weight_tails", tails.astype(float))
        object.__setattr__(self, "_reversed_weights", weights[::-1].copy())

    @property
    def default_delta(self):
        return float(self.delta)

    def pmf_batch(self, window):
        score = 2.0 * (self._reversed_weights @ window) - 1.0
        p1 = 0.5 + self.eps0 * score
        return np.column_stack([1.0 - p1, p1])

    def _tail(self, k):
        return float(self.weight_tails[k]) if k < self.k_max else 0.0

    def chi2_upper(self, k):
        gap = 2.0 * self.eps0 * self._tail(k)
        return gap**2 / (0.25 - self.eps0**2)

    def var_upper(self, k, kind="kernel"):
        gap = 2.0 * self.eps0 * self._tail(k)
        if kind == "kernel":
            return gap

        return math.log1p(gap / (0.5 - self.eps0))


@dataclasses.dataclass(frozen=True, eq=False)
class PoissonARModel(PotentialModel):
    """Poisson autoregression with ``lambda(x) = exp(sum_i beta_i (x_{-i} ^ gamma_i))``

    ``beta_seq`` and ``gamma_seq`` hold the first ``cutoff`` coefficients;
    ``truncation_tail`` is ``sum_{i > cutoff} |beta_i| gamma_i`` of the
    untruncated sequences, so kernels differ from the untruncated model by a
    factor of at most ``exp(truncation_tail)`` in intensity.
    """

    beta_seq: Tuple[float, ...]
    gamma_seq: Tuple[int, ...]
    cutoff: int
    tail_mass_tol: float = 1e-12
    delta: float = 1.0
    truncation_tail: float = 0.0

    def __post_init__(self):
        if self.cutoff < 1:
            raise exceptions.DomainError("cutoff must be at least 1")
        if len(self.beta_seq) < self.cutoff or len(self.gamma_seq) < self.cutoff:
            raise exceptions.DomainError(f"beta_seq and gamma_seq need {self.cutoff} entries")

        betas = np.asarray(self.beta_seq[: self.cutoff], dtype=float)
        gammas = np.asarray(self.gamma_seq[: self.cutoff], dtype=float)
        if np.any(gammas < 0) or np.any(gammas != np.round(gammas)):
            raise exceptions.DomainError("gamma_seq must hold nonnegative integers")

        contrib = betas * gammas
        strength = float(math.fsum(np.abs(contrib)))
        cap = int(scipy.stats.poisson.ppf(1.0 - self.tail_mass_tol, math.exp(strength)))

        object.__setattr__(self, "alphabet", Alphabet.countable())
        object.__setattr__(self, "reach", int(self.cutoff))
        object.__setattr__(self, "strength", strength)
        object.__setattr__(self, "_betas", betas)
        object.__setattr__(self, "_gammas", gammas)
        object.__setattr__(self, "_reversed_betas", betas[::-1].copy())
        object.__setattr__(self, "_reversed_gammas", gammas[::-1].copy())
        object.__setattr__(self, "_support", np.arange(cap + 1, dtype=float))
        # Cumulative positive / negative parts: head sums for i <= k, tails for i > k
        pos = np.maximum(contrib, 0.0)
        neg = np.minimum(contrib, 0.0)
        object.__setattr__(self, "_head_pos", utils.prefix_sums(pos).astype(float))
        object.__setattr__(self, "_tail_pos", utils.tail_sums(pos).astype(float))
        object.__setattr__(self, "_tail_neg", utils.tail_sums(neg).astype(float))

    @property
    def default_delta(self):
        return float(self.delta)

    @property
    def support_size(self):
        return len(self._support)

    def intensity(self, window: np.ndarray) -> np.ndarray:
        """``lambda`` for each window column"""
        clipped = np.minimum(window, self._reversed_gammas[:, None])
        return np.exp(self._reversed_betas @ clipped)

    def pmf_batch(self, window):
        lam = self.intensity(window)
        pmf = scipy.stats.poisson.pmf(self._support[None, :], lam[:, None])
        return pmf / pmf.sum(axis=1, keepdims=True)

    def log_prob(self, a, x):
        self._check_symbol(a)
        lam = float(self.intensity(x.window(self.reach)[:, None])[0])
        return float(scipy.stats.poisson.logpmf(a, lam))

    def _extremes(self, k):
        """Shared head, lowest tail and tail spread for pasts agreeing on ``k`` recents

        Terms past the cutoff are unknown up to ``truncation_tail`` in total, which
        widens the spread and, once ``k`` passes the cutoff, the shared head.
        """
        tail = self.truncation_tail
        if k >= self.cutoff:
            return self._head_pos[self.cutoff] + tail, 0.0, tail

        t_min = self._tail_neg[k]
        return self._head_pos[k], t_min, self._tail_pos[k] - t_min + tail

    def _chi2_bound(self, k):
        # Intensities exp(z + t) with the shared head z maximal and the two
        # tails at opposite extremes; the sup of exp(lam_y (lam_x/lam_y - 1)^2) - 1
        head, t_min, spread = self._extremes(k)
        if spread == 0:
            return 0.0

        with np.errstate(over="ignore"):
            return float(np.expm1(np.exp(head + t_min) * np.expm1(spread) ** 2))

    def chi2_upper(self, k):
        if k >= self.cutoff:
            # chi2_k is non-increasing in k; past the cutoff the bound stays flat
            return min(self._chi2_bound(self.cutoff - 1), self._chi2_bound(k))

        return self._chi2_bound(k)

    def var_upper(self, k, kind="kernel"):
        _, _, spread = self._extremes(k)
        if spread == 0:
            return 0.0
        if kind == "kernel":
            strength = self.strength + self.truncation_tail
            with np.errstate(over="ignore"):
                return float(min(1.0, np.exp(strength) * -np.expm1(-spread)))

        return math.inf

    def truncation_variation(self) -> float:
        """Bound on the kernel distance to the untruncated model"""
        if not math.isfinite(self.truncation_tail):
            return 1.0

        return float(min(1.0, math.exp(self.strength) * -math.expm1(-self.truncation_tail)))

    def random_windows(self, count, rng):
        highs = self._reversed_gammas[:, None] + 1
        return np.floor(rng.random((self.reach, count)) * highs)

    def extreme_windows(self):
        high = np.where(self._reversed_betas > 0, self._reversed_gammas, 0.0)
        low = np.where(self._reversed_betas < 0, self._reversed_gammas, 0.0)
        return [high, low]


def log_prob(model: PotentialModel, a: int, x: History) -> float:
    """``phi(a . x)`` for ``model``"""
    return model.log_prob(a, x)


def chi2_upper(model: PotentialModel, k: int) -> float:
    """Upper bound on the chi-square variation rate ``chi2_k(phi)``"""
    if k < 0:
        raise exceptions.DomainError(f"k must be nonnegative, got {k}")

    return model.chi2_upper(k)


def chi2_empirical(model: PotentialModel, k: int, n_contexts: int, rng) -> float:
    """Lower estimate of ``chi2_k(phi)`` from random and extreme contexts"""
    if k < 0 or n_contexts < 1:
        raise exceptions.DomainError("chi2_empirical needs k >= 0 and n_contexts >= 1")

    return model.chi2_empirical(k, n_contexts, rng)


def random_histories(model: PotentialModel, count: int, rng) -> List[History]:
    """``count`` pasts whose most recent ``reach`` symbols are drawn at random"""
    windows = model.random_windows(count, rng)
    return [History(tuple(int(s) for s in column[::-1]), 0) for column in windows.T]


def max_normalization_error(model: PotentialModel, count: int, rng) -> float:
    """Largest `normalization_error` over ``count`` random histories"""
    if count < 1:
        raise exceptions.DomainError(f"count must be at least 1, got {count}")

    return max(model.normalization_error(x) for x in random_histories(model, count, rng))


def var_upper(model: PotentialModel, k: int, kind: str = "kernel") -> float:
    """Upper bound on ``var_k(e^phi)`` (``kind="kernel"``) or ``var_k(phi)``"""
    if kind not in ("kernel", "potential"):
        raise exceptions.DomainError(f'kind must be "kernel" or "potential", got {kind!r}')

    return model.var_upper(k, kind=kind)
