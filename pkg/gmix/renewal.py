"""
The computable bound pipeline for block-coupling failure probabilities

From a regularity profile and a block schedule ``M_n = floor(n**beta)`` the
pipeline produces:

1. ``q_bound(n, k)``: bounds on the probability that block ``n`` disagrees
   given that the ``k`` preceding blocks agreed (Pinsker and
   Bretagnolle-Huber bounds on the chained block divergences).
2. ``b_k``: bounds on ``sup_{n >= k+1} q(n, k)``, non-increasing in ``k``.
3. ``f_i = b_{i-1} prod_{l < i-1} (1 - b_l)``, the first-renewal law of the
   dominating binary process.
4. ``u_n = sum_{k=1}^n f_k u_{n-k}``, the probability that the dominating
   process is in state 1 at time ``n``. ``u_n`` bounds ``P[X_n = 1]`` with no
   unknown constant.

All long sums run in ``np.longdouble``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Iterable, Optional

import numpy as np
import scipy.special
import scipy.stats

from gmix import exceptions, utils
from gmix.coupling import BlockSchedule
from gmix.potentials import RegularityProfile

logger = logging.getLogger(__name__)

# Default number of block indices scanned past k+1 when bounding b_k
DEFAULT_N_SCAN = 64
# Relative tolerance of the lemma validators
VALIDATOR_RTOL = 1e-9


def _bret(profile: RegularityProfile, first: bool = False) -> float:
    """Bretagnolle-Huber ceiling, with ``chi2_0`` included for the first block"""
    total = profile.chi2_total()
    if first and profile.chi2_zero is not None:
        total += profile.chi2_zero
    return min(math.sqrt(-math.expm1(-total)), 1.0)


def _boundary(schedule: BlockSchedule, n):
    """Vectorised ``M_n`` as floats"""
    n = np.asarray(n, dtype=float)
    return np.floor(n**schedule.beta * (1 + 1e-12))


def _pinsker_block(profile, schedule, n, k):
    """``sqrt(1/2 sum_{j=M_n}^{M_{n+1}-1} chi2_{j - M_{n-k}})``, vectorised"""
    anchor = _boundary(schedule, n - k)
    lo = _boundary(schedule, n) - anchor
    hi = _boundary(schedule, n + 1) - 1 - anchor
    return np.sqrt(0.5 * profile.chi2_block_sum(lo, hi))


def q_bound(profile: RegularityProfile, schedule: BlockSchedule, n: int, k: int) -> float:
    """Bound on the disagreement probability of block ``n`` after ``k`` agreeing blocks

    Args:
        profile: Regularity of the potential.
        schedule: Block schedule.
        n: Block index (``n >= 1``).
        k: Number of agreeing blocks, ``k = 0`` or ``1 <= k <= n - 1``.
    """
    if n < 1 or k < 0 or (k >= 1 and k > n - 1):
        raise exceptions.DomainError(
            f"q_bound needs n >= 1 and k = 0 or 1 <= k <= n-1, got n={n}, k={k}"
        )

    bound = _bret(profile, first=k == 0)
    if k >= 1:
        bound = min(bound, float(_pinsker_block(profile, schedule, n, k)))

    return bound


def _delta_nk(delta, beta, k, n):
    """``Delta_k^n`` in cancellation-free form (vectorised, no checks)"""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    n_beta = n**beta
    # n^b - (n-k)^b and (n+1)^b - n^b, written through expm1/log1p
    gap = -n_beta * np.expm1(beta * np.log1p(-k / n))
    step = n_beta * np.expm1(beta * np.log1p(1.0 / n))
    lower = gap - 2.0
    upper = gap + step
    return lower ** (-delta) * -np.expm1(-delta * np.log1p((upper - lower) / lower))


def delta_nk(delta: float, beta: float, k: int, n: int) -> float:
    """``(n^b - (n-k)^b - 2)^-d - ((n+1)^b - (n-k)^b)^-d``

    Defined for ``delta > 0``, ``beta >= 1``, ``k >= 3`` and ``n >= k + 1``.
    """
    if not delta > 0 or not beta >= 1 or k < 3 or n < k + 1:
        raise exceptions.DomainError(
            f"delta_nk needs delta > 0, beta >= 1, k >= 3 and n >= k+1,"
            f" got delta={delta}, beta={beta}, k={k}, n={n}"
        )
    if n**beta - (n - k) ** beta <= 2:
        raise exceptions.DomainError(f"delta_nk is undefined at k={k}, n={n}")

    return float(_delta_nk(delta, beta, k, n))


def hj2_majorant(delta, beta, k):
    """``6 * 2^beta * 4^delta * beta / k^(delta*beta + 1)``, bounding ``Delta_k^{k+1}``"""
    k = np.asarray(k, dtype=float)
    return 6.0 * 2.0**beta * 4.0**delta * beta / k ** (delta * beta + 1.0)


def b_majorant(profile: RegularityProfile, beta: float, k):
    """Closed-form bound ``sqrt(3 C 2^beta 4^delta beta / (delta k^(delta beta + 1)))``"""
    delta = profile.chi2_delta
    return np.sqrt(profile.chi2_C * hj2_majorant(delta, beta, k) / (2.0 * delta))


def b_seq(
    profile: RegularityProfile, schedule: BlockSchedule, K: int, n_scan: int = DEFAULT_N_SCAN
) -> np.ndarray:
    """Non-increasing bounds ``b_0..b_K`` on ``sup_{n >= k+1} q(n, k)``

    For ``k <= 2`` only the Bretagnolle-Huber ceiling is used, and ``b_0`` also
    counts ``chi2_0`` when the profile knows it. For ``k >= 3``
    the sup over ``n`` in ``[k+1, k+n_scan]`` is computed directly and every
    later ``n`` is covered by the Pinsker majorant at ``n = k+n_scan+1``,
    which bounds them all since ``Delta_k^n`` does not increase in ``n``. The
    result is also capped by the closed-form majorant and the ceiling.
    """
    if K < 0 or n_scan < 1:
        raise exceptions.DomainError("b_seq needs K >= 0 and n_scan >= 1")

    b = np.full(K + 1, _bret(profile))
    b[0] = _bret(profile, first=True)
    if K >= 3:
        ks = np.arange(3, K + 1, dtype=float)
        offsets = np.arange(1, n_scan + 1, dtype=float)
        ns = ks[:, None] + offsets[None, :]
        scanned = _pinsker_block(profile, schedule, ns, ks[:, None]).max(axis=1)
        beyond = np.sqrt(
            profile.chi2_C * _delta_nk(profile.chi2_delta, schedule.beta, ks, ks + n_scan + 1)
            / (2.0 * profile.chi2_delta)
        )
        tail = np.maximum(scanned, beyond)
        b[3:] = np.minimum.reduce([tail, b_majorant(profile, schedule.beta, ks), b[3:]])

    b = np.minimum.accumulate(np.minimum(b, 1.0))
    logger.debug("b_0..b_%d computed (b_0=%.6g, b_K=%.6g)", K, b[0], b[-1])
    return b


def f_seq(b) -> np.ndarray:
    """``f_0 = 0`` and ``f_i = b_{i-1} prod_{l=0}^{i-2} (1 - b_l)`` for ``i = 1..len(b)``"""
    b = np.asarray(b, dtype=np.longdouble)
    if np.any(b >= 1):
        raise exceptions.PipelineError(
            "No coupling guarantee: some b_k reached 1 (the divergence ceiling is violated)"
        )
    if np.any(b < 0):
        raise exceptions.DomainError("b_k must be nonnegative")

    survival = np.exp(np.concatenate([[0.0], np.cumsum(np.log1p(-b))]).astype(np.longdouble))
    f = np.zeros(len(b) + 1, dtype=np.longdouble)
    f[1:] = b * survival[:-1]
    if f.sum() >= 1:
        raise exceptions.PipelineError("No coupling guarantee: the renewal law has total mass 1")

    return f


def renewal_u(f, N: int) -> np.ndarray:
    """``u_0 = 1`` and ``u_n = sum_{k=1}^n f_k u_{n-k}`` for ``n = 1..N``

    ``f[0]`` is ignored; ``f_k`` beyond ``len(f) - 1`` is taken as 0.
    """
    if N < 0:
        raise exceptions.DomainError(f"N must be nonnegative, got {N}")

    f = np.asarray(f, dtype=np.longdouble)
    u = np.zeros(N + 1, dtype=np.longdouble)
    u[0] = 1
    for n in range(1, N + 1):
        m = min(n, len(f) - 1)
        u[n] = np.dot(f[1 : m + 1], u[n - 1 :: -1][:m])

    return u


@dataclasses.dataclass(frozen=True)
class BoundPipeline:
    """The bound pipeline for one profile and schedule

    ``eps_floor`` is ``1 - b_0``, the gap between the Bretagnolle-Huber
    ceiling on every ``b_k`` and 1.
    """

    profile: RegularityProfile
    schedule: BlockSchedule
    b: np.ndarray
    f: np.ndarray
    u: np.ndarray
    eps_floor: float

    @property
    def product_lower(self) -> float:
        """Certified lower bound on ``prod_{k >= 0} (1 - b_k)``"""
        b = np.asarray(self.b, dtype=np.longdouble)
        if self.profile.chi2_C == 0:
            return math.exp(float(np.sum(np.log1p(-b))))

        K = len(b) - 1
        last = float(b[-1])
        # Indices K+1..2 (if any) sit under the ceiling b_K
        head = float(np.sum(np.log1p(-b))) + max(0, 2 - K) * math.log1p(-last)
        # Beyond that, b_l <= min(b_K, majorant_l) and log(1 - x) >= -x / (1 - x)
        exponent = (self.profile.chi2_delta * self.schedule.beta + 1.0) / 2.0
        scale = float(b_majorant(self.profile, self.schedule.beta, 1.0))
        tail = scale * float(scipy.special.zeta(exponent, max(K + 1, 3)))
        return math.exp(head - tail / (1.0 - last))

    def tail_sums(self, starts) -> np.ndarray:
        """Certified upper bounds on ``sum_{j >= n} u_j`` for each ``n`` in ``starts``

        Uses ``sum_{j >= 0} u_j = 1 / prod (1 - b_k)``.
        """
        starts = np.asarray(starts, dtype=np.int64)
        if np.any(starts >= len(self.u)):
            raise exceptions.DomainError("Tail starts must lie within the computed range of u")

        total = np.longdouble(1) / np.longdouble(self.product_lower)
        partial = utils.prefix_sums(self.u)
        return np.maximum((total - partial[starts]).astype(float), 0.0)


def _check_theorem_condition(profile, beta):
    if not beta >= 1 or not beta * profile.chi2_delta > 1:
        raise exceptions.PreconditionError(
            f"The block coupling bound requires beta >= 1 and beta > 1/delta"
            f" (beta={beta}, delta={profile.chi2_delta})"
        )


def build_pipeline(
    profile: RegularityProfile,
    beta: float,
    N: int,
    K: Optional[int] = None,
    n_scan: int = DEFAULT_N_SCAN,
) -> BoundPipeline:
    """Assemble ``b``, ``f`` and ``u_0..u_N``

    Args:
        profile: Regularity of the potential.
        beta: Schedule exponent, with ``beta >= 1`` and ``beta > 1/delta``.
        N: Last index of ``u``.
        K: Last index of ``b`` (defaults to ``N``).
        n_scan: Block indices scanned per ``k`` in `b_seq`.
    """
    _check_theorem_condition(profile, beta)
    schedule = BlockSchedule(beta)
    b = b_seq(profile, schedule, max(K or N, N), n_scan=n_scan)
    f = f_seq(b)
    u = renewal_u(f, N)
    logger.debug("Pipeline built: sum f = %.12g, u_N = %.6g", float(f.sum()), float(u[-1]))
    return BoundPipeline(
        profile=profile,
        schedule=schedule,
        b=b,
        f=f,
        u=u,
        eps_floor=1.0 - _bret(profile, first=True),
    )


def theorem1_bound(profile: RegularityProfile, beta: float, N: int, n_scan=DEFAULT_N_SCAN):
    """``u_0..u_N``, a constant-free upper bound on ``P[X_n = 1]``"""
    return build_pipeline(profile, beta, N, n_scan=n_scan).u.astype(float)


def block_index(k, beta):
    """``n(k) = max(1, ceil(k^(1/beta) - 1))``, the block index used for coordinate ``k``"""
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise exceptions.DomainError("Coordinates start at 1")

    return np.maximum(1, np.ceil(k ** (1.0 / beta) * (1 - 1e-12) - 1)).astype(np.int64)


def corollary1_bound(profile: RegularityProfile, beta: float, k, pipeline=None):
    """Bound ``u_{n(k)}`` on the single-coordinate distance at coordinate ``k``"""
    idx = block_index(k, beta)
    pipeline = pipeline or build_pipeline(profile, beta, int(np.max(idx)))
    values = pipeline.u.astype(float)[idx]
    return float(values) if np.ndim(values) == 0 else values


def corollary2_bound(profile: RegularityProfile, beta: float, k, pipeline=None):
    """Bound ``sum_{j >= n(k)} u_j`` on the whole-future distance after coordinate ``k``"""
    idx = block_index(k, beta)
    if pipeline is None:
        N = int(np.max(idx))
        pipeline = build_pipeline(profile, beta, N, K=max(10 * N, 10_000))

    values = pipeline.tail_sums(idx)
    return float(values) if np.ndim(values) == 0 else values


def min_beta(delta):
    """Smallest admissible exponent: ``beta >= 1`` and ``beta > 1/delta``"""
    return 1.0 if delta > 1 else (1.0 / delta) * (1 + 1e-9)


def choose_beta(delta: float, delta_prime: float, target: str = "relaxation") -> float:
    """A schedule exponent reaching the rate ``delta_prime``

    ``target="relaxation"`` asks for ``(beta delta + 1) / (2 beta) >= delta'``
    and ``target="mixing"`` for ``(beta delta - 1) / (2 beta) >= delta' / 2``.
    The result also satisfies ``beta >= 1`` and ``beta > 1/delta``.
    """
    if not 0 < delta_prime < delta:
        raise exceptions.DomainError("delta_prime must lie in (0, delta)")

    floor = min_beta(delta)
    if target == "relaxation":
        # The rate decreases in beta, so the smallest admissible beta is best
        if (floor * delta + 1) / (2 * floor) < delta_prime:
            raise exceptions.DomainError(
                f"No schedule exponent reaches rate {delta_prime} for delta={delta}"
            )
        return floor
    elif target == "mixing":
        return max(floor, (1.0 / (delta - delta_prime)) * (1 + 1e-9))
    else:
        raise exceptions.DomainError(f'Unknown rate target "{target}"')


def theorem2_rate(delta: float, n, delta_prime: Optional[float] = None):
    """Correlation decay rate: ``n^-(1+delta)/2`` for ``delta > 1``, else ``n^-delta'``"""
    n = np.asarray(n, dtype=float)
    if delta > 1:
        return n ** (-(1.0 + delta) / 2.0)

    if delta_prime is None or not 0 < delta_prime < delta:
        raise exceptions.DomainError("delta <= 1 needs delta_prime in (0, delta)")

    return n ** (-delta_prime)


@dataclasses.dataclass(frozen=True)
class LemmaReport:
    name: str
    passed: bool
    worst_margin: float
    checked: int


def validate_hj1(deltas: Iterable[float], betas: Iterable[float], k_max=50, n_max=500):
    """Check that ``Delta_k^n`` does not increase in ``n`` over a grid

    The margin is the smallest relative decrease ``(D_n - D_{n+1}) / D_n``;
    the check passes when it is at least ``-1e-9``.
    """
    worst = math.inf
    checked = 0
    for delta in deltas:
        for beta in betas:
            ks = np.arange(3, k_max + 1, dtype=float)[:, None]
            ns = ks + np.arange(1, n_max + 1, dtype=float)[None, :]
            valid = ns <= n_max
            values = _delta_nk(delta, beta, ks, ns)
            rel = (values[:, :-1] - values[:, 1:]) / values[:, :-1]
            mask = valid[:, 1:]
            if mask.any():
                worst = min(worst, float(rel[mask].min()))
                checked += int(mask.sum())

    return LemmaReport("HJ1", worst >= -VALIDATOR_RTOL, worst, checked)


def validate_hj2(deltas: Iterable[float], betas: Iterable[float], k_max=10_000):
    """Check ``Delta_k^{k+1} <= hj2_majorant(k)`` for ``k = 3..k_max``

    The margin is the smallest ``1 - Delta / majorant``.
    """
    worst = math.inf
    checked = 0
    ks = np.arange(3, k_max + 1, dtype=float)
    for delta in deltas:
        for beta in betas:
            ratio = _delta_nk(delta, beta, ks, ks + 1) / hj2_majorant(delta, beta, ks)
            worst = min(worst, float(np.min(1.0 - ratio)))
            checked += len(ks)

    return LemmaReport("HJ2", worst >= -VALIDATOR_RTOL, worst, checked)


def _lemalg_sides(alpha, a, b):
    outer = np.log((b + 1.0) / a)
    inner = np.log(b / a)
    lhs = np.expm1(alpha * outer) / np.expm1(alpha * inner)
    rhs = np.expm1((alpha - 1.0) * outer) / np.expm1((alpha - 1.0) * inner)
    return lhs, rhs


def check_lemalg(alpha: float, a: float, b: float) -> bool:
    """``((b+1)^a - a^a)/(b^a - a^a) >= ((b+1)^(a-1) - a^(a-1))/(b^(a-1) - a^(a-1))``

    (exponent ``alpha``), for ``alpha > 1`` and ``0 < a < b``.
    """
    if not alpha > 1 or not 0 < a < b:
        raise exceptions.DomainError(
            f"check_lemalg needs alpha > 1 and 0 < a < b, got alpha={alpha}, a={a}, b={b}"
        )

    lhs, rhs = _lemalg_sides(alpha, a, b)
    return bool(lhs >= rhs * (1 - VALIDATOR_RTOL))


def validate_lemalg(samples: int, rng: np.random.Generator, alpha_max=5.0, b_max=100.0):
    """Check the algebraic inequality on random ``(alpha, a, b)``"""
    alpha = 1.0 + rng.random(samples) * (alpha_max - 1.0)
    alpha = np.where(alpha > 1.0, alpha, np.nextafter(1.0, 2.0))
    pair = np.sort(rng.random((samples, 2)) * b_max, axis=1)
    a = np.maximum(pair[:, 0], 1e-9)
    b = np.maximum(pair[:, 1], a * (1 + 1e-9))
    lhs, rhs = _lemalg_sides(alpha, a, b)
    margin = (lhs - rhs) / rhs
    worst = float(margin.min())
    return LemmaReport("Lemalg", worst >= -VALIDATOR_RTOL, worst, samples)


def fit_decay_slope(seq, n_range=None, index=None):
    """Least-squares slope of ``log seq`` against ``log n``

    Args:
        seq: Sequence values. ``seq[i]`` belongs to ``n = index[i]``, or to
            ``n = i`` when ``index`` is omitted.
        n_range: Optional ``(lo, hi)`` restricting the fit to ``lo <= n <= hi``.
        index: Optional explicit abscissae.

    Returns:
        tuple: ``(slope, r_squared)``.
    """
    seq = np.asarray(seq, dtype=float)
    n = np.arange(len(seq), dtype=float) if index is None else np.asarray(index, dtype=float)
    mask = np.ones(len(seq), dtype=bool)
    if n_range is not None:
        mask = (n >= n_range[0]) & (n <= n_range[1])

    values = seq[mask]
    points = n[mask]
    if len(values) < 2:
        raise exceptions.DomainError("A slope fit needs at least 2 points")
    if np.any(values <= 0) or np.any(points <= 0):
        raise exceptions.DomainError("A log-log fit needs positive values")

    fit = scipy.stats.linregress(np.log(points), np.log(values))
    return float(fit.slope), float(fit.rvalue**2)
