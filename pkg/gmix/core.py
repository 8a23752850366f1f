"""
The core gmix API: running experiments and writing their artifacts

Every experiment writes three artifacts to its output directory:

* ``results.csv``: one row per estimate, with a fixed column order per kind
  that always ends with the ``seed,replicates,mode`` provenance columns.
* ``summary.json``: fitted slopes, derived constants and acceptance flags.
* ``plotdata/*.tsv``: ``x``, ``y`` and ``envelope`` columns for plotting.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import pathlib
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gmix import analysis, coupling, exceptions, oracle, potentials, renewal, utils
from gmix.config import (
    ExperimentConfig,
    build_histories,
    build_model,
    build_observables,
    build_profile,
    chi2_exponent,
)
from gmix.simulator import RngStream

logger = logging.getLogger(__name__)

PROVENANCE = ("seed", "replicates", "mode")
# Statistical comparisons allow this many standard errors
SE_MULTIPLIER = 3.0
ABS_TOL = 1e-12
KS_TOLERANCE = 0.05
VARIANCE_RTOL = 0.10
SLOPE_TOL = 0.10
# Largest tail slack, relative to the smallest corollary 2 bound, for a slope check
TAIL_SLACK_RTOL = 0.01
CORRELATION_SLOPE_TOL = 0.25
NORMALIZATION_TOL = 1e-9
POISSON_SLOPE_TOL = 0.15
LEMALG_SAMPLES = 10_000
LEMMA_DELTAS = (0.5, 0.8, 1.0, 1.5, 2.0, 3.0)
LEMMA_BETAS = (1.0, 1.5, 2.0, 3.0, 4.0)
GRID_POINTS = 30


@dataclasses.dataclass
class ExperimentResult:
    """Rows, summary and plot data of one experiment"""

    kind: str
    columns: Tuple[str, ...]
    rows: List[Tuple[Any, ...]]
    summary: Dict[str, Any]
    plots: Dict[str, List[Tuple[Any, Any, Any]]] = dataclasses.field(default_factory=dict)
    flags: Dict[str, bool] = dataclasses.field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """``True`` when no acceptance flag failed"""
        return all(self.flags.values())


def _tolerance(se, reference=None, replicates=None):
    """``3`` standard errors, taking the larger of the estimate's and the reference's"""
    se = np.asarray(se, dtype=float)
    if reference is not None and replicates:
        ref = np.clip(np.asarray(reference, dtype=float), 0.0, 1.0)
        se = np.maximum(se, utils.bernoulli_se(ref, replicates))
    return SE_MULTIPLIER * se + ABS_TOL


def _combine(*checks):
    """Combine optional checks; ``None`` when none applies"""
    applied = [bool(check) for check in checks if check is not None]
    return all(applied) if applied else None


def _aggregate(flags, name, values):
    values = [value for value in values if value is not None]
    if values:
        flags[name] = all(values)


def _optional(func, *errors, what):
    """Run ``func``, logging a warning and returning ``None`` on ``errors``"""
    try:
        return func()
    except errors as exc:
        logger.warning("Skipping %s: %s", what, exc)
        return None


def _geometric_grid(lo, hi, points=GRID_POINTS):
    lo, hi = max(int(lo), 1), max(int(hi), 1)
    return sorted(set(np.round(np.geomspace(lo, hi, points)).astype(np.int64).tolist()))


def _slope(values, index, what):
    values = np.asarray(values, dtype=float)
    index = np.asarray(index, dtype=float)
    keep = (values > 0) & (index > 0)
    return _optional(
        lambda: renewal.fit_decay_slope(values[keep], index=index[keep])[0],
        exceptions.DomainError,
        what=f"{what} slope",
    )


def _choose_schedule(config, profile):
    if config.beta is not None:
        return coupling.BlockSchedule(config.beta)
    if config.delta_prime is not None:
        beta = renewal.choose_beta(profile.chi2_delta, config.delta_prime)
    else:
        beta = renewal.min_beta(profile.chi2_delta)
    logger.info("Using schedule exponent beta=%.6g", beta)
    return coupling.BlockSchedule(beta)


def _attains_tv(model, schedule, mode) -> bool:
    """Whether the coupling's disagreement probability equals the marginal distance

    Stepwise maximal couplings are optimal for IID symbols and for binary
    first-order chains.
    """
    if isinstance(mode, coupling.CoordinateSequential) or schedule.beta != 1:
        return False
    if isinstance(model, potentials.IIDModel):
        return True

    return (
        isinstance(model, potentials.MarkovModel)
        and model.order <= 1
        and model.alphabet.size == 2
    )


def _mixing(config: ExperimentConfig, rng: RngStream, threads: int) -> ExperimentResult:
    model = build_model(config)
    profile = build_profile(config, model)
    y, z = build_histories(config, model)
    schedule = _choose_schedule(config, profile)
    mode = coupling.mode_from_name(config.mode, config.max_block_states)
    n_blocks = config.n_blocks
    last_coord = schedule.boundary(n_blocks + 1) - 1
    coords = np.arange(1, min(config.horizon or last_coord, last_coord) + 1)
    ks = config.k_list or [int(b) for b in schedule.boundaries(n_blocks)[:-1]]
    ks = sorted(k for k in set(ks) if 1 <= k <= last_coord)

    tally = coupling.simulate_coupling(
        model, y, z, n_blocks, config.replicates, schedule, mode, rng, threads, config.chunk_size
    )
    px, L, tail = tally.px(), tally.coordinates(coords), tally.meeting_tail(ks)

    diagnostic = isinstance(mode, coupling.CoordinateSequential)
    two_sided = _attains_tv(model, schedule, mode)
    oracle_px = None
    if not diagnostic:
        oracle_px = _optional(
            lambda: oracle.exact_block_coupling_fail(model, y, z, schedule, n_blocks),
            exceptions.CapacityError,
            exceptions.DomainError,
            what="the block coupling oracle",
        )
    oracle_L = _optional(
        lambda: np.array([oracle.exact_tv_coordinate(model, y, z, int(k)) for k in coords]),
        exceptions.CapacityError,
        exceptions.DomainError,
        what="the coordinate distance oracle",
    )
    pipeline = _optional(
        lambda: renewal.build_pipeline(
            profile, schedule.beta, n_blocks, K=max(10 * n_blocks, 10_000)
        ),
        exceptions.PreconditionError,
        exceptions.PipelineError,
        what="the renewal bounds",
    )

    bound_px = bound_L = bound_M = None
    if pipeline is not None:
        bound_px = pipeline.u.astype(float)[1:]
        bound_L = np.atleast_1d(renewal.corollary1_bound(profile, schedule.beta, coords, pipeline))
        if ks:
            bound_M = np.atleast_1d(renewal.corollary2_bound(profile, schedule.beta, ks, pipeline))

    rows, flags = [], {}
    checks = {"px_oracle": [], "px_bound": [], "L_oracle": [], "L_bound": [], "M_bound": []}
    series = [
        ("px", px, oracle_px, bound_px, "px"),
        ("L", L, oracle_L, bound_L, "L"),
        ("M_tail", tail, None, bound_M, "M"),
    ]
    plots = {}
    for quantity, est, exact, bound, key in series:
        points = []
        for i, (index, mean, se) in enumerate(zip(est.index, est.mean, est.se)):
            ref = None if exact is None else float(exact[i])
            cap = None if bound is None else float(bound[i])
            oracle_check = bound_check = None
            if ref is not None:
                tol = _tolerance(se, ref, config.replicates)
                if quantity == "px" or two_sided:
                    oracle_check = abs(mean - ref) <= tol
                else:
                    # Coordinate disagreement only bounds the marginal distance from above
                    oracle_check = mean + tol >= ref
            if cap is not None and not diagnostic:
                bound_check = mean <= cap + _tolerance(se, cap, config.replicates)
            if f"{key}_oracle" in checks:
                checks[f"{key}_oracle"].append(oracle_check)
            checks[f"{key}_bound"].append(bound_check)
            rows.append(
                (quantity, int(index), mean, se, ref, cap, _combine(oracle_check, bound_check))
            )
            points.append((int(index), mean, cap))
        plots[f"mixing_{quantity}"] = points

    for name, values in checks.items():
        _aggregate(flags, name, values)

    summary = {
        "beta": schedule.beta,
        "n_blocks": n_blocks,
        "profile": {"chi2_C": profile.chi2_C, "chi2_delta": profile.chi2_delta},
        "censored_share": float(tally.censored.mean()),
        "L_two_sided": two_sided,
        "coordinates": int(last_coord),
        "slopes": {
            "px": _slope(px.mean, px.index, "P[X_n = 1]"),
            "L": _slope(L.mean, L.index, "L(k)"),
        },
        "product_lower": None if pipeline is None else pipeline.product_lower,
    }
    return ExperimentResult(
        kind="mixing",
        columns=("quantity", "index", "estimate", "se", "oracle", "bound", "flag"),
        rows=rows,
        summary=summary,
        plots=plots,
        flags=flags,
    )


def _correlations(config: ExperimentConfig, rng: RngStream, threads: int) -> ExperimentResult:
    model = build_model(config)
    f, fhat, _ = build_observables(config, model)
    estimates = analysis.correlation_decay(
        model,
        f,
        fhat,
        config.lags,
        config.burn_in,
        config.path_len,
        config.replicates,
        rng,
        threads=threads,
        chunk_size=config.chunk_size,
    )
    exact = None
    if model.alphabet.is_finite:
        exact = _optional(
            lambda: [oracle.exact_correlation(model, f, fhat, est.n) for est in estimates],
            exceptions.CapacityError,
            what="the correlation oracle",
        )
    envelope = analysis.correlation_envelope(model, fhat, estimates, config.delta_prime)

    rows, matches, points = [], [], []
    for i, est in enumerate(estimates):
        ref = None if exact is None else exact[i]
        env = None if envelope is None or np.isnan(envelope[i]) else float(envelope[i])
        match = None if ref is None else abs(est.rho_hat - ref) <= _tolerance(est.se)
        matches.append(match)
        rows.append((est.n, est.rho_hat, est.se, ref, env, match))
        points.append((est.n, abs(est.rho_hat), env))

    flags = {}
    _aggregate(flags, "oracle", matches)
    slope = _optional(
        lambda: analysis.resolvable_slope(estimates)[0],
        exceptions.DomainError,
        what="the correlation slope",
    )
    delta = model.regularity.chi2_delta
    theory = None
    if delta > 1:
        theory = -(1.0 + delta) / 2.0
    elif config.delta_prime is not None:
        theory = -config.delta_prime
    if slope is not None and theory is not None and model.memory_order > 0:
        flags["slope"] = slope <= theory + CORRELATION_SLOPE_TOL

    seminorm = _optional(
        lambda: analysis.seminorm_phi(fhat, model),
        exceptions.SeminormError,
        what="the seminorm",
    )
    summary = {
        "slope": slope,
        "theory_exponent": theory,
        "seminorm": seminorm,
        "path_len": config.path_len,
        "burn_in": config.burn_in,
    }
    return ExperimentResult(
        kind="correlations",
        columns=("lag", "estimate", "se", "oracle", "envelope", "flag"),
        rows=rows,
        summary=summary,
        plots={"correlations": points},
        flags=flags,
    )


def _stationary_center(model, h):
    """Exact stationary mean of ``h`` when the context chain is small enough"""
    if not model.alphabet.is_finite:
        return None

    law = _optional(
        lambda: oracle.exact_stationary(model, order=max(model.reach, 1)),
        exceptions.CapacityError,
        what="exact centre",
    )
    if law is None:
        return None

    return float(law.symbol_marginal(model.alphabet.size) @ h.table)


def _fclt(config: ExperimentConfig, rng: RngStream, threads: int) -> ExperimentResult:
    model = build_model(config)
    _, _, h = build_observables(config, model)
    result = analysis.fclt_paths(
        model,
        h,
        config.n,
        config.replicates,
        config.burn_in,
        rng,
        center=_stationary_center(model, h),
        threads=threads,
        chunk_size=config.chunk_size,
    )
    means, ses = utils.mean_and_se(result.samples)
    ratios = result.variance_ratio()
    rows, checks, points = [], [], []
    for t, mean, se, ratio in zip(result.grid, means, ses, ratios):
        check = bool(abs(mean) <= _tolerance(se) and abs(ratio - 1.0) <= VARIANCE_RTOL)
        checks.append(check)
        rows.append((float(t), float(mean), float(se), float(ratio), check))
        points.append((float(t), float(ratio), 1.0))

    ks = result.ks()
    flags = {"grid": all(checks), "ks": ks <= KS_TOLERANCE}
    summary = {"ks": ks, "sigma": result.sigma, "center": result.center, "n": config.n}
    return ExperimentResult(
        kind="fclt",
        columns=("t", "mean", "se", "variance_ratio", "flag"),
        rows=rows,
        summary=summary,
        plots={"fclt": points},
        flags=flags,
    )


def _iid_reference(model, h):
    """Exact mean of ``h`` and exact deviation law for binary IID models"""
    if not isinstance(model, potentials.IIDModel):
        return None, None

    probs = np.asarray(model.probs, dtype=float)
    center = float(probs @ h.table)
    if len(probs) != 2 or h.range() == 0:
        return center, None

    def deviation(n, t):
        return oracle.exact_iid_deviation(float(probs[1]), n, 2.0 * t / h.range())

    return center, deviation


def _chernoff(config: ExperimentConfig, rng: RngStream, threads: int) -> ExperimentResult:
    model = build_model(config)
    _, _, h = build_observables(config, model)
    center, deviation = _iid_reference(model, h)
    n_list = sorted(set(config.n_list))
    estimates = analysis.chernoff_deviation(
        model,
        h,
        n_list,
        config.t,
        config.replicates,
        config.burn_in,
        rng,
        center=center,
        threads=threads,
        chunk_size=config.chunk_size,
    )
    rows, checks, points = [], [], []
    previous = None
    for est in estimates:
        ref = None if deviation is None else deviation(est.n, config.t)
        if config.t > h.range():
            check = est.probability == 0
        elif ref is not None:
            check = abs(est.probability - ref) <= _tolerance(est.se, ref, config.replicates)
        elif previous is not None:
            slack = SE_MULTIPLIER * math.hypot(est.se, previous.se) + ABS_TOL
            check = est.probability <= previous.probability + slack
        else:
            check = None
        checks.append(check)
        rows.append((est.n, est.probability, est.se, ref, check))
        points.append((est.n, est.probability, ref))
        previous = est

    flags = {}
    _aggregate(flags, "deviation", checks)
    summary = {"t": config.t, "range": h.range(), "center": center}
    return ExperimentResult(
        kind="chernoff",
        columns=("n", "probability", "se", "oracle", "flag"),
        rows=rows,
        summary=summary,
        plots={"chernoff": points},
        flags=flags,
    )


def _poisson(config: ExperimentConfig, rng: RngStream, threads: int) -> ExperimentResult:
    model = build_model(config)
    lo, hi = config.k_range
    ks = ([0] if lo == 0 else []) + _geometric_grid(lo, hi)
    gen = rng.child(1).generator()
    rows, checks, points = [], [], []
    uppers = []
    for k in ks:
        upper = potentials.chi2_upper(model, k)
        empirical = potentials.chi2_empirical(model, k, config.n_contexts, gen)
        var = potentials.var_upper(model, k, kind="kernel")
        check = empirical <= upper * (1 + 1e-9) + ABS_TOL
        checks.append(check)
        uppers.append(upper)
        rows.append((k, upper, empirical, var, check))
        points.append((k, empirical, upper))

    normalization = potentials.max_normalization_error(
        model, config.n_histories, rng.child(2).generator()
    )
    slope = _slope(uppers, ks, "chi2")
    exponent = chi2_exponent(config.beta_seq, config.gamma_seq)
    flags = {"empirical": all(checks), "normalization": normalization <= NORMALIZATION_TOL}
    if exponent is not None and slope is not None:
        flags["chi2_slope"] = abs(slope + exponent) <= POISSON_SLOPE_TOL
    summary = {
        "chi2_slope": slope,
        "chi2_theory_slope": None if exponent is None else -exponent,
        "normalization_error": normalization,
        "n_histories": config.n_histories,
        "support_size": model.support_size,
        "strength": model.strength,
        "truncation_tail": model.truncation_tail,
        "truncation_variation": model.truncation_variation(),
    }
    return ExperimentResult(
        kind="poisson",
        columns=("k", "chi2_upper", "chi2_empirical", "var_kernel", "flag"),
        rows=rows,
        summary=summary,
        plots={"poisson_chi2": points},
        flags=flags,
    )


def _bounds(config: ExperimentConfig, rng: RngStream, threads: int) -> ExperimentResult:
    model = build_model(config) if config.model else None
    profile = build_profile(config, model)
    N = config.horizon or 1000
    try:
        schedule = _choose_schedule(config, profile)
        pipeline = renewal.build_pipeline(profile, schedule.beta, N, K=max(10 * N, 10_000))
    except (exceptions.PreconditionError, exceptions.DomainError) as exc:
        raise exceptions.ConfigError(str(exc)) from exc

    beta, delta = schedule.beta, profile.chi2_delta
    # Coordinates up to 2**beta all map to block 1
    ks = config.k_list or _geometric_grid(int(2**beta) + 1, max(N, 2) ** beta)
    ks = [k for k in ks if renewal.block_index(k, beta) <= N]
    cor1 = np.atleast_1d(renewal.corollary1_bound(profile, beta, ks, pipeline)) if ks else []
    cor2 = np.atleast_1d(renewal.corollary2_bound(profile, beta, ks, pipeline)) if ks else []

    b = np.asarray(pipeline.b, dtype=float)
    f = np.asarray(pipeline.f, dtype=float)
    u = np.asarray(pipeline.u, dtype=float)
    rows = [("b", k, b[k]) for k in range(N + 1)]
    rows += [("f", i, f[i]) for i in range(1, N + 1)]
    rows += [("u", n, u[n]) for n in range(1, N + 1)]
    rows += [("corollary1", k, v) for k, v in zip(ks, cor1)]
    rows += [("corollary2", k, v) for k, v in zip(ks, cor2)]

    ns = np.arange(1, N + 1)
    fit_lo = max(1, N // 100)
    slopes = {
        "u": _slope(u[fit_lo:], ns[fit_lo - 1 :], "u_n"),
        "b": _slope(b[max(3, fit_lo) : N + 1], np.arange(max(3, fit_lo), N + 1), "b_k"),
        "corollary1": _slope(cor1, ks, "corollary 1"),
        "corollary2": _slope(cor2, ks, "corollary 2"),
    }
    theory = {
        "u": -(beta * delta + 1.0) / 2.0,
        "b": -(beta * delta + 1.0) / 2.0,
        "corollary1": -(beta * delta + 1.0) / (2.0 * beta),
        "corollary2": -(beta * delta - 1.0) / (2.0 * beta),
    }
    # Part of the certified total that comes from the majorant beyond b_K
    head_total = float(np.exp(-np.sum(np.log1p(-np.asarray(pipeline.b, dtype=np.longdouble)))))
    slack = max(1.0 / pipeline.product_lower - head_total, 0.0)
    flagged = ["u", "corollary1"]
    if len(cor2) and slack <= TAIL_SLACK_RTOL * float(np.min(cor2)):
        flagged.append("corollary2")
    flags = {
        f"{name}_slope": slopes[name] <= theory[name] + SLOPE_TOL
        for name in flagged
        if slopes[name] is not None
    }
    summary = {
        "beta": beta,
        "profile": {"chi2_C": profile.chi2_C, "chi2_delta": delta},
        "bound_scale": config.bound_scale if model is None and config.chi2_C is None else None,
        "product_lower": pipeline.product_lower,
        "renewal_mass": float(np.sum(pipeline.f)),
        "tail_slack": slack,
        "slopes": slopes,
        "theory_exponents": theory,
    }
    plots = {
        "bounds_u": [(n, u[n], None) for n in range(1, N + 1)],
        "bounds_corollaries": [(k, v1, v2) for k, v1, v2 in zip(ks, cor1, cor2)],
    }
    return ExperimentResult(
        kind="bounds",
        columns=("quantity", "index", "value"),
        rows=rows,
        summary=summary,
        plots=plots,
        flags=flags,
    )


def _lemma_reports(rng: RngStream):
    pairs = [(d, b) for d in LEMMA_DELTAS for b in LEMMA_BETAS if b * d > 1]
    hj1 = [renewal.validate_hj1([d], [b]) for d, b in pairs]
    hj2 = [renewal.validate_hj2([d], [b]) for d, b in pairs]
    merged = [
        renewal.LemmaReport(
            name=reports[0].name,
            passed=all(r.passed for r in reports),
            worst_margin=min(r.worst_margin for r in reports),
            checked=sum(r.checked for r in reports),
        )
        for reports in (hj1, hj2)
    ]
    lemalg = renewal.validate_lemalg(LEMALG_SAMPLES, rng.child(1).generator())
    return [lemalg] + merged


def _validate_lemmas(config: ExperimentConfig, rng: RngStream, threads: int) -> ExperimentResult:
    reports = _lemma_reports(rng)
    rows = [(r.name, r.passed, r.worst_margin, r.checked) for r in reports]
    flags = {r.name: r.passed for r in reports}
    summary = {"lemmas": {r.name: {"passed": r.passed, "checked": r.checked} for r in reports}}
    return ExperimentResult(
        kind="validate-lemmas",
        columns=("lemma", "passed", "worst_margin", "checked"),
        rows=rows,
        summary=summary,
        flags=flags,
    )


RUNNERS = {
    "mixing": _mixing,
    "correlations": _correlations,
    "fclt": _fclt,
    "chernoff": _chernoff,
    "poisson": _poisson,
    "bounds": _bounds,
    "validate-lemmas": _validate_lemmas,
}


def _cell(value):
    if value is None:
        return ""
    elif isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    elif isinstance(value, (int, np.integer)):
        return str(int(value))
    elif isinstance(value, (float, np.floating)):
        return utils.format_float(value)
    else:
        return str(value)


def _write_table(path: pathlib.Path, columns: Sequence[str], rows, delimiter=","):
    with open(path, "w", newline="") as table_f:
        writer = csv.writer(table_f, delimiter=delimiter, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(value) for value in row])


def _jsonable(value):
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    elif isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(item) for item in value]
    elif isinstance(value, (bool, np.bool_)):
        return bool(value)
    elif isinstance(value, (int, np.integer)):
        return int(value)
    elif isinstance(value, (float, np.floating)):
        # JSON has no infinities or NaN
        return float(value) if math.isfinite(value) else str(float(value))
    else:
        return value


def write_artifacts(result: ExperimentResult, config: ExperimentConfig, out) -> pathlib.Path:
    """Write ``results.csv``, ``summary.json`` and ``plotdata/*.tsv`` under ``out``"""
    out = pathlib.Path(out)
    plot_dir = out / "plotdata"
    plot_dir.mkdir(parents=True, exist_ok=True)

    provenance = (config.seed, config.replicates, config.mode)
    _write_table(
        out / "results.csv",
        result.columns + PROVENANCE,
        [tuple(row) + provenance for row in result.rows],
    )

    summary = {
        "kind": result.kind,
        "seed": config.seed,
        "replicates": config.replicates,
        "mode": config.mode,
        **result.summary,
        "flags": result.flags,
        "passed": result.passed,
    }
    with open(out / "summary.json", "w", newline="\n") as summary_f:
        json.dump(_jsonable(summary), summary_f, indent=2, sort_keys=True)
        summary_f.write("\n")

    for name, points in result.plots.items():
        _write_table(plot_dir / f"{name}.tsv", ("x", "y", "envelope"), points, delimiter="\t")

    logger.info("Wrote artifacts for %s to %s", result.kind, out)
    return out


def run(
    config: ExperimentConfig, out: Optional[str] = None, threads: Optional[int] = None
) -> Tuple[ExperimentResult, pathlib.Path]:
    """Run an experiment and write its artifacts

    Args:
        config: The validated experiment.
        out: Output directory, overriding ``config.output_dir``.
        threads: Worker threads, overriding ``config.threads``.

    Returns:
        The result and the directory holding the artifacts.
    """
    config = config.with_overrides(output_dir=out, threads=threads)
    logger.info("Running %s experiment (seed=%d)", config.kind, config.seed)
    result = RUNNERS[config.kind](config, RngStream(config.seed), config.threads)
    path = write_artifacts(result, config, config.output_dir)
    if not result.passed:
        failed = sorted(name for name, ok in result.flags.items() if not ok)
        logger.warning("Acceptance flags failed: %s", ", ".join(failed))
    return result, path
