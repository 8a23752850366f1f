"""
Experiment configuration files

A config is a flat YAML mapping. Every value is rendered back to flow-style
YAML text and checked against a ``formaldict`` schema (choices, patterns,
required keys and model-dependent conditions). Valid values are then coerced
into an `ExperimentConfig`.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import pathlib
from typing import Any, Dict, List, Optional, Tuple

import formaldict
import numpy as np
import scipy.special
import yaml

from gmix import exceptions
from gmix.analysis import Observable
from gmix.potentials import (
    History,
    IIDModel,
    LongMemoryBinaryModel,
    MarkovModel,
    PoissonARModel,
    PotentialModel,
    RegularityProfile,
    make_history,
)

logger = logging.getLogger(__name__)

# The environment variable that overrides the configured seed
SEED_ENV_VAR = "GMIX_SEED"

KINDS = ("mixing", "correlations", "fclt", "chernoff", "poisson", "bounds", "validate-lemmas")
MODELS = ("iid", "markov", "long-memory", "poisson")
MODES = ("block-maximal", "coordinate-sequential")
FAMILIES = ("power", "geometric", "constant")

INT = r"^[0-9]+$"
FLOAT = r"^[-+]?([0-9]+(\.[0-9]*)?|\.[0-9]+)([eE][-+]?[0-9]+)?$"
BOOL = r"^(true|false)$"
LIST = r"^\[.*\]$"
SEQUENCE = r"^(\[.*\]|\{.*\})$"


def _key(label, value_type, help, required=False, model=None, choices=None):
    entry = {
        "label": label,
        "name": label.replace("_", " ").title(),
        "help": help,
        "type": "string",
        "required": required,
        "value_type": value_type,
    }
    if choices:
        entry["choices"] = list(choices)
    if model:
        entry["condition"] = ["==", "model", model]
    return entry


KEYS = [
    _key("kind", "str", "The experiment to run.", required=True, choices=KINDS),
    _key("seed", "int", "Root seed of every random stream.", required=True),
    _key("model", "str", "The built-in potential.", choices=MODELS),
    # Model parameters
    _key("probs", "floats", "Symbol law of the IID model.", model="iid"),
    _key("alphabet_size", "int", "Alphabet size of a uniform IID model.", model="iid"),
    _key("order", "int", "Order of the Markov model.", required=True, model="markov"),
    _key("table", "matrix", "Next-symbol law per context.", required=True, model="markov"),
    _key("eps0", "float", "Bias amplitude in (0, 1/2).", required=True, model="long-memory"),
    _key("delta", "float", "Weight decay exponent.", required=True, model="long-memory"),
    _key("k_max", "int", "Number of past symbols read.", required=True, model="long-memory"),
    _key("beta_seq", "sequence", "Autoregressive coefficients.", required=True, model="poisson"),
    _key("gamma_seq", "sequence", "Clipping thresholds.", required=True, model="poisson"),
    _key("cutoff", "int", "Number of autoregressive terms.", required=True, model="poisson"),
    _key("tail_mass_tol", "float", "Poisson mass left beyond the cap.", model="poisson"),
    _key("profile_delta", "float", "Exponent of the Poisson profile.", model="poisson"),
    # Profile overrides
    _key("chi2_C", "float", "Override of the chi-square profile constant."),
    _key("chi2_delta", "float", "Override of the chi-square profile exponent."),
    _key("bound_scale", "float", "Chi-square constant of a profile given without a model."),
    # Schedule and coupling
    _key("beta", "float", "Block schedule exponent."),
    _key("mode", "str", "Coupling construction.", choices=MODES),
    _key("max_block_states", "int", "Largest enumerated block outcome space."),
    # Sizes
    _key("n_blocks", "int", "Number of coupled blocks."),
    _key("replicates", "int", "Number of independent replicates."),
    _key("horizon", "int", "Last coordinate or last renewal index reported."),
    _key("k_list", "ints", "Coordinates or thresholds reported."),
    _key("lags", "ints", "Correlation lags."),
    _key("n_list", "ints", "Path lengths of the deviation experiment."),
    _key("n", "int", "Path length of the FCLT experiment."),
    _key("burn_in", "int", "Steps discarded before stationary sampling."),
    _key("path_len", "int", "Length of each correlation path."),
    _key("t", "float", "Deviation threshold."),
    _key("delta_prime", "float", "Target rate below delta."),
    _key("n_contexts", "int", "Random contexts searched by chi2_empirical."),
    _key("n_histories", "int", "Random histories of the normalization check."),
    _key("k_range", "ints", "Inclusive [lo, hi] range of k."),
    # Observables
    _key("f_table", "floats", "Table of the observable f."),
    _key("f_depth", "int", "Depth of f."),
    _key("fhat_table", "floats", "Table of the observable fhat."),
    _key("fhat_depth", "int", "Depth of fhat."),
    _key("h", "floats", "Table of the depth-1 observable h."),
    # Histories
    _key("past_y", "ints", "Recent symbols of the first past, most recent first."),
    _key("tail_y", "int", "Constant tail symbol of the first past."),
    _key("past_z", "ints", "Recent symbols of the second past, most recent first."),
    _key("tail_z", "int", "Constant tail symbol of the second past."),
    # Run
    _key("output_dir", "str", "Directory receiving the artifacts."),
    _key("threads", "int", "Worker threads for replicate chunks."),
    _key("self_check", "bool", "Exit with status 4 when an acceptance flag fails."),
    _key("chunk_size", "int", "Replicates simulated together."),
]

PATTERNS = {
    "int": INT,
    "float": FLOAT,
    "bool": BOOL,
    "floats": LIST,
    "ints": LIST,
    "matrix": LIST,
    "sequence": SEQUENCE,
}


def _load_config_schema():
    """The formaldict schema of experiment configs"""
    schema = []
    for entry in KEYS:
        entry = {key: value for key, value in entry.items() if key != "value_type"}
        pattern = PATTERNS.get(_value_type(entry["label"]))
        if pattern:
            entry["matches"] = pattern
        schema.append(entry)

    return formaldict.Schema(schema)


def _value_type(label):
    return next(entry["value_type"] for entry in KEYS if entry["label"] == label)


def _render(value) -> str:
    """Flow-style YAML text of a config value"""
    if isinstance(value, str):
        return value

    text = yaml.safe_dump(value, default_flow_style=True, width=2**31 - 1).strip()
    if text.endswith("\n..."):
        text = text[: -len("\n...")].strip()
    return text


def _coerce(label, text):
    value_type = _value_type(label)
    if value_type == "str":
        return text
    elif value_type == "int":
        return int(text)
    elif value_type == "float":
        return float(text)
    elif value_type == "bool":
        return text == "true"

    value = yaml.safe_load(text)
    if value_type == "sequence":
        return value if isinstance(value, dict) else [float(v) for v in value]
    elif value_type == "floats":
        return [float(v) for v in value]
    elif value_type == "ints":
        ints = [int(v) for v in value]
        if any(i != float(v) for i, v in zip(ints, value)):
            raise ValueError(f"{value} holds non-integers")
        return ints
    else:
        return [[float(v) for v in row] for row in value]


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment"""

    kind: str
    seed: int
    model: Optional[str] = None
    probs: Optional[List[float]] = None
    alphabet_size: Optional[int] = None
    order: Optional[int] = None
    table: Optional[List[List[float]]] = None
    eps0: Optional[float] = None
    delta: Optional[float] = None
    k_max: Optional[int] = None
    beta_seq: Any = None
    gamma_seq: Any = None
    cutoff: Optional[int] = None
    tail_mass_tol: float = 1e-12
    profile_delta: float = 1.0
    chi2_C: Optional[float] = None
    chi2_delta: Optional[float] = None
    bound_scale: float = 1.0
    beta: Optional[float] = None
    mode: str = "block-maximal"
    max_block_states: int = 1 << 20
    n_blocks: int = 20
    replicates: int = 1000
    horizon: Optional[int] = None
    k_list: Optional[List[int]] = None
    lags: List[int] = dataclasses.field(default_factory=lambda: list(range(1, 11)))
    n_list: List[int] = dataclasses.field(default_factory=lambda: [1000, 4000])
    n: int = 1000
    burn_in: int = 1000
    path_len: int = 10_000
    t: float = 0.05
    delta_prime: Optional[float] = None
    n_contexts: int = 1000
    n_histories: int = 1000
    k_range: List[int] = dataclasses.field(default_factory=lambda: [1, 100])
    f_table: Optional[List[float]] = None
    f_depth: int = 1
    fhat_table: Optional[List[float]] = None
    fhat_depth: int = 1
    h: Optional[List[float]] = None
    past_y: List[int] = dataclasses.field(default_factory=list)
    tail_y: int = 0
    past_z: List[int] = dataclasses.field(default_factory=list)
    tail_z: int = 1
    output_dir: str = "results"
    threads: int = 1
    self_check: bool = False
    chunk_size: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("bounds", "validate-lemmas") and self.model is None:
            raise exceptions.ConfigError(f'Experiments of kind "{self.kind}" need a model')
        if self.kind == "poisson" and self.model != "poisson":
            raise exceptions.ConfigError('Experiments of kind "poisson" need model: poisson')
        if self.kind == "bounds" and self.model is None and self.chi2_delta is None:
            raise exceptions.ConfigError("Bound experiments need a model or chi2_delta")
        if not self.bound_scale > 0:
            raise exceptions.ConfigError("bound_scale must be positive")
        if self.replicates < 1 or self.threads < 1:
            raise exceptions.ConfigError("replicates and threads must be at least 1")
        if self.beta is not None and self.beta < 1:
            raise exceptions.ConfigError(f"beta must be at least 1, got {self.beta}")
        if len(self.k_range) != 2 or not 0 <= self.k_range[0] <= self.k_range[1]:
            raise exceptions.ConfigError("k_range must be an increasing pair [lo, hi]")

    def with_overrides(self, **overrides) -> ExperimentConfig:
        """A copy with the non-``None`` overrides applied"""
        overrides = {key: value for key, value in overrides.items() if value is not None}
        return dataclasses.replace(self, **overrides) if overrides else self


def _seed_override(data):
    value = os.environ.get(SEED_ENV_VAR)
    if value is None:
        return data

    if not value.strip().isdigit():
        raise exceptions.ConfigError(
            f"{SEED_ENV_VAR} must be a nonnegative integer, got {value!r}"
        )

    logger.info("Seed overridden by %s=%s", SEED_ENV_VAR, value.strip())
    return {**data, "seed": int(value)}


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate and coerce a raw config mapping

    Raises:
        `ConfigError`: listing unknown keys or every schema failure.
    """
    if not isinstance(data, dict):
        raise exceptions.ConfigError("An experiment config must be a mapping of keys to values")

    known = {entry["label"] for entry in KEYS}
    unknown = sorted(set(data) - known)
    if unknown:
        raise exceptions.ConfigError(f"Unknown config keys: {', '.join(map(str, unknown))}")

    data = _seed_override(data)
    rendered = {key: _render(value) for key, value in data.items() if value is not None}
    parsed = _load_config_schema().parse(rendered)
    if not parsed.is_valid:
        raise exceptions.ConfigError(f"Invalid experiment config: {parsed.errors}")

    values = {}
    for label, text in parsed.data.items():
        try:
            values[label] = _coerce(label, text)
        except (TypeError, ValueError) as exc:
            raise exceptions.ConfigError(f'Invalid value for "{label}": {exc}') from exc

    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    """Load and validate an experiment config file"""
    try:
        with open(path, "r") as config_f:
            data = yaml.safe_load(config_f)
    except IOError as exc:
        raise exceptions.ConfigError(f'Cannot read experiment config "{path}"') from exc
    except yaml.YAMLError as exc:
        raise exceptions.ConfigError(f'Experiment config "{path}" is not valid YAML') from exc

    config = parse_config(data or {})
    logger.debug("Loaded %s experiment from %s", config.kind, pathlib.Path(path))
    return config


def expand_sequence(spec, length: int) -> np.ndarray:
    """The first ``length`` terms of an explicit list or a sequence family

    Families are ``{family: power, scale, exponent}`` (``scale * i**-exponent``),
    ``{family: geometric, scale, ratio}`` (``scale * ratio**i``) and
    ``{family: constant, value}``, indexed from ``i = 1``. ``sign: alternate``
    flips the sign of every even term.
    """
    if isinstance(spec, (list, tuple)):
        values = np.asarray(spec, dtype=float)
        if len(values) < length:
            raise exceptions.ConfigError(f"Sequence has {len(values)} terms, {length} needed")
        return values[:length]

    family = spec.get("family")
    i = np.arange(1, length + 1, dtype=float)
    try:
        if family == "power":
            values = float(spec.get("scale", 1.0)) * i ** -float(spec["exponent"])
        elif family == "geometric":
            values = float(spec.get("scale", 1.0)) * float(spec["ratio"]) ** i
        elif family == "constant":
            values = np.full(length, float(spec["value"]))
        else:
            raise exceptions.ConfigError(
                f"Sequence family must be one of {', '.join(FAMILIES)}, got {family!r}"
            )
    except KeyError as exc:
        raise exceptions.ConfigError(f"Sequence family {family} needs {exc}") from exc

    if spec.get("sign") == "alternate":
        values = values * np.where(i % 2 == 0, -1.0, 1.0)
    return values


def truncation_tail(beta_spec, gamma_spec, cutoff: int) -> float:
    """``sum_{i > cutoff} |beta_i| gamma_i`` of the untruncated sequences

    Closed forms exist for power and geometric ``beta`` families with a
    constant ``gamma``. Explicit lists are finite and leave no tail.
    """
    if not isinstance(beta_spec, dict) or not isinstance(gamma_spec, dict):
        return 0.0
    if gamma_spec.get("family") != "constant":
        logger.debug("No closed-form truncation tail for a non-constant gamma family")
        return 0.0

    gamma = abs(float(gamma_spec["value"]))
    scale = abs(float(beta_spec.get("scale", 1.0)))
    if beta_spec.get("family") == "power":
        exponent = float(beta_spec["exponent"])
        if exponent <= 1:
            return math.inf
        return gamma * scale * float(scipy.special.zeta(exponent, cutoff + 1))
    elif beta_spec.get("family") == "geometric":
        ratio = abs(float(beta_spec["ratio"]))
        if ratio >= 1:
            return math.inf
        return gamma * scale * ratio ** (cutoff + 1) / (1.0 - ratio)

    return math.inf if float(beta_spec.get("value", 0.0)) and gamma else 0.0


def chi2_exponent(beta_spec, gamma_spec) -> Optional[float]:
    """The power ``2 alpha - 2`` with which ``chi2_k`` decays, when known

    Only a power ``beta`` family of exponent ``alpha > 1`` with a constant
    nonzero ``gamma`` has one.
    """
    if not isinstance(beta_spec, dict) or not isinstance(gamma_spec, dict):
        return None
    if beta_spec.get("family") != "power" or gamma_spec.get("family") != "constant":
        return None
    if not float(gamma_spec.get("value", 0.0)) or not float(beta_spec.get("scale", 1.0)):
        return None

    exponent = float(beta_spec["exponent"])
    return 2.0 * exponent - 2.0 if exponent > 1 else None


def build_model(config: ExperimentConfig) -> PotentialModel:
    """The potential described by ``config``"""
    try:
        if config.model == "iid":
            if config.probs is not None:
                return IIDModel(tuple(config.probs))
            if config.alphabet_size is None:
                raise exceptions.ConfigError("The IID model needs probs or alphabet_size")
            size = config.alphabet_size
            return IIDModel(tuple([1.0 / size] * size))
        elif config.model == "markov":
            return MarkovModel(config.order, tuple(tuple(row) for row in config.table))
        elif config.model == "long-memory":
            return LongMemoryBinaryModel(config.eps0, config.delta, config.k_max)
        elif config.model == "poisson":
            gammas = expand_sequence(config.gamma_seq, config.cutoff)
            return PoissonARModel(
                beta_seq=tuple(expand_sequence(config.beta_seq, config.cutoff).tolist()),
                gamma_seq=tuple(int(round(g)) for g in gammas),
                cutoff=config.cutoff,
                tail_mass_tol=config.tail_mass_tol,
                delta=config.profile_delta,
                truncation_tail=truncation_tail(config.beta_seq, config.gamma_seq, config.cutoff),
            )
    except exceptions.DomainError as exc:
        raise exceptions.ConfigError(f"Invalid {config.model} model: {exc}") from exc

    raise exceptions.ConfigError("No model configured")


def build_profile(
    config: ExperimentConfig, model: Optional[PotentialModel] = None
) -> RegularityProfile:
    """The model's regularity profile, or the configured override

    Without a model the constant defaults to ``bound_scale``.
    """
    chi2_C = config.chi2_C
    if chi2_C is None and model is None:
        chi2_C = config.bound_scale
    try:
        if chi2_C is not None:
            delta = config.chi2_delta or model.default_delta
            return RegularityProfile(
                chi2_C=chi2_C,
                chi2_delta=delta,
                chi2_zero=model.chi2_upper(0) if model else None,
            )

        profile = model.regularity
        if config.chi2_delta is not None:
            profile = RegularityProfile.from_sequences(
                profile.explicit_chi2,
                profile.explicit_var,
                config.chi2_delta,
                chi2_zero=profile.chi2_zero,
            )
        return profile
    except exceptions.DomainError as exc:
        raise exceptions.ConfigError(f"Invalid regularity profile: {exc}") from exc


def build_histories(config: ExperimentConfig, model: PotentialModel) -> Tuple[History, History]:
    try:
        return (
            make_history(config.past_y, config.tail_y, model.alphabet),
            make_history(config.past_z, config.tail_z, model.alphabet),
        )
    except exceptions.DomainError as exc:
        raise exceptions.ConfigError(f"Invalid past: {exc}") from exc


def _indicator(size):
    table = np.zeros(size)
    table[min(1, size - 1)] = 1.0
    return table


def build_observables(config: ExperimentConfig, model: PotentialModel):
    """``f``, ``fhat`` and ``h``

    ``f`` and ``fhat`` default to the indicator of symbol 1, ``h`` to ``+-1``
    on a binary alphabet and to the symbol value otherwise.
    """
    size = model.support_size
    try:
        f = Observable(
            config.f_depth,
            config.f_table if config.f_table is not None else _indicator(size),
        )
        fhat = Observable(
            config.fhat_depth,
            config.fhat_table if config.fhat_table is not None else _indicator(size),
        )
        if config.h is not None:
            h = Observable(1, config.h)
        else:
            h = Observable(1, [-1.0, 1.0] if size == 2 else np.arange(size, dtype=float))
    except exceptions.DomainError as exc:
        raise exceptions.ConfigError(f"Invalid observable: {exc}") from exc

    return f, fhat, h
