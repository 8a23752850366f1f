"""Tests the gmix.config module"""

import math
import pathlib
from contextlib import ExitStack as does_not_raise

import numpy as np
import pytest

from gmix import config, exceptions, potentials

MARKOV = {
    "kind": "mixing",
    "seed": 1,
    "model": "markov",
    "order": 1,
    "table": [[0.9, 0.1], [0.2, 0.8]],
}


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv(config.SEED_ENV_VAR, raising=False)


def test_parse_config_defaults():
    """Tests config.parse_config() on a minimal Markov config"""
    experiment = config.parse_config(MARKOV)

    assert experiment.kind == "mixing"
    assert experiment.seed == 1
    assert experiment.table == [[0.9, 0.1], [0.2, 0.8]]
    assert experiment.mode == "block-maximal"
    assert experiment.replicates == 1000
    assert experiment.lags == list(range(1, 11))
    assert experiment.self_check is False


def test_parse_config_coerces_types():
    """Scalars, lists and sequence families come back typed"""
    experiment = config.parse_config(
        {
            "kind": "poisson",
            "seed": 0,
            "model": "poisson",
            "beta_seq": {"family": "power", "exponent": 1.75, "sign": "alternate"},
            "gamma_seq": [1, 1, 2],
            "cutoff": 3,
            "tail_mass_tol": 1e-10,
            "k_range": [1, 3],
            "self_check": True,
        }
    )

    assert experiment.beta_seq == {"family": "power", "exponent": 1.75, "sign": "alternate"}
    assert experiment.gamma_seq == [1.0, 1.0, 2.0]
    assert experiment.tail_mass_tol == 1e-10
    assert experiment.k_range == [1, 3]
    assert experiment.self_check is True


@pytest.mark.parametrize(
    "changes, expected_exception",
    [
        ({}, does_not_raise()),
        ({"colour": "red"}, pytest.raises(exceptions.ConfigError, match="Unknown config keys")),
        ({"kind": "mixinq"}, pytest.raises(exceptions.ConfigError)),
        ({"seed": -1}, pytest.raises(exceptions.ConfigError)),
        ({"seed": None}, pytest.raises(exceptions.ConfigError)),
        ({"table": None}, pytest.raises(exceptions.ConfigError)),
        ({"replicates": "many"}, pytest.raises(exceptions.ConfigError)),
        ({"replicates": 0}, pytest.raises(exceptions.ConfigError)),
        ({"mode": "greedy"}, pytest.raises(exceptions.ConfigError)),
        ({"beta": 0.5}, pytest.raises(exceptions.ConfigError)),
        ({"k_range": [5, 1]}, pytest.raises(exceptions.ConfigError)),
        ({"lags": [1, 2.5]}, pytest.raises(exceptions.ConfigError)),
        ({"model": None}, pytest.raises(exceptions.ConfigError)),
        ({"kind": "poisson"}, pytest.raises(exceptions.ConfigError)),
    ],
)
def test_parse_config_validation(changes, expected_exception):
    """Tests config.parse_config() rejections"""
    data = {**MARKOV, **changes}

    with expected_exception:
        config.parse_config(data)


def test_parse_config_not_mapping():
    with pytest.raises(exceptions.ConfigError, match="mapping"):
        config.parse_config([1, 2])


def test_bounds_without_model():
    """Bound experiments run from a profile override alone"""
    experiment = config.parse_config(
        {"kind": "bounds", "seed": 0, "chi2_C": 1.0, "chi2_delta": 1.5, "beta": 1.0}
    )

    assert experiment.model is None
    with pytest.raises(exceptions.ConfigError, match="chi2_delta"):
        config.parse_config({"kind": "bounds", "seed": 0})


@pytest.mark.parametrize(
    "overrides, expected_C",
    [({}, 1.0), ({"bound_scale": 0.01}, 0.01), ({"bound_scale": 0.01, "chi2_C": 2.0}, 2.0)],
)
def test_bound_scale(overrides, expected_C):
    """A model-free profile takes its constant from bound_scale unless chi2_C is set"""
    experiment = config.parse_config(
        {"kind": "bounds", "seed": 0, "chi2_delta": 1.5, **overrides}
    )
    profile = config.build_profile(experiment)

    assert (profile.chi2_C, profile.chi2_delta) == (expected_C, 1.5)


def test_bound_scale_positive():
    with pytest.raises(exceptions.ConfigError, match="bound_scale"):
        config.parse_config({"kind": "bounds", "seed": 0, "chi2_delta": 1.5, "bound_scale": 0})


@pytest.mark.parametrize(
    "env, expected_seed, expected_exception",
    [
        ("42", 42, does_not_raise()),
        (" 7 ", 7, does_not_raise()),
        ("seven", None, pytest.raises(exceptions.ConfigError, match="GMIX_SEED")),
    ],
)
def test_seed_override(monkeypatch, env, expected_seed, expected_exception):
    """The environment seed replaces the configured one"""
    monkeypatch.setenv(config.SEED_ENV_VAR, env)

    with expected_exception:
        assert config.parse_config(MARKOV).seed == expected_seed


def test_load_config(tmp_path):
    """Tests config.load_config()"""
    path = tmp_path / "experiment.yaml"
    path.write_text(
        "kind: mixing\nseed: 3\nmodel: markov\norder: 1\ntable: [[0.9, 0.1], [0.2, 0.8]]\n"
    )

    assert config.load_config(path).seed == 3


@pytest.mark.parametrize("contents", [None, "kind: [mixing\n", ""])
def test_load_config_errors(tmp_path, contents):
    """Missing, malformed and empty files are config errors"""
    path = tmp_path / "experiment.yaml"
    if contents is not None:
        path.write_text(contents)

    with pytest.raises(exceptions.ConfigError):
        config.load_config(path)


@pytest.mark.parametrize(
    "spec, expected",
    [
        ([0.5, 0.25, 0.125, 1.0], [0.5, 0.25, 0.125]),
        ({"family": "power", "exponent": 2.0}, [1.0, 0.25, 1 / 9]),
        ({"family": "power", "scale": 2.0, "exponent": 1.0, "sign": "alternate"}, [2, -1, 2 / 3]),
        ({"family": "geometric", "ratio": 0.5}, [0.5, 0.25, 0.125]),
        ({"family": "constant", "value": 3}, [3.0, 3.0, 3.0]),
    ],
)
def test_expand_sequence(spec, expected):
    """Tests config.expand_sequence()"""
    np.testing.assert_allclose(config.expand_sequence(spec, 3), expected)


@pytest.mark.parametrize(
    "spec",
    [[1.0, 2.0], {"family": "harmonic"}, {"family": "power"}, {"family": "constant"}],
)
def test_expand_sequence_errors(spec):
    with pytest.raises(exceptions.ConfigError):
        config.expand_sequence(spec, 3)


@pytest.mark.parametrize(
    "beta_spec, gamma_spec, cutoff, expected",
    [
        ({"family": "power", "exponent": 2.0}, {"family": "constant", "value": 1}, 1,
         math.pi**2 / 6 - 1),
        ({"family": "geometric", "ratio": 0.5}, {"family": "constant", "value": 2}, 2, 0.5),
        ({"family": "power", "exponent": 1.0}, {"family": "constant", "value": 1}, 5, math.inf),
        ({"family": "constant", "value": 0.1}, {"family": "constant", "value": 1}, 5, math.inf),
        ([0.1, 0.2], {"family": "constant", "value": 1}, 2, 0.0),
        ({"family": "power", "exponent": 2.0}, [1, 1], 2, 0.0),
    ],
)
def test_truncation_tail(beta_spec, gamma_spec, cutoff, expected):
    """Tests config.truncation_tail()"""
    assert config.truncation_tail(beta_spec, gamma_spec, cutoff) == pytest.approx(expected)


@pytest.mark.parametrize(
    "beta_spec, gamma_spec, expected",
    [
        ({"family": "power", "exponent": 1.75, "sign": "alternate"},
         {"family": "constant", "value": 1}, 1.5),
        ({"family": "power", "exponent": 3.0, "scale": 0.5}, {"family": "constant", "value": 2},
         4.0),
        ({"family": "power", "exponent": 1.0}, {"family": "constant", "value": 1}, None),
        ({"family": "power", "exponent": 2.0}, {"family": "constant", "value": 0}, None),
        ({"family": "geometric", "ratio": 0.5}, {"family": "constant", "value": 1}, None),
        ({"family": "power", "exponent": 2.0}, [1, 1], None),
    ],
)
def test_chi2_exponent(beta_spec, gamma_spec, expected):
    """Tests config.chi2_exponent()"""
    assert config.chi2_exponent(beta_spec, gamma_spec) == expected


@pytest.mark.parametrize(
    "data, expected_type",
    [
        (MARKOV, potentials.MarkovModel),
        ({"kind": "fclt", "seed": 0, "model": "iid", "probs": [0.5, 0.5]}, potentials.IIDModel),
        ({"kind": "fclt", "seed": 0, "model": "iid", "alphabet_size": 4}, potentials.IIDModel),
        (
            {"kind": "mixing", "seed": 0, "model": "long-memory", "eps0": 0.2, "delta": 1.0,
             "k_max": 8},
            potentials.LongMemoryBinaryModel,
        ),
        (
            {"kind": "poisson", "seed": 0, "model": "poisson", "cutoff": 10,
             "beta_seq": {"family": "power", "exponent": 1.75},
             "gamma_seq": {"family": "constant", "value": 1}},
            potentials.PoissonARModel,
        ),
    ],
)
def test_build_model(data, expected_type):
    """Tests config.build_model()"""
    model = config.build_model(config.parse_config(data))

    assert isinstance(model, expected_type)


def test_build_model_uniform_iid():
    experiment = config.parse_config(
        {"kind": "fclt", "seed": 0, "model": "iid", "alphabet_size": 4}
    )

    assert config.build_model(experiment).probs == (0.25, 0.25, 0.25, 0.25)


def test_build_model_poisson_truncation():
    """Power families carry their closed-form truncation tail"""
    experiment = config.parse_config(
        {
            "kind": "poisson",
            "seed": 0,
            "model": "poisson",
            "cutoff": 10,
            "beta_seq": {"family": "power", "exponent": 2.0},
            "gamma_seq": {"family": "constant", "value": 1},
        }
    )
    model = config.build_model(experiment)

    assert model.truncation_tail == pytest.approx(sum(1 / i**2 for i in range(11, 200_000)), 1e-4)


@pytest.mark.parametrize(
    "data",
    [
        {"kind": "mixing", "seed": 0, "model": "long-memory", "eps0": 0.7, "delta": 1.0,
         "k_max": 4},
        {**MARKOV, "table": [[0.5, 0.6], [0.5, 0.5]]},
        {**MARKOV, "order": 2},
    ],
)
def test_build_model_invalid(data):
    """Invalid model parameters surface as config errors"""
    experiment = config.parse_config(data)

    with pytest.raises(exceptions.ConfigError):
        config.build_model(experiment)


def test_build_model_iid_needs_law():
    experiment = config.parse_config({"kind": "fclt", "seed": 0, "model": "iid"})

    with pytest.raises(exceptions.ConfigError, match="probs or alphabet_size"):
        config.build_model(experiment)


def test_build_profile():
    """Profiles come from the model unless overridden"""
    experiment = config.parse_config(
        {"kind": "mixing", "seed": 0, "model": "long-memory", "eps0": 0.2, "delta": 1.0,
         "k_max": 8}
    )
    model = config.build_model(experiment)
    profile = config.build_profile(experiment, model)

    assert profile.chi2_delta == 1.0
    assert profile.explicit_chi2[0] == pytest.approx(potentials.chi2_upper(model, 1))

    refit = config.build_profile(experiment.with_overrides(chi2_delta=0.5), model)
    assert refit.chi2_delta == 0.5
    assert refit.explicit_chi2 == profile.explicit_chi2

    override = config.build_profile(experiment.with_overrides(chi2_C=2.0), model)
    assert (override.chi2_C, override.chi2_delta) == (2.0, 1.0)


def test_build_histories():
    """Tests config.build_histories()"""
    experiment = config.parse_config({**MARKOV, "past_y": [1, 0], "tail_z": 0})
    y, z = config.build_histories(experiment, config.build_model(experiment))

    assert y == potentials.History((1, 0), 0)
    assert z == potentials.History((), 0)

    bad = experiment.with_overrides(tail_y=5)
    with pytest.raises(exceptions.ConfigError, match="past"):
        config.build_histories(bad, config.build_model(bad))


def test_build_observables_defaults():
    """Indicators of symbol 1 and spins on a binary alphabet"""
    experiment = config.parse_config(MARKOV)
    f, fhat, h = config.build_observables(experiment, config.build_model(experiment))

    assert f.table.tolist() == [0.0, 1.0]
    assert fhat.table.tolist() == [0.0, 1.0]
    assert h.table.tolist() == [-1.0, 1.0]

    ternary = config.parse_config({"kind": "fclt", "seed": 0, "model": "iid", "alphabet_size": 3})
    _, _, h = config.build_observables(ternary, config.build_model(ternary))
    assert h.table.tolist() == [0.0, 1.0, 2.0]


def test_build_observables_invalid():
    experiment = config.parse_config({**MARKOV, "f_depth": 2})

    with pytest.raises(exceptions.ConfigError, match="observable"):
        config.build_observables(experiment, config.build_model(experiment))


def test_with_overrides():
    """None overrides leave the config untouched"""
    experiment = config.parse_config(MARKOV)

    assert experiment.with_overrides(output_dir=None) is experiment
    assert experiment.with_overrides(threads=4).threads == 4


@pytest.mark.parametrize(
    "path", sorted((pathlib.Path(__file__).parents[2] / "experiments").glob("*.yaml"))
)
def test_example_configs(path):
    """The shipped experiment configs are valid"""
    experiment = config.load_config(path)
    if experiment.model:
        config.build_model(experiment)
    assert experiment.output_dir.startswith("results/")
