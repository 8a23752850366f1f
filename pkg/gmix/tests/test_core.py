"""Tests the gmix.core module"""

import csv
import json

import numpy as np
import pytest

from gmix import config, core, coupling, exceptions, oracle, potentials

TWO_STATE = {
    "seed": 3,
    "model": "markov",
    "order": 1,
    "table": [[0.9, 0.1], [0.2, 0.8]],
}
SPINS = {"seed": 5, "model": "iid", "probs": [0.5, 0.5]}


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv("GMIX_SEED", raising=False)


def read_rows(path):
    with open(path, newline="") as table_f:
        return list(csv.DictReader(table_f))


def read_summary(path):
    with open(path / "summary.json") as summary_f:
        return json.load(summary_f)


@pytest.fixture
def mixing_config(tmp_path):
    return config.parse_config(
        {
            **TWO_STATE,
            "kind": "mixing",
            "beta": 1.0,
            "n_blocks": 6,
            "replicates": 500,
            "output_dir": str(tmp_path / "mixing"),
        }
    )


def test_mixing_artifacts(mixing_config):
    """Tests core.run() on the mixing experiment"""
    result, out = core.run(mixing_config)

    with open(out / "results.csv") as results_f:
        header = results_f.readline().strip()
    assert header == "quantity,index,estimate,se,oracle,bound,flag,seed,replicates,mode"

    rows = read_rows(out / "results.csv")
    px = [row for row in rows if row["quantity"] == "px"]
    assert [int(row["index"]) for row in px] == [1, 2, 3, 4, 5, 6]
    for row in px:
        n = int(row["index"])
        assert float(row["oracle"]) == pytest.approx(0.7**n)
        assert float(row["bound"]) >= 0.7**n
        assert row["seed"] == "3" and row["replicates"] == "500"
        assert row["mode"] == "block-maximal"
    assert {row["quantity"] for row in rows} == {"px", "L", "M_tail"}

    summary = read_summary(out)
    assert summary["kind"] == "mixing"
    assert summary["beta"] == 1.0
    assert summary["passed"] == result.passed
    assert set(summary["flags"]) <= {"px_oracle", "px_bound", "L_oracle", "L_bound", "M_bound"}
    assert "px_oracle" in summary["flags"]

    for name in ("mixing_px", "mixing_L", "mixing_M_tail"):
        with open(out / "plotdata" / f"{name}.tsv") as plot_f:
            assert plot_f.readline() == "x\ty\tenvelope\n"


def test_mixing_reproducible(mixing_config, tmp_path):
    """Artifacts do not depend on threads or chunking"""
    _, first = core.run(mixing_config, out=str(tmp_path / "a"))
    _, second = core.run(
        mixing_config.with_overrides(chunk_size=37), out=str(tmp_path / "b"), threads=3
    )

    for name in ("results.csv", "summary.json", "plotdata/mixing_px.tsv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_mixing_seed_changes_estimates(mixing_config, tmp_path):
    _, first = core.run(mixing_config, out=str(tmp_path / "a"))
    _, second = core.run(mixing_config.with_overrides(seed=4), out=str(tmp_path / "b"))

    assert (first / "results.csv").read_bytes() != (second / "results.csv").read_bytes()


@pytest.mark.parametrize(
    "model, beta, mode, expected",
    [
        (potentials.MarkovModel(order=1, table=((0.9, 0.1), (0.2, 0.8))), 1.0, "block-maximal",
         True),
        (potentials.IIDModel((0.2, 0.3, 0.5)), 1.0, "block-maximal", True),
        (potentials.MarkovModel(order=1, table=((0.9, 0.1), (0.2, 0.8))), 2.0, "block-maximal",
         False),
        (potentials.MarkovModel(order=1, table=((0.9, 0.1), (0.2, 0.8))), 1.0,
         "coordinate-sequential", False),
        (potentials.MarkovModel(order=1, table=((0.8, 0.1, 0.1),) * 3), 1.0, "block-maximal",
         False),
        (potentials.LongMemoryBinaryModel(eps0=0.2, delta=1.0, k_max=5), 1.0, "block-maximal",
         False),
    ],
)
def test_attains_tv(model, beta, mode, expected):
    """Tests core._attains_tv()"""
    schedule = coupling.BlockSchedule(beta)

    assert core._attains_tv(model, schedule, coupling.mode_from_name(mode)) == expected


def test_mixing_coordinate_oracle_two_sided(mixing_config, monkeypatch):
    """A coupling that disagrees more often than the marginal distance fails its oracle"""
    result, _ = core.run(mixing_config)
    assert result.summary["L_two_sided"] is True

    monkeypatch.setattr(
        oracle, "exact_tv_coordinate", lambda model, y, z, k: 0.5 * 0.7**k
    )
    result, _ = core.run(mixing_config)

    assert result.flags["L_oracle"] is False


def test_bounds(tmp_path):
    """The bounds experiment needs no model and writes b, f, u and both corollaries"""
    experiment = config.parse_config(
        {"kind": "bounds", "seed": 0, "chi2_C": 0.01, "chi2_delta": 1.5, "beta": 1.0,
         "horizon": 200}
    )
    result, out = core.run(experiment, out=str(tmp_path))

    rows = read_rows(out / "results.csv")
    counts = {}
    for row in rows:
        counts[row["quantity"]] = counts.get(row["quantity"], 0) + 1
    assert counts["b"] == 201 and counts["f"] == 200 and counts["u"] == 200
    assert counts["corollary1"] == counts["corollary2"] > 0

    summary = read_summary(out)
    assert 0 < summary["product_lower"] < 1
    assert 0 < summary["renewal_mass"] < 1
    assert summary["tail_slack"] >= 0
    assert summary["slopes"]["u"] < 0
    assert summary["theory_exponents"]["u"] == pytest.approx(-1.25)
    assert "u_slope" in result.flags


def test_bounds_precondition(tmp_path):
    """beta delta <= 1 is a configuration problem"""
    experiment = config.parse_config(
        {"kind": "bounds", "seed": 0, "chi2_C": 1.0, "chi2_delta": 0.5, "beta": 1.5}
    )

    with pytest.raises(exceptions.ConfigError, match="beta"):
        core.run(experiment, out=str(tmp_path))


def test_correlations(tmp_path):
    """Estimated correlations carry the exact values of the two-state chain"""
    experiment = config.parse_config(
        {**TWO_STATE, "kind": "correlations", "lags": [1, 2], "burn_in": 100,
         "path_len": 2000, "replicates": 4}
    )
    result, out = core.run(experiment, out=str(tmp_path))

    rows = read_rows(out / "results.csv")
    assert list(rows[0]) == [
        "lag", "estimate", "se", "oracle", "envelope", "flag", "seed", "replicates", "mode"
    ]
    assert [int(row["lag"]) for row in rows] == [1, 2]
    for row in rows:
        assert float(row["oracle"]) == pytest.approx(2 / 9 * 0.7 ** int(row["lag"]))
    assert "oracle" in result.flags


def test_fclt(tmp_path):
    """IID spins are centred exactly"""
    experiment = config.parse_config(
        {**SPINS, "kind": "fclt", "n": 100, "burn_in": 0, "replicates": 50}
    )
    result, out = core.run(experiment, out=str(tmp_path))

    summary = read_summary(out)
    assert summary["center"] == 0.0
    assert set(result.flags) == {"grid", "ks"}
    assert read_rows(out / "results.csv")
    assert (out / "plotdata" / "fclt.tsv").exists()


def test_chernoff(tmp_path):
    """Binary IID deviations are compared with the binomial law"""
    experiment = config.parse_config(
        {**SPINS, "kind": "chernoff", "n_list": [40, 10], "t": 0.3, "burn_in": 0,
         "replicates": 200}
    )
    result, out = core.run(experiment, out=str(tmp_path))

    rows = read_rows(out / "results.csv")
    assert [int(row["n"]) for row in rows] == [10, 40]
    for row in rows:
        expected = oracle.exact_iid_deviation(0.5, int(row["n"]), 0.3)
        assert float(row["oracle"]) == pytest.approx(expected)
    assert result.summary["range"] == 2.0


def test_poisson(tmp_path):
    """Empirical divergences stay under their upper bounds"""
    experiment = config.parse_config(
        {
            "kind": "poisson",
            "seed": 0,
            "model": "poisson",
            "beta_seq": {"family": "power", "exponent": 1.75, "sign": "alternate"},
            "gamma_seq": [1, 1, 2],
            "cutoff": 3,
            "k_range": [0, 3],
            "n_contexts": 50,
        }
    )
    result, out = core.run(experiment, out=str(tmp_path))

    rows = read_rows(out / "results.csv")
    assert [int(row["k"]) for row in rows] == [0, 1, 2, 3]
    assert float(rows[-1]["chi2_upper"]) == 0.0
    assert result.flags == {"empirical": True, "normalization": True}
    assert read_summary(out)["support_size"] > 1


def test_poisson_chi2_slope(tmp_path):
    """A power beta family with a constant gamma has its chi-square decay rate checked"""
    experiment = config.parse_config(
        {
            "kind": "poisson",
            "seed": 1,
            "model": "poisson",
            "beta_seq": {"family": "power", "exponent": 1.75, "sign": "alternate"},
            "gamma_seq": {"family": "constant", "value": 1},
            "cutoff": 400,
            "profile_delta": 0.5,
            "k_range": [20, 200],
            "n_contexts": 20,
            "n_histories": 100,
        }
    )
    result, out = core.run(experiment, out=str(tmp_path))

    summary = read_summary(out)
    assert summary["chi2_theory_slope"] == pytest.approx(-1.5)
    assert summary["chi2_slope"] == pytest.approx(-1.5, abs=0.15)
    assert summary["truncation_tail"] > 0
    assert summary["n_histories"] == 100
    assert result.flags == {"empirical": True, "normalization": True, "chi2_slope": True}


def test_validate_lemmas(tmp_path):
    """Tests core.run() on the lemma checks"""
    experiment = config.parse_config({"kind": "validate-lemmas", "seed": 0})
    result, out = core.run(experiment, out=str(tmp_path))

    rows = read_rows(out / "results.csv")
    assert len(rows) == 3
    assert rows[0]["lemma"] == "Lemalg"
    assert result.passed
    assert read_summary(out)["passed"] is True


def test_write_artifacts_formats(tmp_path):
    """Tests core.write_artifacts() cell and JSON formatting"""
    experiment = config.parse_config({"kind": "validate-lemmas", "seed": 9})
    result = core.ExperimentResult(
        kind="validate-lemmas",
        columns=("name", "value", "ok"),
        rows=[("a", 0.1, True), ("b", None, np.bool_(False)), ("c", np.int64(3), None)],
        summary={"limit": float("inf"), "values": np.array([1.5, 2.0])},
        plots={"demo": [(1, 0.5, None)]},
        flags={"ok": False},
    )

    out = core.write_artifacts(result, experiment, tmp_path / "out")

    assert (out / "results.csv").read_text() == (
        "name,value,ok,seed,replicates,mode\n"
        "a,0.10000000000000001,true,9,1000,block-maximal\n"
        "b,,false,9,1000,block-maximal\n"
        "c,3,,9,1000,block-maximal\n"
    )
    summary = read_summary(out)
    assert summary["limit"] == "inf"
    assert summary["values"] == [1.5, 2.0]
    assert summary["passed"] is False
    assert (out / "plotdata" / "demo.tsv").read_text() == "x\ty\tenvelope\n1\t0.5\t\n"


@pytest.mark.parametrize(
    "flags, expected",
    [({}, True), ({"a": True}, True), ({"a": True, "b": False}, False)],
)
def test_experiment_result_passed(flags, expected):
    """Tests core.ExperimentResult.passed"""
    result = core.ExperimentResult(kind="bounds", columns=(), rows=[], summary={}, flags=flags)

    assert result.passed == expected
