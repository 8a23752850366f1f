import json
import sys
from unittest import mock

import pytest

from gmix import cli, exceptions


@pytest.fixture
def mock_exit(mocker):
    yield mocker.patch("sys.exit", autospec=True)


@pytest.fixture
def mock_successful_exit(mock_exit):
    yield
    mock_exit.assert_called_once_with(0)


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv("GMIX_SEED", raising=False)


@pytest.mark.parametrize("flag", ["-v", "--version"])
@pytest.mark.usefixtures("mock_successful_exit")
def test_gmix_v(mocker, capsys, flag):
    """Test calling gmix -v"""
    mocker.patch.object(sys, "argv", ["gmix", flag])

    cli.main()

    out, _ = capsys.readouterr()
    assert out.startswith("gmix ")


@pytest.mark.parametrize(
    "command_args, expected_run_kwargs",
    [
        (["exp.yaml"], {"out": None, "threads": None}),
        (["run", "exp.yaml"], {"out": None, "threads": None}),
        (
            ["run", "exp.yaml", "--out", "results", "--threads", "4"],
            {"out": "results", "threads": 4},
        ),
    ],
)
@pytest.mark.usefixtures("mock_successful_exit")
def test_run(mocker, capsys, command_args, expected_run_kwargs):
    """Test calling gmix run"""
    mocker.patch.object(sys, "argv", ["gmix"] + command_args)
    experiment = mocker.Mock(self_check=False)
    patched_load = mocker.patch(
        "gmix.config.load_config", autospec=True, return_value=experiment
    )
    patched_run = mocker.patch(
        "gmix.core.run",
        autospec=True,
        return_value=(mocker.Mock(kind="mixing", passed=True, flags={}), "results"),
    )

    cli.main()

    out, _ = capsys.readouterr()
    assert patched_load.call_args_list == [mock.call("exp.yaml")]
    assert patched_run.call_args_list == [mock.call(experiment, **expected_run_kwargs)]
    assert out == "Wrote mixing results to results\n"


@pytest.mark.parametrize(
    "error, expected_status, expected_origin",
    [
        (exceptions.ConfigError("bad key"), 2, None),
        (exceptions.CapacityError("too many states", origin="gmix.coupling"), 3, "gmix.coupling"),
        (exceptions.PipelineError("no guarantee"), 1, None),
    ],
)
def test_run_errors(mock_exit, mocker, capsys, error, expected_status, expected_origin):
    """Errors are reported as JSON on stderr with their exit status"""
    mocker.patch.object(sys, "argv", ["gmix", "run", "exp.yaml"])
    mocker.patch("gmix.config.load_config", autospec=True, return_value="experiment")
    mocker.patch("gmix.core.run", autospec=True, side_effect=error)

    cli.main()

    _, err = capsys.readouterr()
    reported = json.loads(err)
    assert reported["error"] == type(error).__name__
    assert reported["message"] == str(error)
    if expected_origin:
        assert reported["origin"] == expected_origin
    mock_exit.assert_called_once_with(expected_status)


def test_run_missing_config(mock_exit, mocker, capsys, tmp_path):
    """The origin of an error is the module that raised it"""
    mocker.patch.object(sys, "argv", ["gmix", "run", str(tmp_path / "missing.yaml")])

    cli.main()

    _, err = capsys.readouterr()
    reported = json.loads(err)
    assert reported == {
        "error": "ConfigError",
        "message": f'Cannot read experiment config "{tmp_path / "missing.yaml"}"',
        "origin": "gmix.config",
    }
    mock_exit.assert_called_once_with(2)


def test_run_without_config(mock_exit, mocker, capsys):
    mocker.patch.object(sys, "argv", ["gmix"])

    cli.main()

    _, err = capsys.readouterr()
    assert json.loads(err)["error"] == "ConfigError"
    mock_exit.assert_called_once_with(2)


@pytest.mark.parametrize(
    "self_check, passed, expected_status",
    [(True, False, 4), (True, True, 0), (False, False, 0)],
)
def test_run_self_check(mock_exit, mocker, capsys, self_check, passed, expected_status):
    """Failed acceptance flags only change the exit status under self_check"""
    mocker.patch.object(sys, "argv", ["gmix", "run", "exp.yaml"])
    mocker.patch(
        "gmix.config.load_config", autospec=True, return_value=mocker.Mock(self_check=self_check)
    )
    flags = {"px_bound": passed, "L_bound": True}
    mocker.patch(
        "gmix.core.run",
        autospec=True,
        return_value=(mocker.Mock(kind="mixing", passed=passed, flags=flags), "results"),
    )

    cli.main()

    _, err = capsys.readouterr()
    mock_exit.assert_called_once_with(expected_status)
    if expected_status == 4:
        assert "1 acceptance flags failed: px_bound" in err


@pytest.mark.usefixtures("mock_successful_exit")
def test_run_bounds_config(mocker, tmp_path):
    """Test running a config file end to end"""
    config_path = tmp_path / "bounds.yaml"
    config_path.write_text(
        "kind: bounds\nseed: 0\nchi2_C: 0.01\nchi2_delta: 1.5\nbeta: 1.0\nhorizon: 50\n"
    )
    out = tmp_path / "out"
    mocker.patch.object(sys, "argv", ["gmix", "run", str(config_path), "--out", str(out)])

    cli.main()

    assert json.loads((out / "summary.json").read_text())["kind"] == "bounds"
    assert (out / "results.csv").exists()
