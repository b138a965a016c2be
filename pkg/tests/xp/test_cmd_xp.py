import json
from unittest.mock import patch

import pytest

from steinbar.cmd import xp
from steinbar.errors import NonFiniteProbeError
from steinbar.lib.xp import runner
from steinbar.repos.base import read_rows


def _model(arrival_rate: float = 0.5) -> dict:
    return {
        "variant": "gg1",
        "arrival": {"family": "exponential", "rate": arrival_rate},
        "service": {"family": "exponential", "rate": 1.0},
    }


@pytest.fixture
def write_config(tmp_path):
    def write(doc: dict, name: str = "experiment.json") -> str:
        doc = {"output": {"plots": False}, **doc}
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return write


@patch("steinbar.cmd.xp.logger")
def test_unknown_key_exits_with_config_error(mock_logger, write_config):
    config = write_config({"model": _model(), "run": {"sead": 1}})
    assert xp.run_command(runner.run_bound, config) == xp.EXIT_CONFIG
    mock_logger.error.assert_any_call("config run.sead: Extra inputs are not permitted")


def test_missing_file_exits_with_config_error(tmp_path):
    missing = str(tmp_path / "missing.json")
    assert xp.run_command(runner.run_bound, missing) == xp.EXIT_CONFIG


def test_malformed_json_exits_with_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    assert xp.run_command(runner.run_bound, str(path)) == xp.EXIT_CONFIG


def test_unstable_model_exits_with_config_error(write_config, tmp_path):
    config = write_config({"model": _model(arrival_rate=1.0)})
    code = xp.run_command(runner.run_simulate, config, events=1000, out_dir=str(tmp_path / "o"))
    assert code == xp.EXIT_CONFIG


def test_print_config_shows_overrides(write_config, capsys):
    config = write_config({"config_id": "printed", "model": _model()})
    assert xp.run_command(runner.run_bound, config, seed=42, print_config=True) == xp.EXIT_PASS
    doc = json.loads(capsys.readouterr().out)
    assert doc["config_id"] == "printed"
    assert doc["run"]["seed"] == 42
    assert doc["checks"]["bound"]["mode"] == "simulated"


def test_bound_writes_to_out_dir(write_config, tmp_path):
    doc = {"model": _model(), "checks": {"bound": {"conditional_residual": 2.0}}}
    out_dir = tmp_path / "bound"
    code = xp.run_command(runner.run_bound, write_config(doc), out_dir=str(out_dir))
    assert code == xp.EXIT_PASS
    (row,) = read_rows(out_dir / "bounds.csv")
    assert float(row["eps0"]) == pytest.approx(2.0)


def test_sweep_with_one_rho_is_a_config_error(write_config, tmp_path):
    doc = {"model": _model(), "checks": {"sweep": {"rhos": [0.9]}}}
    code = xp.run_command(runner.run_sweep, write_config(doc), out_dir=str(tmp_path))
    assert code == xp.EXIT_CONFIG


def test_failed_assertions_exit_with_one(write_config, tmp_path):
    def run_failing(config, out_dir):
        return False

    code = xp.run_command(run_failing, write_config({"model": _model()}), out_dir=str(tmp_path))
    assert code == xp.EXIT_FAIL


@patch("steinbar.cmd.xp.logger")
def test_runtime_errors_exit_with_one(mock_logger, write_config, tmp_path):
    def run_broken(config, out_dir):
        raise NonFiniteProbeError("id:q", float("nan"))

    code = xp.run_command(run_broken, write_config({"model": _model()}), out_dir=str(tmp_path))
    assert code == xp.EXIT_FAIL
    mock_logger.exception.assert_called_once()


def test_subcommand_exits_with_the_return_code(write_config):
    command = xp._subcommand(runner.run_bound, "Error bound.")
    assert command.__name__ == "bound"
    assert command.__doc__ == "Error bound."
    with pytest.raises(SystemExit) as exc:
        command(write_config({"model": _model()}), print_config=True)
    assert exc.value.code == xp.EXIT_PASS


def test_plot_on_an_empty_directory(tmp_path):
    with pytest.raises(SystemExit) as exc:
        xp.plot(str(tmp_path))
    assert exc.value.code == xp.EXIT_PASS
