"""Tests for the typer command-line interface."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from coverlab.cli import app
from coverlab.function_family import ValueFunctionFamily
from coverlab.instance_io import save_family, save_mdp
from coverlab.mdp import LayeredMdp

runner = CliRunner()


@pytest.fixture(autouse=True)
def restore_root_handlers():
    """Undo the handlers each command installs on the root logger."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers = handlers
    root.setLevel(level)


def _construct(tmp_path: Path) -> Path:
    output = tmp_path / "instance"
    result = runner.invoke(
        app, ["construct", "two-layer", "-p", "eps2=0.25", "-p", "instance=3", "-o", str(output)]
    )
    assert result.exit_code == 0, result.output
    return output


def test_construct_writes_instance_files(tmp_path: Path) -> None:
    output = _construct(tmp_path)

    assert {path.name for path in output.iterdir()} == {"mdp.json", "family.json", "manifest.json"}
    manifest = json.loads((output / "manifest.json").read_text())
    assert manifest["properties"]


def test_construct_reports_bad_parameters(tmp_path: Path) -> None:
    result = runner.invoke(app, ["construct", "two-layer", "-p", "eps2=0.3", "-o", str(tmp_path)])

    assert result.exit_code == 2
    assert "error:" in result.output


def test_validate_accepts_a_valid_instance(tmp_path: Path) -> None:
    output = _construct(tmp_path)

    result = runner.invoke(
        app, ["validate", str(output / "mdp.json"), "--family", str(output / "family.json")]
    )

    assert result.exit_code == 0, result.output
    assert '"valid": true' in result.output


def test_validate_flags_unnormalized_returns(tmp_path: Path) -> None:
    mdp = LayeredMdp.from_arrays(
        [np.array([[[1.0, 0.0]]])],
        [np.array([[0.9]]), np.array([[0.9], [0.9]])],
    )
    path = save_mdp(mdp, tmp_path / "mdp.json")

    result = runner.invoke(app, ["validate", str(path)])

    assert result.exit_code == 1
    assert "normalization" in result.output


def test_validate_missing_file(tmp_path: Path) -> None:
    result = runner.invoke(app, ["validate", str(tmp_path / "absent.json")])

    assert result.exit_code == 2


def test_measure_prints_json(tmp_path: Path) -> None:
    output = _construct(tmp_path)

    result = runner.invoke(
        app,
        [
            "measure",
            "coverability",
            "--mdp",
            str(output / "mdp.json"),
            "--family",
            str(output / "family.json"),
        ],
    )

    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["value"] == pytest.approx(1.75)


def test_measure_requires_inputs(tmp_path: Path) -> None:
    output = _construct(tmp_path)

    result = runner.invoke(
        app, ["measure", "concentrability", "--mdp", str(output / "mdp.json"), "--policy-set", "all"]
    )

    assert result.exit_code == 2
    assert "--mu" in result.output


def test_unknown_measure(tmp_path: Path) -> None:
    output = _construct(tmp_path)

    result = runner.invoke(app, ["measure", "entropy", "--mdp", str(output / "mdp.json")])

    assert result.exit_code == 2


def test_run_golf_writes_log(tmp_path: Path) -> None:
    result = runner.invoke(
        app,
        [
            "run",
            "golf",
            "-c",
            "two-layer",
            "-p",
            "eps2=0.25",
            "--T",
            "30",
            "--beta",
            "0.5",
            "-o",
            str(tmp_path),
        ],
    )

    assert result.exit_code == 0, result.output
    assert "cum_regret:" in result.output
    assert (tmp_path / "runs" / "golf_base_seed0.csv").exists()


def test_run_needs_an_instance(tmp_path: Path) -> None:
    result = runner.invoke(app, ["run", "golf", "-o", str(tmp_path)])

    assert result.exit_code == 2


def test_verify_quick_suite(tmp_path: Path) -> None:
    result = runner.invoke(app, ["verify", "constructions", "--quick", "-o", str(tmp_path)])

    assert result.exit_code == 0, result.output
    assert "0 failed" in result.output
    assert (tmp_path / "ledger.json").exists()


def test_experiment_reports_config_errors(tmp_path: Path) -> None:
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({"name": "bad", "kind": "claims"}))

    result = runner.invoke(app, ["experiment", str(path)])

    assert result.exit_code == 2
    assert "suite" in result.output


def test_experiment_writes_log_file(tmp_path: Path) -> None:
    path = tmp_path / "experiment.json"
    path.write_text(
        json.dumps(
            {
                "name": "golf",
                "kind": "golf",
                "instance": {"construction": "two-layer", "params": {"eps2": 0.25}},
                "algorithm": {"T": 20, "beta": 0.5},
                "assertions": ["monotone-regret"],
            }
        )
    )
    log_file = tmp_path / "logs" / "run.log"

    result = runner.invoke(
        app, ["experiment", str(path), "-o", str(tmp_path / "out"), "--log-file", str(log_file)]
    )

    assert result.exit_code == 0, result.output
    assert "monotone-regret: pass" in result.output
    assert "Experiment golf" in log_file.read_text(encoding="utf-8")


def test_version_command() -> None:
    result = runner.invoke(app, ["version"])

    assert result.exit_code == 0
    assert result.output.strip()


def _read_csv(path: Path) -> list:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def test_measure_accepts_short_names(tmp_path: Path) -> None:
    output = _construct(tmp_path)
    report_path = tmp_path / "reports" / "cov.json"

    result = runner.invoke(
        app,
        [
            "measure",
            "cov",
            "--mdp",
            str(output / "mdp.json"),
            "--family",
            str(output / "family.json"),
            "--policies",
            "induced",
            "--out",
            str(report_path),
        ],
    )

    assert result.exit_code == 0, result.output
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["measure"] == "coverability"
    assert report["value"] == pytest.approx(1.75)


def test_measure_type_selects_state_alphabets(tmp_path: Path) -> None:
    output = _construct(tmp_path)
    report_path = tmp_path / "be_dim.json"

    result = runner.invoke(
        app,
        [
            "measure",
            "be-dim-sq",
            "--mdp",
            str(output / "mdp.json"),
            "--family",
            str(output / "family.json"),
            "--type",
            "v",
            "--out",
            str(report_path),
        ],
    )

    assert result.exit_code == 0, result.output
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["parameters"]["kind"] == "V"


def test_measure_rejects_unknown_type(tmp_path: Path) -> None:
    output = _construct(tmp_path)

    result = runner.invoke(
        app,
        [
            "measure",
            "sec",
            "--mdp",
            str(output / "mdp.json"),
            "--family",
            str(output / "family.json"),
            "--type",
            "w",
        ],
    )

    assert result.exit_code == 2
    assert "q or v" in result.output


def test_run_golf_copies_log_to_out(tmp_path: Path) -> None:
    csv_path = tmp_path / "golf.csv"

    result = runner.invoke(
        app,
        [
            "run",
            "golf",
            "-c",
            "two-layer",
            "-p",
            "eps2=0.25",
            "--T",
            "12",
            "--delta",
            "0.1",
            "--out",
            str(csv_path),
            "-o",
            str(tmp_path / "results"),
        ],
    )

    assert result.exit_code == 0, result.output
    rows = _read_csv(csv_path)
    assert len(rows) == 12
    assert set(rows[0]) == {"t", "fstar_in_set", "set_size", "optimistic_value", "J_pi_t", "cum_regret"}


def test_run_golf_rejects_bad_delta(tmp_path: Path) -> None:
    result = runner.invoke(
        app, ["run", "golf", "-c", "two-layer", "-p", "eps2=0.25", "--delta", "1.5", "-o", str(tmp_path)]
    )

    assert result.exit_code == 2


def test_run_golf_writes_partial_log_when_set_empties(tmp_path: Path) -> None:
    mdp = LayeredMdp.from_arrays(
        [np.ones((1, 1, 1))], [np.zeros((1, 1)), np.zeros((1, 1))], name="chain"
    )
    family = ValueFunctionFamily.from_member_tables(
        [
            [np.ones((1, 1)), np.zeros((1, 1))],
            [np.zeros((1, 1)), np.ones((1, 1))],
        ],
        name="crossed",
    )
    mdp_path = save_mdp(mdp, tmp_path / "mdp.json")
    family_path = save_family(family, tmp_path / "family.json")
    csv_path = tmp_path / "partial.csv"

    result = runner.invoke(
        app,
        [
            "run",
            "golf",
            "--mdp",
            str(mdp_path),
            "--family",
            str(family_path),
            "--T",
            "5",
            "--beta",
            "0",
            "--out",
            str(csv_path),
            "-o",
            str(tmp_path / "results"),
        ],
    )

    assert result.exit_code == 2
    assert "aborted" in result.output
    rows = _read_csv(csv_path)
    assert [row["t"] for row in rows] == ["1"]
    assert (tmp_path / "results" / "runs" / "golf_base_seed0.csv").exists()
