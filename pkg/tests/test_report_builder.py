"""Tests for report generation."""

import csv
import json
from pathlib import Path

import pytest

from coverlab.exceptions import ReportGenerationError
from coverlab.models import ClaimLedger, ClaimRow
from coverlab.report_builder import ReportBuilder


def test_summary_uses_median_and_quartiles() -> None:
    metrics = ReportBuilder.summarize([1.0, 2.0, 3.0, 4.0, 5.0])

    assert metrics.median == 3.0
    assert (metrics.q25, metrics.q75) == (2.0, 4.0)
    assert metrics.count == 5


def test_empty_series_is_rejected() -> None:
    with pytest.raises(ReportGenerationError):
        ReportBuilder.summarize([])


def test_aggregate_keeps_raw_values() -> None:
    summary = ReportBuilder().aggregate({"T": 250}, "cum_regret", [3.0, 1.0, 2.0])

    assert summary.point == {"T": 250}
    assert summary.median == 2.0
    assert summary.values == [3.0, 1.0, 2.0]


def test_csv_keeps_first_row_column_order(tmp_path: Path) -> None:
    path = ReportBuilder().write_csv(
        [{"t": 1, "cum_regret": "0.25"}, {"t": 2, "cum_regret": "0.5"}], tmp_path / "out" / "run.csv"
    )

    with path.open(encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows == [["t", "cum_regret"], ["1", "0.25"], ["2", "0.5"]]


def test_csv_needs_rows(tmp_path: Path) -> None:
    with pytest.raises(ReportGenerationError, match="no rows"):
        ReportBuilder().write_csv([], tmp_path / "run.csv")


def test_ledger_rows_and_json(tmp_path: Path) -> None:
    ledger = ClaimLedger(
        suite="constructions",
        rows=[
            ClaimRow(suite="constructions", claim="complete", instance="tree", value=1.0, bound=1.0, passed=True),
            ClaimRow(suite="constructions", claim="realizable", instance="tree", value=0.0, bound=1.0, passed=False),
        ],
    )
    builder = ReportBuilder()

    rows = builder.ledger_rows(ledger)
    path = builder.write_json(ledger, tmp_path / "ledger.json")

    assert [row["passed"] for row in rows] == [1, 0]
    assert rows[0]["value"] == "1.0"
    assert not ledger.passed
    assert json.loads(path.read_text())["suite"] == "constructions"


def test_regret_svg_is_deterministic(tmp_path: Path) -> None:
    builder = ReportBuilder()
    curves = {"T=4": [0.25, 0.5, 0.5, 0.5]}
    bands = {"T=4": [[0.0, 0.25, 0.25, 0.25], [0.5, 0.75, 0.75, 0.75]]}

    first = builder.write_regret_svg(curves, tmp_path / "a.svg", bands=bands)
    second = builder.write_regret_svg(curves, tmp_path / "b.svg", bands=bands)

    text = first.read_text()
    assert text.startswith("<?xml")
    assert "Reg(t)" in text
    assert text == second.read_text()
