"""CSV, JSON and SVG artifact generation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
from pydantic import BaseModel  # noqa: E402

from .exceptions import ReportGenerationError  # noqa: E402
from .models import ClaimLedger, SweepPointSummary  # noqa: E402

LOGGER = logging.getLogger(__name__)

SVG_HASH_SALT = "coverlab"


@dataclass
class SeriesMetrics:
    """Quantiles of one metric across seeds."""

    median: float
    q25: float
    q75: float
    mean: float
    count: int


class ReportBuilder:
    """Write per-run series, aggregate summaries and regret curves."""

    def __init__(self, logger: Optional[logging.Logger] = None) -> None:
        self.logger = logger or LOGGER

    @staticmethod
    def summarize(values: Sequence[float]) -> SeriesMetrics:
        array = np.asarray(values, dtype=float)
        if array.size == 0:
            raise ReportGenerationError("cannot summarize an empty series")
        q25, median, q75 = np.percentile(array, [25, 50, 75])
        return SeriesMetrics(
            median=float(median),
            q25=float(q25),
            q75=float(q75),
            mean=float(array.mean()),
            count=int(array.size),
        )

    def aggregate(
        self, point: Mapping[str, float], metric: str, values: Sequence[float]
    ) -> SweepPointSummary:
        """Median and interquartile range of ``metric`` at one sweep point."""
        metrics = self.summarize(values)
        return SweepPointSummary(
            point=dict(point),
            metric=metric,
            median=metrics.median,
            q25=metrics.q25,
            q75=metrics.q75,
            values=[float(v) for v in values],
        )

    def write_csv(self, rows: Sequence[Mapping[str, object]], path: Path) -> Path:
        """Write rows with the column order of the first row.

        Raises:
            ReportGenerationError: If the rows are empty or the file cannot be written.
        """
        if not rows:
            raise ReportGenerationError(f"no rows to write to {path}")
        fieldnames = list(rows[0].keys())
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", newline="", encoding="utf-8") as handle:
                writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
                writer.writeheader()
                writer.writerows(rows)
        except OSError as exc:
            raise ReportGenerationError(f"cannot write {path}: {exc.strerror}") from exc
        self.logger.debug("Wrote %d rows to %s", len(rows), path)
        return path

    def write_json(self, document: BaseModel, path: Path) -> Path:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            raise ReportGenerationError(f"cannot write {path}: {exc.strerror}") from exc
        return path

    def ledger_rows(self, ledger: ClaimLedger) -> List[Dict[str, object]]:
        return [
            {
                "suite": row.suite,
                "claim": row.claim,
                "instance": row.instance,
                "value": repr(row.value),
                "bound": repr(row.bound),
                "passed": int(row.passed),
                "detail": row.detail,
            }
            for row in ledger.rows
        ]

    def write_regret_svg(
        self,
        curves: Mapping[str, Sequence[float]],
        path: Path,
        title: str = "Cumulative regret",
        bands: Optional[Mapping[str, Sequence[Sequence[float]]]] = None,
    ) -> Path:
        """Static SVG of cumulative-regret curves.

        Args:
            curves: Label to median curve indexed by round.
            path: Output file.
            title: Figure title.
            bands: Optional label to ``(q25, q75)`` curves drawn as shaded bands.
        """
        with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
            figure = Figure(figsize=(6.0, 4.0))
            axes = figure.add_subplot(1, 1, 1)
            for label, curve in curves.items():
                rounds = np.arange(1, len(curve) + 1)
                axes.plot(rounds, curve, label=label)
                if bands and label in bands:
                    low, high = bands[label]
                    axes.fill_between(rounds, low, high, alpha=0.2)
            axes.set_xlabel("round t")
            axes.set_ylabel("Reg(t)")
            axes.set_title(title)
            axes.legend(loc="upper left")
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                figure.savefig(path, format="svg", metadata={"Date": None})
            except OSError as exc:
                raise ReportGenerationError(f"cannot write {path}: {exc.strerror}") from exc
        self.logger.debug("Wrote regret plot %s", path)
        return path
