"""Calibration and quality tables laid out like the published ones."""
from __future__ import annotations

import csv
import io
from typing import Sequence

from .calibration import CalibrationResult
from .quality import QualityReport

CALIBRATION_HEADER = ("Behavior", "alpha", "beta", "s0", "delta_s", "Speed RMSE (m/s)")
QUALITY_HEADER = (
    "Behavior",
    "Trajectory segments quantity",
    "Distance (m)",
    "Duration (s)",
    "Anomaly Acceleration (%)",
    "Anomaly Jerk (%)",
)


def calibration_rows(results: Sequence[CalibrationResult]) -> list[list[str]]:
    rows = []
    for r in results:
        p = r.params
        rows.append([r.group] + [f"{v:.4f}" for v in (p.alpha, p.beta, p.s0, p.delta_s, r.rmse)])
    return rows


def quality_rows(reports: Sequence[QualityReport]) -> list[list[str]]:
    return [
        [
            q.group,
            str(q.segment_count),
            f"{q.distance:,.2f}",
            f"{q.duration:,.2f}",
            f"{q.anomaly_accel_pct_raw:.2f} / {q.anomaly_accel_pct_smoothed:.2f}",
            f"{q.anomaly_jerk_pct_raw:.2f} / {q.anomaly_jerk_pct_smoothed:.2f}",
        ]
        for q in reports
    ]


def to_csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


def to_markdown(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def report(
    results: Sequence[CalibrationResult],
    quality: Sequence[QualityReport] = (),
    fmt: str = "markdown",
) -> str:
    """Render whichever of the two tables has rows. ``fmt`` is ``markdown`` or ``csv``."""
    render = to_markdown if fmt == "markdown" else to_csv
    parts = []
    if results:
        body = render(CALIBRATION_HEADER, calibration_rows(results))
        parts.append(f"## FVDM calibration results\n\n{body}" if fmt == "markdown" else body)
    if quality:
        body = render(QUALITY_HEADER, quality_rows(quality))
        parts.append(f"## Trajectory quality\n\n{body}" if fmt == "markdown" else body)
    return "\n".join(parts)
