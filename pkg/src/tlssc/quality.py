"""Anomaly-rate quality metrics and per-behavior summaries."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .behavior import BehaviorLabel, Category
from .trajectory import TrajectorySegment, differentiate, project_to_path

ACCEL_RANGE = (-8.0, 5.0)  # m/s^2
JERK_RANGE = (-15.0, 15.0)  # m/s^3


def _outside_count(values, lo: float, hi: float) -> tuple[int, int]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty series")
    # closed interval counts as normal
    return int(np.count_nonzero((v < lo) | (v > hi))), int(v.size)


def anomaly_acceleration_pct(accel, lo: float = ACCEL_RANGE[0], hi: float = ACCEL_RANGE[1]) -> float:
    bad, total = _outside_count(accel, lo, hi)
    return 100.0 * bad / total


def anomaly_jerk_pct(jerk, lo: float = JERK_RANGE[0], hi: float = JERK_RANGE[1]) -> float:
    bad, total = _outside_count(jerk, lo, hi)
    return 100.0 * bad / total


@dataclass(frozen=True)
class QualityReport:
    group: str
    segment_count: int
    distance: float  # m
    duration: float  # s
    anomaly_accel_pct_raw: float
    anomaly_accel_pct_smoothed: float
    anomaly_jerk_pct_raw: float
    anomaly_jerk_pct_smoothed: float
    sample_count: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SegmentCounts:
    """Raw anomaly counts for one segment, kept so groups can be pooled exactly."""

    samples: int
    accel_raw: int
    accel_smoothed: int
    jerk_raw: int
    jerk_smoothed: int
    distance: float
    duration: float


def segment_counts(seg: TrajectorySegment, window_samples: int = 10) -> SegmentCounts:
    dt = seg.dt_nominal
    raw_speed = seg.column("speed")
    series = project_to_path(seg, smoothed=True, window_samples=window_samples,
                             require_positive_spacing=False)
    a_raw = differentiate(raw_speed, dt)
    j_raw = differentiate(a_raw, dt)
    return SegmentCounts(
        samples=len(seg),
        accel_raw=_outside_count(a_raw, *ACCEL_RANGE)[0],
        accel_smoothed=_outside_count(series.accel, *ACCEL_RANGE)[0],
        jerk_raw=_outside_count(j_raw, *JERK_RANGE)[0],
        jerk_smoothed=_outside_count(series.jerk, *JERK_RANGE)[0],
        distance=float(series.position[-1]),
        duration=seg.duration,
    )


def summarize(
    segments: Sequence[TrajectorySegment],
    group: "Category | BehaviorLabel | str" = Category.ALL,
    window_samples: int = 10,
) -> QualityReport:
    """Pool anomaly counts over every sample of every segment in ``group``.

    "Raw" rates differentiate the unsmoothed speed column; "smoothed" rates
    use ``Speed_smoothed`` or, when absent, this package's moving average.
    """
    if not segments:
        raise ValueError("no segments to summarize")
    for seg in segments:
        if seg.behavior is None or not seg.behavior.matches(group):
            raise ValueError(f"segment {seg.segment_id!r} ({seg.behavior}) is not in group {group}")
    counts = [segment_counts(s, window_samples) for s in segments]
    n = sum(c.samples for c in counts)

    def pct(attr: str) -> float:
        return 100.0 * sum(getattr(c, attr) for c in counts) / n

    name = group.value if isinstance(group, Category) else str(group)
    return QualityReport(
        group=name,
        segment_count=len(segments),
        distance=sum(c.distance for c in counts),
        duration=sum(c.duration for c in counts),
        anomaly_accel_pct_raw=pct("accel_raw"),
        anomaly_accel_pct_smoothed=pct("accel_smoothed"),
        anomaly_jerk_pct_raw=pct("jerk_raw"),
        anomaly_jerk_pct_smoothed=pct("jerk_smoothed"),
        sample_count=n,
    )


def summarize_by_category(segments: Sequence[TrajectorySegment], window_samples: int = 10) -> list[QualityReport]:
    """One report per behavior category present, then an "All behaviors" row."""
    reports = []
    for cat in (Category.STOPPING, Category.ACCELERATING, Category.CAR_FOLLOWING):
        members = [s for s in segments if s.behavior is not None and s.behavior.category is cat]
        if members:
            reports.append(summarize(members, cat, window_samples))
    labelled = [s for s in segments if s.behavior is not None]
    if labelled:
        reports.append(summarize(labelled, Category.ALL, window_samples))
    return reports
