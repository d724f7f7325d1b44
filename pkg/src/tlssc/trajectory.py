"""Trajectory ingestion, repair, smoothing and longitudinal projection.

Segment files are comma-separated with the dataset's column names
(``Time, Longitude, Latitude, Speed`` plus ``*_smoothed`` and ``*_lead``
variants). Optional ``# key: value`` comment lines at the top of a file carry
segment metadata (behavior label, desired speed, gap level).
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Iterable, Optional, Sequence

import numpy as np

from .behavior import AnnotationRecord, BehaviorLabel

EARTH_RADIUS_M = 6_371_000.0
MPH_TO_MPS = 0.44704
DT_NOMINAL = 0.1

# column name -> TrajectoryPoint attribute
COLUMN_MAP = {
    "Time": "t",
    "Longitude": "lon",
    "Latitude": "lat",
    "Speed": "speed",
    "Longitude_smoothed": "lon_smoothed",
    "Latitude_smoothed": "lat_smoothed",
    "Speed_smoothed": "speed_smoothed",
    "Longitude_lead": "lead_lon",
    "Latitude_lead": "lead_lat",
    "Speed_lead": "lead_speed",
    "Longitude_lead_smoothed": "lead_lon_smoothed",
    "Latitude_lead_smoothed": "lead_lat_smoothed",
    "Speed_lead_smoothed": "lead_speed_smoothed",
}
# the dataset also names the follower columns with a ``_follow`` infix
FOLLOW_ALIASES = {
    "Longitude_follow": "Longitude",
    "Latitude_follow": "Latitude",
    "Speed_follow": "Speed",
    "Longitude_follow_smoothed": "Longitude_smoothed",
    "Latitude_follow_smoothed": "Latitude_smoothed",
    "Speed_follow_smoothed": "Speed_smoothed",
}
MANDATORY_COLUMNS = ("Time", "Longitude", "Latitude", "Speed")
ACCURACY_COLUMNS = (
    "Elevation",
    "Bearing",
    "Horizontal_accuracy",
    "Vertical_accuracy",
    "PDOP",
    "HDOP",
    "VDOP",
    "Instrument_height",
)
DERIVED_COLUMNS = ("Position_m", "Accel_mps2", "Jerk_mps3", "Spacing_m")

_OPTIONAL_FIELDS = tuple(v for k, v in COLUMN_MAP.items() if k not in MANDATORY_COLUMNS)


class TrajectoryError(ValueError):
    """Base class for trajectory data problems."""


class SchemaError(TrajectoryError):
    """A mandatory column is missing from the header."""

    def __init__(self, column: str):
        super().__init__(f"missing mandatory column {column!r}")
        self.column = column


class RowError(TrajectoryError):
    """A row could not be parsed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class StructureError(TrajectoryError):
    """The segment violates a structural invariant (ordering, length)."""


class GapError(TrajectoryError):
    """Holes longer than the allowed maximum were found.

    ``gaps`` holds ``(t_before, t_after)`` pairs bounding each hole and
    ``pieces`` the contiguous, interpolated sub-segments between them.
    """

    def __init__(self, gaps: list[tuple[float, float]], pieces: list["TrajectorySegment"]):
        desc = ", ".join(f"[{a:.3f}, {b:.3f}]" for a, b in gaps)
        super().__init__(f"{len(gaps)} gap(s) exceed max_gap: {desc}")
        self.gaps = gaps
        self.pieces = pieces


class DataError(TrajectoryError):
    """Kinematically impossible data, e.g. a leader behind its follower."""


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    lat: float
    lon: float
    speed: float
    lat_smoothed: Optional[float] = None
    lon_smoothed: Optional[float] = None
    speed_smoothed: Optional[float] = None
    lead_lat: Optional[float] = None
    lead_lon: Optional[float] = None
    lead_speed: Optional[float] = None
    lead_lat_smoothed: Optional[float] = None
    lead_lon_smoothed: Optional[float] = None
    lead_speed_smoothed: Optional[float] = None
    # accuracy / auxiliary columns, by original column name
    extras: tuple[tuple[str, Optional[float]], ...] = ()

    def __post_init__(self):
        if not (self.speed >= 0):
            raise TrajectoryError(f"negative speed {self.speed} at t={self.t}")
        if not -90.0 <= self.lat <= 90.0:
            raise TrajectoryError(f"latitude {self.lat} out of range at t={self.t}")
        if not -180.0 <= self.lon <= 180.0:
            raise TrajectoryError(f"longitude {self.lon} out of range at t={self.t}")

    @property
    def has_leader(self) -> bool:
        return None not in (self.lead_lat, self.lead_lon, self.lead_speed)


@dataclass(frozen=True)
class TrajectorySegment:
    """An ordered run of samples plus the behavior metadata it was recorded under."""

    points: tuple[TrajectoryPoint, ...]
    behavior: Optional[BehaviorLabel] = None
    desired_speed: Optional[float] = None  # m/s
    gap_level: Optional[int] = None
    dt_nominal: float = DT_NOMINAL
    annotation: Optional[AnnotationRecord] = None
    segment_id: str = ""
    utc_offset: timedelta = timedelta(0)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 2:
            raise StructureError(f"segment {self.segment_id!r} has fewer than 2 points")
        t = self.times
        if np.any(np.diff(t) <= 0):
            i = int(np.argmax(np.diff(t) <= 0))
            raise StructureError(
                f"segment {self.segment_id!r}: time not strictly increasing at sample {i + 1}"
            )
        if self.gap_level is None and self.behavior is not None:
            object.__setattr__(self, "gap_level", self.behavior.gap_level)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def times(self) -> np.ndarray:
        return np.array([p.t for p in self.points], dtype=float)

    def column(self, name: str) -> np.ndarray:
        """Point attribute ``name`` as a float array; missing values become NaN."""
        return np.array(
            [np.nan if getattr(p, name) is None else getattr(p, name) for p in self.points],
            dtype=float,
        )

    def has_column(self, name: str) -> bool:
        return all(getattr(p, name) is not None for p in self.points)

    @property
    def has_leader(self) -> bool:
        return all(p.has_leader for p in self.points)

    @property
    def duration(self) -> float:
        return self.points[-1].t - self.points[0].t

    def sliced(self, start: int, stop: Optional[int] = None) -> "TrajectorySegment":
        return replace(self, points=self.points[start:stop])

    def with_points(self, points: Sequence[TrajectoryPoint]) -> "TrajectorySegment":
        return replace(self, points=tuple(points))


@dataclass(frozen=True)
class LongitudinalSeries:
    """Scalar kinematics along the travel path.

    ``halted_at`` is set by the simulator when a run stopped early because the
    spacing to the (real or virtual) leader reached zero.
    """

    t: np.ndarray
    position: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    jerk: np.ndarray
    lead_position: Optional[np.ndarray] = None
    lead_speed: Optional[np.ndarray] = None
    halted_at: Optional[float] = field(default=None)

    @property
    def spacing(self) -> Optional[np.ndarray]:
        if self.lead_position is None:
            return None
        return self.lead_position - self.position

    def __len__(self) -> int:
        return len(self.t)


# --------------------------------------------------------------------------
# parsing / serialization

_FRACTION = re.compile(r"\.(\d+)")


def parse_time(text: str) -> tuple[float, timedelta]:
    """Parse an ISO 8601 timestamp with zone offset into (POSIX seconds, offset)."""
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    # Python 3.10 accepts only 3 or 6 fractional digits
    s = _FRACTION.sub(lambda m: "." + (m.group(1) + "000000")[:6], s, count=1)
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no zone offset")
    return dt.timestamp(), dt.utcoffset()


def format_time(t: float, offset: timedelta) -> str:
    tz = timezone(offset)
    micros = round(t * 1e6)
    dt = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(microseconds=micros)
    return dt.astimezone(tz).isoformat(timespec="microseconds")


def _float_or_none(text: str) -> Optional[float]:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na", "null", "none"):
        return None
    return float(text)


def parse_segment(
    raw: str | Iterable[str],
    schema: Optional[dict[str, str]] = None,
    *,
    segment_id: str = "",
    behavior: Optional[BehaviorLabel] = None,
    desired_speed: Optional[float] = None,
    annotation: Optional[AnnotationRecord] = None,
    dt_nominal: float = DT_NOMINAL,
) -> TrajectorySegment:
    """Parse a delimited-text segment.

    Args:
        raw: File contents or an iterable of lines.
        schema: Optional renaming map applied to header names before lookup,
            e.g. ``{"Spd": "Speed"}``.
        segment_id: Identifier used in error messages.
        behavior, desired_speed: Override metadata found in ``#`` header lines.
        annotation: Annotation record to attach.

    Raises:
        SchemaError: a mandatory column is missing.
        RowError: a value cannot be parsed; carries the 1-based line number.
        StructureError: timestamps do not strictly increase.
    """
    lines = raw.splitlines() if isinstance(raw, str) else [ln.rstrip("\r\n") for ln in raw]
    meta: dict[str, str] = {}
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
            body_start = i + 1
        else:
            break

    reader = csv.reader(lines[body_start:])
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("Time") from None
    schema = schema or {}
    header = [schema.get(h, h) for h in header]
    header = [FOLLOW_ALIASES.get(h, h) for h in header]
    for col in MANDATORY_COLUMNS:
        if col not in header:
            raise SchemaError(col)
    index = {h: i for i, h in enumerate(header)}
    extra_cols = [h for h in header if h not in COLUMN_MAP and h not in DERIVED_COLUMNS]

    points = []
    offset = timedelta(0)
    for row_no, row in enumerate(reader):
        line_no = body_start + row_no + 2
        if not row or all(c.strip() == "" for c in row):
            continue
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        try:
            t, offset = parse_time(row[index["Time"]])
        except ValueError as exc:
            raise RowError(line_no, f"bad timestamp: {exc}") from None
        kwargs = {"t": t}
        try:
            for col, attr in COLUMN_MAP.items():
                if col == "Time" or col not in index:
                    continue
                value = _float_or_none(row[index[col]])
                if value is None and col in MANDATORY_COLUMNS:
                    raise ValueError(f"empty mandatory value in column {col!r}")
                kwargs[attr] = value
            extras = tuple((c, _float_or_none(row[index[c]])) for c in extra_cols)
        except ValueError as exc:
            raise RowError(line_no, str(exc)) from None
        try:
            points.append(TrajectoryPoint(extras=extras, **kwargs))
        except TrajectoryError as exc:
            raise RowError(line_no, str(exc)) from None

    for prev, (k, cur) in zip(points, enumerate(points[1:], start=1)):
        if cur.t <= prev.t:
            raise StructureError(f"time not strictly increasing at data row {k + 1}")

    if behavior is None and meta.get("behavior"):
        behavior = BehaviorLabel.parse(meta["behavior"])
    if desired_speed is None:
        if "desired_speed_mph" in meta:
            desired_speed = float(meta["desired_speed_mph"]) * MPH_TO_MPS
        elif "desired_speed_mps" in meta:
            desired_speed = float(meta["desired_speed_mps"])
    gap_level = int(meta["gap_level"]) if meta.get("gap_level") else None
    if "dt_nominal" in meta:
        dt_nominal = float(meta["dt_nominal"])
    return TrajectorySegment(
        points=tuple(points),
        behavior=behavior,
        desired_speed=desired_speed,
        gap_level=gap_level,
        dt_nominal=dt_nominal,
        annotation=annotation,
        segment_id=segment_id or meta.get("segment_id", ""),
        utc_offset=offset,
    )


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def serialize_segment(
    seg: TrajectorySegment,
    derived: Optional[LongitudinalSeries] = None,
    metadata: Optional[dict[str, object]] = None,
) -> str:
    """Write a segment in the input format, optionally with derived columns appended."""
    out = io.StringIO()
    meta: dict[str, object] = {}
    if seg.segment_id:
        meta["segment_id"] = seg.segment_id
    if seg.behavior is not None:
        meta["behavior"] = str(seg.behavior)
    if seg.desired_speed is not None:
        meta["desired_speed_mps"] = repr(float(seg.desired_speed))
    if seg.gap_level is not None:
        meta["gap_level"] = seg.gap_level
    if seg.dt_nominal != DT_NOMINAL:
        meta["dt_nominal"] = repr(seg.dt_nominal)
    # caller metadata never overrides the segment's own fields
    for k, v in (metadata or {}).items():
        meta.setdefault(k, v)
    for k, v in meta.items():
        out.write(f"# {k}: {v}\n")

    cols = [c for c, a in COLUMN_MAP.items() if c in MANDATORY_COLUMNS or seg.has_column(a)]
    # keep partially-populated optional columns too (e.g. leader with holes)
    for c, a in COLUMN_MAP.items():
        if c not in cols and any(getattr(p, a) is not None for p in seg.points):
            cols.append(c)
    extra_cols = [name for name, _ in seg.points[0].extras]
    header = cols + extra_cols
    if derived is not None:
        header += list(DERIVED_COLUMNS)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    spacing = derived.spacing if derived is not None else None
    for i, p in enumerate(seg.points):
        row = [format_time(p.t, seg.utc_offset)]
        row += [_fmt(getattr(p, COLUMN_MAP[c])) for c in cols[1:]]
        ex = dict(p.extras)
        row += [_fmt(ex.get(c)) for c in extra_cols]
        if derived is not None:
            row += [
                _fmt(derived.position[i]),
                _fmt(derived.accel[i]),
                _fmt(derived.jerk[i]),
                "" if spacing is None else _fmt(spacing[i]),
            ]
        writer.writerow(row)
    return out.getvalue()


def read_segment(path, **kwargs) -> TrajectorySegment:
    from pathlib import Path

    path = Path(path)
    kwargs.setdefault("segment_id", path.stem)
    return parse_segment(path.read_text(), **kwargs)


# --------------------------------------------------------------------------
# repair and smoothing

_INTERP_FIELDS = ("lat", "lon", "speed") + _OPTIONAL_FIELDS


def interpolate_gaps(seg: TrajectorySegment, max_gap: float = 1.0) -> TrajectorySegment:
    """Fill missing samples by linear interpolation at ``dt_nominal``.

    An interval counts as a hole when it exceeds 1.5 nominal steps. Holes up
    to ``max_gap`` seconds are filled; longer ones raise :class:`GapError`,
    which carries the bounding timestamps and the filled pieces between them.
    """
    dt = seg.dt_nominal
    if max_gap <= dt:
        raise ValueError(f"max_gap ({max_gap}) must exceed dt_nominal ({dt})")
    pts = seg.points
    pieces: list[list[TrajectoryPoint]] = [[pts[0]]]
    gaps: list[tuple[float, float]] = []
    for a, b in zip(pts, pts[1:]):
        span = b.t - a.t
        if span > 1.5 * dt:
            if span > max_gap + 1e-9:
                gaps.append((a.t, b.t))
                pieces.append([b])
                continue
            n_missing = int(round(span / dt)) - 1
            for k in range(1, n_missing + 1):
                w = k / (n_missing + 1)
                pieces[-1].append(_lerp_point(a, b, w))
        pieces[-1].append(b)

    if gaps:
        segs = [seg.with_points(p) for p in pieces if len(p) >= 2]
        raise GapError(gaps, segs)
    if len(pieces[0]) == len(pts):
        return seg
    return seg.with_points(pieces[0])


def _lerp_point(a: TrajectoryPoint, b: TrajectoryPoint, w: float) -> TrajectoryPoint:
    kwargs = {"t": a.t + w * (b.t - a.t)}
    for name in _INTERP_FIELDS:
        va, vb = getattr(a, name), getattr(b, name)
        kwargs[name] = None if va is None or vb is None else va + w * (vb - va)
    return TrajectoryPoint(**kwargs)


def moving_average(series: Sequence[float], window_samples: int = 10) -> np.ndarray:
    """Centered moving average over ``i - N//2 .. i + N//2``.

    Near the ends the window shrinks symmetrically to the largest radius that
    stays in range, so the output has the input's length and both constants
    and linear ramps pass through unchanged. The end samples are kept as is.
    """
    z = np.asarray(series, dtype=float)
    if z.size == 0:
        raise ValueError("cannot smooth an empty series")
    if window_samples < 1:
        raise ValueError("window_samples must be >= 1")
    half = window_samples // 2
    n = z.size
    csum = np.concatenate(([0.0], np.cumsum(z)))
    idx = np.arange(n)
    radius = np.minimum(np.minimum(idx, n - 1 - idx), half)
    lo = idx - radius
    hi = idx + radius + 1
    return (csum[hi] - csum[lo]) / (hi - lo)


def smooth_segment(seg: TrajectorySegment, window_samples: int = 10) -> TrajectorySegment:
    """Return ``seg`` with the ``*_smoothed`` fields recomputed from raw values."""
    updates = {}
    for raw in ("lat", "lon", "speed", "lead_lat", "lead_lon", "lead_speed"):
        if seg.has_column(raw):
            updates[raw + "_smoothed"] = moving_average(seg.column(raw), window_samples)
    points = [
        replace(p, **{k: float(v[i]) for k, v in updates.items()}) for i, p in enumerate(seg.points)
    ]
    return seg.with_points(points)


# --------------------------------------------------------------------------
# geometry and kinematics

def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in metres; accepts scalars or arrays (degrees)."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def differentiate(series: Sequence[float], dt: float) -> np.ndarray:
    """Central differences inside, one-sided differences at both ends."""
    v = np.asarray(series, dtype=float)
    if v.size < 3:
        raise ValueError("differentiate needs at least 3 samples")
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.gradient(v, dt, edge_order=1)


def _pick(seg: TrajectorySegment, name: str, smoothed: bool, window: int) -> np.ndarray:
    if not smoothed:
        return seg.column(name)
    if seg.has_column(name + "_smoothed"):
        return seg.column(name + "_smoothed")
    return moving_average(seg.column(name), window)


def arclength_of(lat, lon, chain_lat, chain_lon, chain_s) -> np.ndarray:
    """Arclength coordinate of points projected onto a polyline.

    The polyline is the follower's fix chain with cumulative arclength
    ``chain_s``. Points beyond either end are extrapolated along the end
    segment's direction.
    """
    lat = np.atleast_1d(np.asarray(lat, dtype=float))
    lon = np.atleast_1d(np.asarray(lon, dtype=float))
    lat0, lon0 = float(chain_lat[0]), float(chain_lon[0])
    kx = math.radians(1.0) * EARTH_RADIUS_M * math.cos(math.radians(lat0))
    ky = math.radians(1.0) * EARTH_RADIUS_M
    cx, cy = (np.asarray(chain_lon) - lon0) * kx, (np.asarray(chain_lat) - lat0) * ky
    px, py = (lon - lon0) * kx, (lat - lat0) * ky

    seg_dx, seg_dy = np.diff(cx), np.diff(cy)
    seg_len2 = seg_dx**2 + seg_dy**2
    keep = seg_len2 > 1e-12
    if not np.any(keep):
        # the follower never moved; distance from its fix is the best available
        return haversine(chain_lat[0], chain_lon[0], lat, lon)
    starts = np.flatnonzero(keep)
    ax, ay = cx[starts], cy[starts]
    dx, dy, l2 = seg_dx[starts], seg_dy[starts], seg_len2[starts]
    s_start = np.asarray(chain_s)[starts]
    s_len = np.asarray(chain_s)[starts + 1] - s_start

    # (points, segments)
    u = ((px[:, None] - ax) * dx + (py[:, None] - ay) * dy) / l2
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    lo[:, 0] = -np.inf
    hi[:, -1] = np.inf
    uc = np.clip(u, lo, hi)
    qx, qy = ax + uc * dx, ay + uc * dy
    d2 = (px[:, None] - qx) ** 2 + (py[:, None] - qy) ** 2
    best = np.argmin(d2, axis=1)
    rows = np.arange(len(px))
    return s_start[best] + uc[rows, best] * s_len[best]


def project_to_path(
    seg: TrajectorySegment,
    smoothed: bool = True,
    window_samples: int = 10,
    require_positive_spacing: Optional[bool] = None,
) -> LongitudinalSeries:
    """Map a segment onto arclength along the follower's own fix chain.

    Args:
        seg: Segment with at least two points.
        smoothed: Use the ``*_smoothed`` columns (computing them with
            :func:`moving_average` when the file does not carry them) rather
            than the raw ones.
        require_positive_spacing: Raise :class:`DataError` when a leader is
            at or behind the follower. Defaults to True for car-following
            labels.

    Jerk comes from differentiating the acceleration of the speed column, not
    from double-differencing position.
    """
    if len(seg) < 2:
        raise StructureError("projection needs at least 2 points")
    lat = _pick(seg, "lat", smoothed, window_samples)
    lon = _pick(seg, "lon", smoothed, window_samples)
    speed = _pick(seg, "speed", smoothed, window_samples)
    t = seg.times
    pos = np.concatenate(([0.0], np.cumsum(haversine(lat[:-1], lon[:-1], lat[1:], lon[1:]))))
    dt = seg.dt_nominal
    if len(seg) >= 3:
        accel = differentiate(speed, dt)
        jerk = differentiate(accel, dt)
    else:
        accel = np.full(len(seg), (speed[1] - speed[0]) / (t[1] - t[0]))
        jerk = np.zeros(len(seg))

    lead_pos = lead_speed = None
    if seg.has_leader:
        llat = _pick(seg, "lead_lat", smoothed, window_samples)
        llon = _pick(seg, "lead_lon", smoothed, window_samples)
        lead_speed = _pick(seg, "lead_speed", smoothed, window_samples)
        lead_pos = arclength_of(llat, llon, lat, lon, pos)
        if require_positive_spacing is None:
            require_positive_spacing = seg.behavior is not None and seg.behavior.is_following
        if require_positive_spacing:
            bad = np.flatnonzero(lead_pos - pos <= 0)
            if bad.size:
                raise DataError(
                    f"segment {seg.segment_id!r}: leader not ahead of follower at "
                    f"{bad.size} sample(s), first at t={t[bad[0]]:.3f}"
                )
    return LongitudinalSeries(
        t=t - t[0],
        position=pos,
        speed=speed,
        accel=accel,
        jerk=jerk,
        lead_position=lead_pos,
        lead_speed=lead_speed,
    )
