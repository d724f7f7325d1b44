"""Behavior taxonomy, event annotations, and the car-following threshold."""
from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:
    from .trajectory import TrajectorySegment

CAR_FOLLOWING_THRESHOLD_M = 90.0
MOTION_THRESHOLD_MPS = 0.3


class Category(str, enum.Enum):
    STOPPING = "Stopping behaviors"
    ACCELERATING = "Accelerating behaviors"
    CAR_FOLLOWING = "Car-following behaviors"
    ALL = "All behaviors"


class BehaviorKind(enum.Enum):
    STOP_RED_YELLOW = "Stop before a red and yellow light"
    STOP_GREEN = "Stop before a green light"
    STOP_SIGN = "Stop before a stop sign"
    ACCEL_GREEN_BEFORE_STOP = "Accelerate after permission at a green light (Before a stop)"
    ACCEL_GREEN_AFTER_STOP = "Accelerate after permission at a green light (After a stop)"
    ACCEL_STOP_SIGN = "Accelerate after permission at a stop sign"
    STANDARD_FOLLOW = "Standard car-following behavior"
    INTERSECTION_FOLLOW = "Car-following behavior when proceeding straight through the intersection"


_STOPPING = {BehaviorKind.STOP_RED_YELLOW, BehaviorKind.STOP_GREEN, BehaviorKind.STOP_SIGN}
_ACCELERATING = {
    BehaviorKind.ACCEL_GREEN_BEFORE_STOP,
    BehaviorKind.ACCEL_GREEN_AFTER_STOP,
    BehaviorKind.ACCEL_STOP_SIGN,
}
_FOLLOWING = {BehaviorKind.STANDARD_FOLLOW, BehaviorKind.INTERSECTION_FOLLOW}
# accelerating labels that start from a standstill
_FROM_REST = {BehaviorKind.ACCEL_GREEN_AFTER_STOP, BehaviorKind.ACCEL_STOP_SIGN}

_SHORT_NAMES = {
    "stop-red-yellow": BehaviorKind.STOP_RED_YELLOW,
    "stop-green": BehaviorKind.STOP_GREEN,
    "stop-sign": BehaviorKind.STOP_SIGN,
    "accel-green-before-stop": BehaviorKind.ACCEL_GREEN_BEFORE_STOP,
    "accel-green-after-stop": BehaviorKind.ACCEL_GREEN_AFTER_STOP,
    "accel-stop-sign": BehaviorKind.ACCEL_STOP_SIGN,
    "standard-follow": BehaviorKind.STANDARD_FOLLOW,
    "intersection-follow": BehaviorKind.INTERSECTION_FOLLOW,
}
_GAP_SUFFIX = re.compile(r"\s*\(gap level (\d+)\)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class BehaviorLabel:
    """One of the eight behavior types; car-following kinds carry a gap level (2-7)."""

    kind: BehaviorKind
    gap_level: Optional[int] = None

    def __post_init__(self):
        if self.kind in _FOLLOWING:
            if self.gap_level is None or not 2 <= self.gap_level <= 7:
                raise ValueError(f"{self.kind.value} needs a gap level in 2..7, got {self.gap_level}")
        elif self.gap_level is not None:
            raise ValueError(f"{self.kind.value} takes no gap level")

    def __str__(self) -> str:
        if self.gap_level is not None:
            return f"{self.kind.value} (Gap level {self.gap_level})"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "BehaviorLabel":
        """Accept full table names or short names like ``standard-follow:4``."""
        text = text.strip()
        gap = None
        m = _GAP_SUFFIX.search(text)
        if m:
            gap = int(m.group(1))
            text = text[: m.start()]
        elif ":" in text:
            text, _, g = text.partition(":")
            gap = int(g)
        key = text.strip().lower()
        if key in _SHORT_NAMES:
            return cls(_SHORT_NAMES[key], gap)
        for kind in BehaviorKind:
            if kind.value.lower() == key:
                return cls(kind, gap)
        raise ValueError(f"unknown behavior label {text!r}")

    @property
    def category(self) -> Category:
        if self.kind in _STOPPING:
            return Category.STOPPING
        if self.kind in _ACCELERATING:
            return Category.ACCELERATING
        return Category.CAR_FOLLOWING

    @property
    def is_stopping(self) -> bool:
        return self.kind in _STOPPING

    @property
    def is_accelerating(self) -> bool:
        return self.kind in _ACCELERATING

    @property
    def is_following(self) -> bool:
        return self.kind in _FOLLOWING

    @property
    def starts_from_rest(self) -> bool:
        return self.kind in _FROM_REST

    def matches(self, group: "Category | BehaviorLabel | str") -> bool:
        if isinstance(group, str) and not isinstance(group, Category):
            try:
                group = Category(group)
            except ValueError:
                group = BehaviorLabel.parse(group)
        if isinstance(group, Category):
            return group is Category.ALL or group is self.category
        return group == self


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationRecord:
    """Manually annotated events for one segment. Times are POSIX seconds."""

    stop_time: Optional[float] = None
    green_time: Optional[float] = None
    permission_time: Optional[float] = None
    stop_line_lat: Optional[float] = None
    stop_line_lon: Optional[float] = None

    def __post_init__(self):
        if (
            self.stop_time is not None
            and self.permission_time is not None
            and self.permission_time < self.stop_time
        ):
            raise AnnotationError("permission_time precedes stop_time")
        if (self.stop_line_lat is None) != (self.stop_line_lon is None):
            raise AnnotationError("stop line needs both latitude and longitude")

    @property
    def has_stop_line(self) -> bool:
        return self.stop_line_lat is not None

    def check_within(self, t_first: float, t_last: float) -> None:
        for name in ("stop_time", "green_time", "permission_time"):
            value = getattr(self, name)
            if value is not None and not (t_first - 1e-6 <= value <= t_last + 1e-6):
                raise AnnotationError(f"{name} lies outside the segment span")

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationRecord":
        from .trajectory import parse_time

        kwargs = {}
        for name in ("stop_time", "green_time", "permission_time"):
            value = data.get(name)
            if value not in (None, ""):
                kwargs[name] = value if isinstance(value, (int, float)) else parse_time(value)[0]
        for name in ("stop_line_lat", "stop_line_lon"):
            if data.get(name) not in (None, ""):
                kwargs[name] = float(data[name])
        return cls(**kwargs)

    def to_dict(self, utc_offset=None) -> dict:
        from datetime import timedelta

        from .trajectory import format_time

        offset = utc_offset if utc_offset is not None else timedelta(0)
        out = {}
        for name in ("stop_time", "green_time", "permission_time"):
            value = getattr(self, name)
            out[name] = None if value is None else format_time(value, offset)
        out["stop_line_lat"] = self.stop_line_lat
        out["stop_line_lon"] = self.stop_line_lon
        return out


def load_annotation(path) -> AnnotationRecord:
    return AnnotationRecord.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# car-following threshold

class Mode(str, enum.Enum):
    FOLLOWING = "Following"
    PERMISSION_STOPPING = "PermissionStopping"


@dataclass(frozen=True)
class ModeDecision:
    mode: Mode
    lead_distance: Optional[float]
    threshold: float


def decide_mode(
    lead_present: bool,
    lead_distance: Optional[float] = None,
    threshold: float = CAR_FOLLOWING_THRESHOLD_M,
    inclusive: bool = True,
) -> ModeDecision:
    """Follow a detected leader within ``threshold`` metres, else slow for permission.

    With ``inclusive=False`` a leader exactly at the threshold is not followed.
    """
    if not lead_present:
        return ModeDecision(Mode.PERMISSION_STOPPING, None, threshold)
    if lead_distance is None or not lead_distance > 0:
        raise ValueError("lead_distance must be positive when a lead vehicle is present")
    within = lead_distance <= threshold if inclusive else lead_distance < threshold
    mode = Mode.FOLLOWING if within else Mode.PERMISSION_STOPPING
    return ModeDecision(mode, lead_distance, threshold)


# --------------------------------------------------------------------------
# reaction delays

@dataclass(frozen=True)
class ReactionDelays:
    green_to_motion: Optional[float]
    permission_to_motion: Optional[float]
    unresolved: tuple[str, ...] = ()


def _first_motion(t: np.ndarray, v: np.ndarray, anchor: float, threshold: float) -> Optional[float]:
    idx = np.flatnonzero((t >= anchor - 1e-9) & (v > threshold))
    return None if idx.size == 0 else float(t[idx[0]])


def reaction_delays(
    seg: "TrajectorySegment",
    ann: Optional[AnnotationRecord] = None,
    motion_threshold: float = MOTION_THRESHOLD_MPS,
) -> ReactionDelays:
    """Delay from the green / permission annotation to the first sample above
    ``motion_threshold``. Missing anchors give ``None``; anchors never followed
    by motion are listed in ``unresolved``."""
    ann = ann if ann is not None else seg.annotation
    if ann is None:
        return ReactionDelays(None, None)
    t = seg.times
    ann.check_within(t[0], t[-1])
    v = seg.column("speed")
    out: dict[str, Optional[float]] = {}
    unresolved = []
    for key, anchor in (("green_to_motion", ann.green_time), ("permission_to_motion", ann.permission_time)):
        if anchor is None:
            out[key] = None
            continue
        moved = _first_motion(t, v, anchor, motion_threshold)
        if moved is None:
            out[key] = None
            unresolved.append(key)
        else:
            out[key] = moved - anchor
    return ReactionDelays(unresolved=tuple(unresolved), **out)


# --------------------------------------------------------------------------
# label consistency

@dataclass(frozen=True)
class LabelReport:
    passed: bool
    reasons: tuple[str, ...] = field(default=())


def validate_label(
    seg: "TrajectorySegment",
    motion_threshold: float = MOTION_THRESHOLD_MPS,
    plateau_s: float = 0.5,
) -> LabelReport:
    label = seg.behavior
    if label is None:
        return LabelReport(False, ("segment has no behavior label",))
    reasons = []
    v = seg.column("speed")
    t = seg.times
    if label.is_stopping:
        n = max(1, int(math.ceil(plateau_s / seg.dt_nominal)))
        tail = v[-n:]
        if np.any(tail > motion_threshold):
            reasons.append(
                f"no terminal stop: speed over the last {plateau_s:g} s peaks at {tail.max():.2f} m/s"
            )
    if label.starts_from_rest and v[0] >= motion_threshold:
        reasons.append(f"nonzero initial speed ({v[0]:.2f} m/s)")
    if label.is_following:
        missing = [p.t for p in seg.points if not p.has_leader]
        if missing:
            times = ", ".join(f"{x - t[0]:.1f}" for x in missing)
            reasons.append(f"leader data missing at t = {times} s")
    return LabelReport(not reasons, tuple(reasons))
