"""Loading segment files and their annotation sidecars from disk.

For ``segment.csv`` the sidecar is ``segment.annotation.json``. Besides the
annotation keys it may carry ``behavior``, ``desired_speed_mph`` and
``gap_level`` for files whose CSV has no ``#`` metadata lines.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Optional

from .behavior import AnnotationRecord, BehaviorLabel
from .trajectory import MPH_TO_MPS, GapError, TrajectorySegment, interpolate_gaps, parse_segment, serialize_segment

log = logging.getLogger(__name__)

ANNOTATION_SUFFIX = ".annotation.json"


def sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ANNOTATION_SUFFIX)


def expand_inputs(paths: Iterable) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.rglob("*.csv")))
        else:
            files.append(p)
    return files


def load_segment(path, max_gap: Optional[float] = 1.0) -> list[TrajectorySegment]:
    """Read one file; returns several pieces when it has holes longer than ``max_gap``."""
    path = Path(path)
    kwargs: dict = {"segment_id": path.stem}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        kwargs["annotation"] = AnnotationRecord.from_dict(meta)
        if meta.get("behavior"):
            kwargs["behavior"] = BehaviorLabel.parse(meta["behavior"])
        if meta.get("desired_speed_mph") is not None:
            kwargs["desired_speed"] = float(meta["desired_speed_mph"]) * MPH_TO_MPS
    seg = parse_segment(path.read_text(), **kwargs)
    if max_gap is None:
        return [seg]
    try:
        return [interpolate_gaps(seg, max_gap)]
    except GapError as exc:
        log.warning("%s: %s; using %d piece(s)", path.name, exc, len(exc.pieces))
        from dataclasses import replace

        return [replace(p, segment_id=f"{seg.segment_id}#{i}") for i, p in enumerate(exc.pieces)]


def load_segments(paths: Iterable, max_gap: Optional[float] = 1.0) -> list[TrajectorySegment]:
    out = []
    for f in expand_inputs(paths):
        out.extend(load_segment(f, max_gap))
    return out


def write_segment(seg: TrajectorySegment, path, metadata: Optional[dict] = None, derived=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_segment(seg, derived=derived, metadata=metadata))
    if seg.annotation is not None:
        sidecar_path(path).write_text(json.dumps(seg.annotation.to_dict(seg.utc_offset), indent=2) + "\n")
    return path
