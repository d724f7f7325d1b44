"""Fit FVDM parameters to observed trajectories by minimizing speed RMSE.

Every segment is simulated open loop from its first observed state, with its
own ``v_max`` taken from the configured desired speed. The four remaining
parameters are shared across the group, and the objective is the RMSE pooled
over all samples of all segments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .behavior import BehaviorLabel
from .direct import OptimizerConfig, minimize
from .fvdm import (
    PARAM_BOUNDS,
    FvdmParams,
    LeaderSpec,
    Recorded,
    SimState,
    VirtualFree,
    VirtualStopped,
    simulate,
)
from .trajectory import LongitudinalSeries, TrajectorySegment, _pick, arclength_of, project_to_path

PARAM_NAMES = ("alpha", "beta", "s0", "delta_s")
DEFAULT_BOUNDS = tuple(PARAM_BOUNDS[k] for k in PARAM_NAMES)


class ScenarioError(ValueError):
    def __init__(self, segment_id: str, message: str):
        super().__init__(f"segment {segment_id!r}: {message}")
        self.segment_id = segment_id


def speed_rmse(simulated, observed) -> float:
    sim = np.asarray(simulated, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if sim.shape != obs.shape:
        raise ValueError(f"length mismatch: {sim.shape} vs {obs.shape}")
    if sim.size == 0:
        raise ValueError("empty series")
    return float(np.sqrt(np.mean((sim - obs) ** 2)))


def group_key(label: BehaviorLabel) -> str:
    """Calibration row a label belongs to: stopping and accelerating kinds are
    pooled, car-following rows are per kind and gap level."""
    if label.is_following:
        return str(label)
    return "Stopping behavior" if label.is_stopping else "Accelerating behavior"


@dataclass(frozen=True)
class Scenario:
    segment_id: str
    init: SimState
    leader: LeaderSpec
    observed: LongitudinalSeries
    v_max: float
    dt: float

    def __iter__(self):
        return iter((self.init, self.leader))

    @property
    def horizon(self) -> float:
        return float(self.observed.t[-1] - self.observed.t[0])

    def run(self, x) -> LongitudinalSeries:
        return simulate(self.init, self.leader, FvdmParams.from_vector(x, self.v_max), self.dt, self.horizon)

    def squared_error(self, x) -> tuple[float, int]:
        """Sum of squared speed errors and sample count; ``inf`` after a virtual collision."""
        sim = self.run(x)
        if sim.halted_at is not None:
            return math.inf, len(self.observed)
        predicted = np.interp(self.observed.t, sim.t, sim.speed)
        err = predicted - self.observed.speed
        return float(err @ err), len(err)


def build_scenario(seg: TrajectorySegment, smoothed: bool = True, window_samples: int = 10) -> Scenario:
    """Map a labelled segment to its initial state and leader.

    Stopping segments follow a stationary virtual leader on the annotated stop
    line and end at the annotated stop time; accelerating segments follow a
    free virtual leader; car-following segments replay the recorded leader.
    """
    sid = seg.segment_id
    label = seg.behavior
    if label is None:
        raise ScenarioError(sid, "no behavior label")
    if not seg.desired_speed or seg.desired_speed <= 0:
        raise ScenarioError(sid, "desired speed must be positive")
    ann = seg.annotation

    if label.is_stopping:
        if ann is None or not ann.has_stop_line:
            raise ScenarioError(sid, "stopping segment lacks a stop-line annotation")
        if ann.stop_time is not None:
            keep = int(np.searchsorted(seg.times, ann.stop_time + 1e-9, side="right"))
            if keep < 3:
                raise ScenarioError(sid, "annotated stop time leaves fewer than 3 samples")
            seg = seg.sliced(0, keep)
    elif label.is_following and not seg.has_leader:
        raise ScenarioError(sid, "car-following segment lacks leader columns")

    obs = project_to_path(seg, smoothed=smoothed, window_samples=window_samples)
    init = SimState(0.0, float(obs.position[0]), float(max(obs.speed[0], 0.0)))

    leader: LeaderSpec
    if label.is_stopping:
        lat = _pick(seg, "lat", smoothed, window_samples)
        lon = _pick(seg, "lon", smoothed, window_samples)
        x_stop = float(arclength_of(ann.stop_line_lat, ann.stop_line_lon, lat, lon, obs.position)[0])
        if x_stop <= init.x:
            raise ScenarioError(sid, "stop line is not ahead of the first sample")
        leader = VirtualStopped(x_stop)
    elif label.is_accelerating:
        leader = VirtualFree()
    else:
        leader = Recorded.from_series(obs)
    return Scenario(sid, init, leader, obs, float(seg.desired_speed), seg.dt_nominal)


@dataclass
class CalibrationProblem:
    segments: Sequence[TrajectorySegment]
    bounds: Sequence[tuple[float, float]] = DEFAULT_BOUNDS
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    smoothed: bool = True
    window_samples: int = 10

    def __post_init__(self):
        if not self.segments:
            raise ValueError("calibration needs at least one segment")
        keys = {group_key(s.behavior) for s in self.segments if s.behavior is not None}
        if any(s.behavior is None for s in self.segments) or len(keys) != 1:
            raise ValueError(f"segments must share one behavior group, got {sorted(keys)}")
        for (lo, hi), name in zip(self.bounds, PARAM_NAMES):
            blo, bhi = PARAM_BOUNDS[name]
            if not blo <= lo < hi <= bhi:
                raise ValueError(f"bounds for {name} must satisfy {blo} <= lo < hi <= {bhi}")

    @property
    def group(self) -> str:
        return group_key(self.segments[0].behavior)


@dataclass(frozen=True)
class CalibrationResult:
    group: str
    params: FvdmParams  # v_max is the largest per-segment value in the group
    rmse: float
    evals: int
    per_segment_rmse: tuple[float, ...]
    segment_ids: tuple[str, ...]
    sample_count: int
    aggregation: str = "pooled"

    def to_dict(self) -> dict:
        p = self.params
        return {
            "group": self.group,
            "alpha": p.alpha,
            "beta": p.beta,
            "s0": p.s0,
            "delta_s": p.delta_s,
            "v_max": p.v_max,
            "rmse": self.rmse,
            "evals": self.evals,
            "sample_count": self.sample_count,
            "aggregation": self.aggregation,
            "segments": [
                {"segment_id": sid, "rmse": r} for sid, r in zip(self.segment_ids, self.per_segment_rmse)
            ],
        }


def pooled_rmse(scenarios: Sequence[Scenario], x) -> float:
    sse = 0.0
    n = 0
    for sc in scenarios:
        e, m = sc.squared_error(x)
        sse += e
        n += m
    return math.sqrt(sse / n)


def calibrate(problem: CalibrationProblem) -> CalibrationResult:
    scenarios = []
    for seg in problem.segments:
        try:
            scenarios.append(build_scenario(seg, problem.smoothed, problem.window_samples))
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(seg.segment_id, str(exc)) from exc

    res = minimize(lambda x: pooled_rmse(scenarios, x), problem.bounds, problem.optimizer)
    x = res.x
    per_seg = []
    for sc in scenarios:
        e, m = sc.squared_error(x)
        per_seg.append(math.sqrt(e / m))
    v_rep = max(sc.v_max for sc in scenarios)
    return CalibrationResult(
        group=problem.group,
        params=FvdmParams.from_vector(x, v_rep),
        rmse=pooled_rmse(scenarios, x),
        evals=res.nfev,
        per_segment_rmse=tuple(per_seg),
        segment_ids=tuple(sc.segment_id for sc in scenarios),
        sample_count=sum(len(sc.observed) for sc in scenarios),
    )
