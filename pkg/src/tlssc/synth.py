"""Synthetic ground-truth segments generated by the FVDM simulator.

Fixes are laid due north from a fixed origin, so the haversine arclength of
the fix chain reproduces the simulated positions to rounding error.
"""
from __future__ import annotations

import math
from datetime import timedelta
from typing import Optional, Sequence

import numpy as np

from .behavior import AnnotationRecord, BehaviorKind, BehaviorLabel
from .fvdm import FvdmParams, Recorded, SimState, SimulationError, VirtualFree, VirtualStopped, equilibrium_spacing, simulate
from .trajectory import (
    EARTH_RADIUS_M,
    MPH_TO_MPS,
    TrajectoryPoint,
    TrajectorySegment,
    moving_average,
    parse_time,
)

ORIGIN = (43.0731, -89.4012)
START_TIME = "2024-06-01T21:00:00.000000-05:00"
OSCILLATION_MPH = (40.0, 30.0, 20.0, 30.0, 40.0)


def _clock(n: int, dt: float) -> tuple[np.ndarray, timedelta]:
    t0, offset = parse_time(START_TIME)
    step_us = int(round(dt * 1e6))
    t0_us = int(round(t0 * 1e6))
    return np.array([(t0_us + k * step_us) / 1e6 for k in range(n)]), offset


def _lat_of(x: np.ndarray) -> np.ndarray:
    return ORIGIN[0] + np.degrees(np.asarray(x) / EARTH_RADIUS_M)


def _noisy(speed: np.ndarray, x0: float, dt: float, std: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Add white noise to speed and re-integrate position with the simulator's update."""
    if std > 0:
        speed = np.maximum(speed + rng.normal(0.0, std, size=speed.shape), 0.0)
    pos = x0 + np.concatenate(([0.0], np.cumsum(speed[1:] * dt)))
    return speed, pos


def _segment(
    x: np.ndarray,
    v: np.ndarray,
    dt: float,
    behavior: BehaviorLabel,
    desired_speed: float,
    segment_id: str,
    lead_x: Optional[np.ndarray] = None,
    lead_v: Optional[np.ndarray] = None,
    annotation_fn=None,
    with_smoothed: bool = True,
    window_samples: int = 10,
) -> TrajectorySegment:
    t, offset = _clock(len(x), dt)
    lat = _lat_of(x)
    cols = {"lat": lat, "lon": np.full(len(x), ORIGIN[1]), "speed": v}
    if lead_x is not None:
        cols.update(lead_lat=_lat_of(lead_x), lead_lon=np.full(len(x), ORIGIN[1]), lead_speed=lead_v)
    if with_smoothed:
        for k in list(cols):
            cols[k + "_smoothed"] = moving_average(cols[k], window_samples)
    points = [
        TrajectoryPoint(t=float(t[i]), **{k: float(c[i]) for k, c in cols.items()}) for i in range(len(x))
    ]
    ann = annotation_fn(t) if annotation_fn else None
    return TrajectorySegment(
        points=tuple(points),
        behavior=behavior,
        desired_speed=desired_speed,
        dt_nominal=dt,
        annotation=ann,
        segment_id=segment_id,
        utc_offset=offset,
    )


def leader_profile(
    waypoints: Sequence[float], dt: float = 0.1, hold_s: float = 15.0, accel_limit: float = 1.0
) -> np.ndarray:
    """Piecewise speed profile: hold each waypoint, ramp between them at ``accel_limit``."""
    if not waypoints or any(w <= 0 for w in waypoints):
        raise ValueError("waypoints must be positive")
    hold = int(round(hold_s / dt))
    out = [np.full(hold, waypoints[0])]
    for a, b in zip(waypoints, waypoints[1:]):
        n = max(1, int(math.ceil(abs(b - a) / (accel_limit * dt))))
        out.append(a + (b - a) * np.arange(1, n + 1) / n)
        out.append(np.full(hold, b))
    return np.concatenate(out)


def synth_oscillation(
    params: FvdmParams,
    profile: Sequence[float] = tuple(w * MPH_TO_MPS for w in OSCILLATION_MPH),
    noise_std: float = 0.0,
    seed: int = 0,
    dt: float = 0.1,
    hold_s: float = 15.0,
    accel_limit: float = 1.0,
    behavior: Optional[BehaviorLabel] = None,
    initial_gap: Optional[float] = None,
    segment_id: str = "synth-oscillation",
    with_smoothed: bool = True,
) -> TrajectorySegment:
    """A leader speed oscillation (by default 40-30-20-30-40 mph) and an FVDM follower."""
    behavior = behavior or BehaviorLabel(BehaviorKind.STANDARD_FOLLOW, 4)
    lead_v = leader_profile(profile, dt, hold_s, accel_limit)
    lead_x = np.concatenate(([0.0], np.cumsum(lead_v[1:] * dt)))
    u0 = float(profile[0])
    if initial_gap is None:
        initial_gap = (
            equilibrium_spacing(u0, params) if u0 < params.v_max else params.s0 + 3.0 * params.delta_s
        )
    lead_x = lead_x + initial_gap
    t_rel = dt * np.arange(len(lead_v))
    sim = simulate(
        SimState(0.0, 0.0, u0), Recorded(t_rel, lead_x, lead_v), params, dt, t_rel[-1]
    )
    if sim.halted_at is not None:
        raise SimulationError(f"follower reached its leader at t={sim.halted_at:.1f} s")
    rng = np.random.default_rng(seed)
    v, x = _noisy(sim.speed, 0.0, dt, noise_std, rng)
    lv, lx = _noisy(lead_v, initial_gap, dt, noise_std, rng)
    return _segment(x, v, dt, behavior, params.v_max, segment_id, lx, lv, with_smoothed=with_smoothed)


def synth_stopping(
    params: FvdmParams,
    approach_m: float = 200.0,
    v_init: Optional[float] = None,
    noise_std: float = 0.0,
    seed: int = 0,
    dt: float = 0.1,
    dwell_s: float = 2.0,
    stop_speed: float = 0.05,
    behavior: Optional[BehaviorLabel] = None,
    segment_id: str = "synth-stopping",
    with_smoothed: bool = True,
) -> TrajectorySegment:
    """An approach to a stop line ``approach_m`` ahead, ending ``dwell_s`` after the stop."""
    behavior = behavior or BehaviorLabel(BehaviorKind.STOP_SIGN)
    v0 = params.v_max if v_init is None else v_init
    sim = simulate(SimState(0.0, 0.0, v0), VirtualStopped(approach_m), params, dt, 180.0)
    stopped = np.flatnonzero(sim.speed <= stop_speed)
    stopped = stopped[stopped > 0]
    if stopped.size == 0 or sim.halted_at is not None:
        raise SimulationError("vehicle did not come to rest before the stop line")
    k_stop = int(stopped[0])
    end = min(len(sim.t), k_stop + int(round(dwell_s / dt)) + 1)
    rng = np.random.default_rng(seed)
    v, x = _noisy(sim.speed[:end], 0.0, dt, noise_std, rng)
    stop_lat = float(_lat_of(np.array([approach_m]))[0])

    def annotate(t):
        return AnnotationRecord(stop_time=float(t[k_stop]), stop_line_lat=stop_lat, stop_line_lon=ORIGIN[1])

    return _segment(
        x, v, dt, behavior, params.v_max, segment_id, annotation_fn=annotate, with_smoothed=with_smoothed
    )


def synth_accelerating(
    params: FvdmParams,
    duration_s: float = 30.0,
    v_init: float = 0.0,
    noise_std: float = 0.0,
    seed: int = 0,
    dt: float = 0.1,
    behavior: Optional[BehaviorLabel] = None,
    segment_id: str = "synth-accelerating",
    with_smoothed: bool = True,
) -> TrajectorySegment:
    """Free acceleration from ``v_init`` toward ``v_max`` after permission."""
    behavior = behavior or BehaviorLabel(BehaviorKind.ACCEL_GREEN_AFTER_STOP)
    sim = simulate(SimState(0.0, 0.0, v_init), VirtualFree(), params, dt, duration_s)
    rng = np.random.default_rng(seed)
    v, x = _noisy(sim.speed, 0.0, dt, noise_std, rng)

    def annotate(t):
        return AnnotationRecord(permission_time=float(t[0]), stop_time=float(t[0]) if v_init == 0 else None)

    return _segment(x, v, dt, behavior, params.v_max, segment_id, annotation_fn=annotate, with_smoothed=with_smoothed)
