"""Full Velocity Difference Model dynamics and forward simulation.

Stopping is modelled as following a stationary leader standing on the stop
line, free acceleration as following a leader infinitely far ahead that
travels at ``v_max``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .trajectory import LongitudinalSeries, differentiate

PARAM_BOUNDS = {
    "alpha": (0.0, 5.0),
    "beta": (0.0, 5.0),
    "s0": (0.0, 10.0),
    "delta_s": (0.1, 20.0),
}
# spacing used in place of an infinitely distant leader; tanh(20) == 1.0 in float64
FREE_SPACING_FACTOR = 20.0


@dataclass(frozen=True)
class FvdmParams:
    alpha: float  # 1/s, pull toward the optimal speed
    beta: float  # 1/s, pull toward the leader's speed
    s0: float  # m
    delta_s: float  # m
    v_max: float  # m/s

    def __post_init__(self):
        for name, (lo, hi) in PARAM_BOUNDS.items():
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise ValueError(f"{name}={value} outside [{lo}, {hi}]")
        if not self.v_max > 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")

    @classmethod
    def from_vector(cls, x, v_max: float) -> "FvdmParams":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]), v_max)

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.s0, self.delta_s])


def optimal_velocity(s, p: FvdmParams):
    """``v_max * tanh((s - s0) / delta_s)``; negative below ``s0`` (not clamped)."""
    if isinstance(s, np.ndarray):
        return p.v_max * np.tanh((s - p.s0) / p.delta_s)
    return p.v_max * math.tanh((s - p.s0) / p.delta_s)


def acceleration(v, v_lead, s, p: FvdmParams):
    return p.alpha * (optimal_velocity(s, p) - v) + p.beta * (v_lead - v)


def equilibrium_spacing(u: float, p: FvdmParams) -> float:
    """Spacing at which a follower holds a leader's constant speed ``u``."""
    if not 0 <= u < p.v_max:
        raise ValueError("equilibrium needs 0 <= u < v_max")
    return p.s0 + p.delta_s * math.atanh(u / p.v_max)


# --------------------------------------------------------------------------
# leaders

@dataclass(frozen=True)
class Recorded:
    """A leader given as sampled series; ``t`` is on the simulation clock."""

    t: np.ndarray
    position: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        for name in ("t", "position", "speed"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (len(self.t) == len(self.position) == len(self.speed)) or len(self.t) < 1:
            raise ValueError("leader series must be non-empty and of equal length")

    @classmethod
    def from_series(cls, series: LongitudinalSeries) -> "Recorded":
        if series.lead_position is None:
            raise ValueError("series has no leader")
        return cls(series.t, series.lead_position, series.lead_speed)


@dataclass(frozen=True)
class VirtualStopped:
    x_stopline: float


@dataclass(frozen=True)
class VirtualFree:
    pass


LeaderSpec = Union[Recorded, VirtualStopped, VirtualFree]


@dataclass(frozen=True)
class SimState:
    t: float
    x: float
    v: float

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("speed must be non-negative")


class SimulationError(ValueError):
    pass


def simulate(
    init: SimState,
    leader: LeaderSpec,
    p: FvdmParams,
    dt: float = 0.1,
    horizon: float = 60.0,
) -> LongitudinalSeries:
    """Integrate the follower with semi-implicit Euler.

    Each step computes the acceleration at the current state, then
    ``v' = max(0, v + a*dt)`` and ``x' = x + v'*dt``. If the spacing reaches
    zero the run stops there and ``halted_at`` records the time.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon < dt - 1e-12:
        raise ValueError("horizon must be at least dt")
    n = int(round(horizon / dt))
    t0 = init.t
    times = t0 + dt * np.arange(n + 1)

    if isinstance(leader, Recorded):
        if leader.t[0] > t0 + 1e-9 or leader.t[-1] < times[-1] - 1e-9:
            raise SimulationError(
                f"recorded leader covers [{leader.t[0]:.3f}, {leader.t[-1]:.3f}] "
                f"but the run needs [{t0:.3f}, {times[-1]:.3f}]"
            )
        lead_x = np.interp(times, leader.t, leader.position)
        lead_v = np.interp(times, leader.t, leader.speed)
    elif isinstance(leader, VirtualStopped):
        if leader.x_stopline <= init.x:
            raise SimulationError("stop line must lie ahead of the initial position")
        lead_x = np.full(n + 1, float(leader.x_stopline))
        lead_v = np.zeros(n + 1)
    elif isinstance(leader, VirtualFree):
        lead_x = None
        lead_v = None
    else:
        raise TypeError(f"unsupported leader {leader!r}")

    alpha, beta, s0, ds, vmax = p.alpha, p.beta, p.s0, p.delta_s, p.v_max
    tanh = math.tanh
    xs = [init.x]
    vs = [init.v]
    x, v = init.x, init.v
    halted_at = None
    if lead_x is None:
        v_opt_free = vmax * tanh(FREE_SPACING_FACTOR * 1.0)
        for _ in range(n):
            a = alpha * (v_opt_free - v) + beta * (vmax - v)
            v = v + a * dt
            if v < 0.0:
                v = 0.0
            x = x + v * dt
            xs.append(x)
            vs.append(v)
    else:
        lx = lead_x.tolist()
        lv = lead_v.tolist()
        for k in range(n):
            s = lx[k] - x
            if s <= 0.0:
                halted_at = t0 + k * dt
                break
            a = alpha * (vmax * tanh((s - s0) / ds) - v) + beta * (lv[k] - v)
            v = v + a * dt
            if v < 0.0:
                v = 0.0
            x = x + v * dt
            xs.append(x)
            vs.append(v)
        else:
            if lx[n] - x <= 0.0:
                halted_at = times[n]

    m = len(xs)
    pos = np.array(xs)
    speed = np.array(vs)
    if m >= 3:
        accel = differentiate(speed, dt)
        jerk = differentiate(accel, dt)
    else:
        accel = np.zeros(m)
        jerk = np.zeros(m)
    return LongitudinalSeries(
        t=times[:m],
        position=pos,
        speed=speed,
        accel=accel,
        jerk=jerk,
        lead_position=None if lead_x is None else lead_x[:m],
        lead_speed=None if lead_v is None else lead_v[:m],
        halted_at=halted_at,
    )


# Published per-behavior calibration: (alpha, beta, s0, delta_s, speed RMSE m/s).
# Regression anchors only; v_max is set per segment from its desired speed.
REFERENCE_CALIBRATION = {
    "Stopping behavior": (0.7510, 0.8127, 5.5761, 18.9590, 1.6716),
    "Accelerating behavior": (0.0926, 0.0926, 5.0000, 18.8944, 1.2359),
    "Standard car-following behavior (Gap level 2)": (0.0309, 1.6770, 8.8272, 13.4895, 0.9252),
    "Standard car-following behavior (Gap level 4)": (0.0171, 3.3368, 9.9108, 19.7680, 0.9252),
    "Standard car-following behavior (Gap level 7)": (0.0309, 3.4259, 9.8148, 19.6315, 0.9252),
    "Car-following behavior when proceeding straight through the intersection (Gap level 2)": (
        0.0034, 1.6701, 6.6735, 3.0618, 0.3591),
    "Car-following behavior when proceeding straight through the intersection (Gap level 4)": (
        0.0926, 0.2160, 4.2593, 10.5414, 0.3322),
    "Car-following behavior when proceeding straight through the intersection (Gap level 7)": (
        0.0103, 0.1680, 9.2524, 10.4049, 0.2514),
}


def reference_params(group: str, v_max: float) -> FvdmParams:
    alpha, beta, s0, delta_s, _ = REFERENCE_CALIBRATION[group]
    return FvdmParams(alpha, beta, s0, delta_s, v_max)
