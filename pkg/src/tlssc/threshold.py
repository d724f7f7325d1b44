"""Replay of the car-following threshold experiment.

A leader cruises at constant speed toward a green light. The system is
engaged ``activation_distance`` behind it: if the leader is within the
detection threshold the follower tracks it through the intersection,
otherwise the follower treats the stop line as a stationary leader and
stops there awaiting permission.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .behavior import CAR_FOLLOWING_THRESHOLD_M, Mode, ModeDecision, decide_mode
from .fvdm import FvdmParams, Recorded, SimState, VirtualStopped, reference_params, simulate
from .trajectory import MPH_TO_MPS, LongitudinalSeries

FOLLOW_GROUP = "Car-following behavior when proceeding straight through the intersection (Gap level 7)"
STOP_GROUP = "Stopping behavior"


@dataclass(frozen=True)
class ThresholdReplay:
    decision: ModeDecision
    stopline: float  # m, on the follower's path (follower starts at 0)
    follower: LongitudinalSeries
    lead_position: np.ndarray
    lead_speed: np.ndarray
    params: FvdmParams

    @property
    def gap_headway(self) -> np.ndarray:
        return self.lead_position - self.follower.position

    @property
    def time_headway(self) -> np.ndarray:
        v = self.follower.speed
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(v > 0.1, self.gap_headway / v, np.nan)

    def rows(self):
        th = self.time_headway
        for i, t in enumerate(self.follower.t):
            yield {
                "t": float(t),
                "mode": self.decision.mode.value,
                "position_m": float(self.follower.position[i]),
                "speed_mps": float(self.follower.speed[i]),
                "lead_position_m": float(self.lead_position[i]),
                "lead_speed_mps": float(self.lead_speed[i]),
                "gap_headway_m": float(self.gap_headway[i]),
                "time_headway_s": None if np.isnan(th[i]) else float(th[i]),
            }


def replay_threshold(
    activation_distance: float,
    threshold: float = CAR_FOLLOWING_THRESHOLD_M,
    inclusive: bool = True,
    leader_speed: float = 40 * MPH_TO_MPS,
    desired_speed: float = 40 * MPH_TO_MPS,
    stopline_distance: float = 300.0,
    follow_params: Optional[FvdmParams] = None,
    stop_params: Optional[FvdmParams] = None,
    dt: float = 0.1,
    horizon: float = 60.0,
) -> ThresholdReplay:
    """Simulate one activation trial.

    The follower starts at position 0 with ``desired_speed``; the leader
    starts ``activation_distance`` ahead and holds ``leader_speed``. Default
    parameters are the published intersection-following (gap level 7) and
    stopping rows, with ``v_max`` set to the desired speed.
    """
    decision = decide_mode(True, activation_distance, threshold, inclusive)
    n = int(round(horizon / dt))
    t = dt * np.arange(n + 1)
    lead_v = np.full(n + 1, float(leader_speed))
    lead_x = activation_distance + leader_speed * t
    init = SimState(0.0, 0.0, float(desired_speed))
    if decision.mode is Mode.FOLLOWING:
        p = follow_params or reference_params(FOLLOW_GROUP, desired_speed)
        sim = simulate(init, Recorded(t, lead_x, lead_v), p, dt, horizon)
    else:
        p = stop_params or reference_params(STOP_GROUP, desired_speed)
        sim = simulate(init, VirtualStopped(stopline_distance), p, dt, horizon)
    m = len(sim)
    return ThresholdReplay(decision, stopline_distance, sim, lead_x[:m], lead_v[:m], p)
