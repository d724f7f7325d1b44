import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlssc.fvdm import (
    FvdmParams,
    Recorded,
    SimState,
    SimulationError,
    VirtualFree,
    VirtualStopped,
    acceleration,
    equilibrium_spacing,
    optimal_velocity,
    simulate,
)

STOP = FvdmParams(0.7510, 0.8127, 5.5761, 18.9590, 17.88)

params = st.builds(
    FvdmParams,
    alpha=st.floats(0.05, 5),
    beta=st.floats(0.0, 5),
    s0=st.floats(0, 10),
    delta_s=st.floats(0.5, 20),
    v_max=st.floats(5, 35),
)


def test_optimal_velocity_anchors():
    assert optimal_velocity(STOP.s0, STOP) == 0.0
    assert abs(optimal_velocity(STOP.s0 + 20 * STOP.delta_s, STOP) - STOP.v_max) / STOP.v_max <= 1e-9
    assert optimal_velocity(STOP.s0 + STOP.delta_s, STOP) == pytest.approx(0.76159416 * STOP.v_max)


def test_optimal_velocity_negative_below_s0():
    assert optimal_velocity(STOP.s0 - 1, STOP) < 0


def test_acceleration_frozen_example():
    # independent evaluation of the expression with the stopping parameters
    expected = 0.7510 * (17.88 * math.tanh((20 - 5.5761) / 18.9590) - 10) + 0.8127 * (0 - 10)
    assert acceleration(10.0, 0.0, 20.0, STOP) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(-7.0224, abs=1e-4)


def test_acceleration_negative_when_too_fast():
    assert acceleration(20.0, 5.0, 30.0, STOP) < 0


def test_param_box_enforced():
    with pytest.raises(ValueError):
        FvdmParams(6.0, 0.1, 1.0, 1.0, 10.0)
    with pytest.raises(ValueError):
        FvdmParams(1.0, 0.1, 1.0, 0.05, 10.0)


def test_stopped_leader_converges_to_s0_before_line():
    sim = simulate(SimState(0, 0, 0), VirtualStopped(200.0), STOP, horizon=180)
    assert sim.halted_at is None
    assert sim.position[-1] == pytest.approx(200.0 - STOP.s0, abs=0.5)
    assert sim.speed[-1] <= 0.05
    assert np.all(sim.position < 200.0)


def test_free_leader_saturates():
    sim = simulate(SimState(0, 0, 0), VirtualFree(), STOP, horizon=60)
    assert np.all(np.diff(sim.speed) >= 0)
    assert sim.speed[-1] == pytest.approx(STOP.v_max, rel=0.02)
    assert sim.lead_position is None


@pytest.mark.parametrize("ratio", [0.25, 0.5, 0.75])
def test_equilibrium_spacing_matches_simulation(ratio):
    u = ratio * STOP.v_max
    t = np.arange(0, 120.05, 0.1)
    leader = Recorded(t, 30.0 + u * t, np.full_like(t, u))
    sim = simulate(SimState(0, 0, u), leader, STOP, horizon=120)
    assert sim.speed[-1] == pytest.approx(u, rel=0.01)
    assert sim.spacing[-1] == pytest.approx(equilibrium_spacing(u, STOP), rel=0.01)


def test_recorded_leader_must_cover_horizon():
    t = np.arange(0, 10, 0.1)
    with pytest.raises(SimulationError):
        simulate(SimState(0, 0, 5), Recorded(t, 50 + 5 * t, np.full_like(t, 5.0)), STOP, horizon=20)


def test_stop_line_must_be_ahead():
    with pytest.raises(SimulationError):
        simulate(SimState(0, 10, 5), VirtualStopped(5.0), STOP)


def test_collision_halts():
    t = np.arange(0, 30.05, 0.1)
    leader = Recorded(t, np.full_like(t, 3.0), np.zeros_like(t))
    sim = simulate(SimState(0, 0, 20), leader, FvdmParams(0.01, 0.0, 0.0, 20.0, 20.0), horizon=30)
    assert sim.halted_at is not None
    assert len(sim) < len(t)


@settings(max_examples=50, deadline=None)
@given(params)
def test_equilibrium_has_zero_acceleration(p):
    for s in (p.s0 + 0.3 * p.delta_s, p.s0 + p.delta_s, p.s0 + 3 * p.delta_s):
        v = optimal_velocity(s, p)
        assert acceleration(v, v, s, p) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(params, st.floats(0, 35))
def test_stopped_simulation_never_negative_or_past_line(p, v0):
    sim = simulate(SimState(0, 0, min(v0, p.v_max)), VirtualStopped(300.0), p, horizon=30)
    assert np.all(sim.speed >= 0)
    if sim.halted_at is None:
        assert np.all(sim.position < 300.0)
