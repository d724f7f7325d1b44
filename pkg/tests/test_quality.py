import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlssc.behavior import BehaviorKind, BehaviorLabel, Category
from tlssc.fvdm import reference_params
from tlssc.quality import anomaly_acceleration_pct, anomaly_jerk_pct, segment_counts, summarize, summarize_by_category
from tlssc.synth import synth_accelerating, synth_oscillation, synth_stopping
from tlssc.trajectory import TrajectoryPoint, TrajectorySegment

P = reference_params("Stopping behavior", 17.8816)


def brute_pct(values, lo, hi):
    return 100.0 * sum(1 for v in values if v < lo or v > hi) / len(values)


def test_accel_examples():
    assert anomaly_acceleration_pct(np.linspace(-8, 5, 20)) == 0.0
    assert anomaly_acceleration_pct([0.0] * 9 + [6.0]) == 10.0
    assert anomaly_acceleration_pct([5.0, -8.0]) == 0.0


def test_jerk_examples():
    assert anomaly_jerk_pct(np.zeros(10)) == 0.0
    assert anomaly_jerk_pct([20.0, -20.0] + [0.0] * 98) == 2.0


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        anomaly_jerk_pct([])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-30, 30, allow_nan=False), min_size=1, max_size=200))
def test_percentages_equal_brute_force(values):
    assert anomaly_acceleration_pct(values) == brute_pct(values, -8, 5)
    assert anomaly_jerk_pct(values) == brute_pct(values, -15, 15)


def constant_segment():
    # 10 s at 20 m/s due north
    dlat = np.degrees(2.0 / 6_371_000.0)
    pts = tuple(TrajectoryPoint(t=0.1 * i, lat=43.0 + dlat * i, lon=-89.0, speed=20.0) for i in range(101))
    return TrajectorySegment(points=pts, behavior=BehaviorLabel(BehaviorKind.STOP_SIGN))


def test_constant_segment_summary():
    rep = summarize([constant_segment()], Category.STOPPING)
    assert rep.distance == pytest.approx(200.0, rel=1e-6)
    assert rep.duration == pytest.approx(10.0)
    assert (rep.anomaly_accel_pct_raw, rep.anomaly_jerk_pct_raw) == (0.0, 0.0)
    assert (rep.anomaly_accel_pct_smoothed, rep.anomaly_jerk_pct_smoothed) == (0.0, 0.0)


def test_smoothing_reduces_jerk_anomalies():
    seg = synth_oscillation(P, noise_std=0.3, seed=4)
    rep = summarize([seg], Category.CAR_FOLLOWING)
    assert rep.anomaly_jerk_pct_raw > 0
    assert rep.anomaly_jerk_pct_smoothed < rep.anomaly_jerk_pct_raw


def test_all_behaviors_pools_counts():
    segs = [
        synth_stopping(P, noise_std=0.2, seed=1),
        synth_accelerating(P, noise_std=0.2, seed=2),
        synth_oscillation(P, noise_std=0.2, seed=3),
    ]
    reports = summarize_by_category(segs)
    assert [r.group for r in reports] == [c.value for c in Category]
    counts = [segment_counts(s) for s in segs]
    n = sum(c.samples for c in counts)
    overall = reports[-1]
    assert overall.anomaly_jerk_pct_raw == pytest.approx(100 * sum(c.jerk_raw for c in counts) / n)
    assert overall.anomaly_accel_pct_smoothed == pytest.approx(100 * sum(c.accel_smoothed for c in counts) / n)
    assert overall.segment_count == 3
    assert overall.distance == pytest.approx(sum(r.distance for r in reports[:-1]))
    for r in reports:
        for v in (r.anomaly_accel_pct_raw, r.anomaly_jerk_pct_raw, r.anomaly_jerk_pct_smoothed):
            assert 0 <= v <= 100


def test_group_mismatch_rejected():
    with pytest.raises(ValueError):
        summarize([constant_segment()], Category.CAR_FOLLOWING)
    with pytest.raises(ValueError):
        summarize([], Category.ALL)
