"""Binding acceptance criteria, each reported as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines appear in the
"acceptance criteria" section of the terminal summary.
"""
import os
import time
import warnings

import numpy as np
import pytest

from tlssc.behavior import BehaviorKind, BehaviorLabel, Category
from tlssc.calibration import CalibrationProblem, calibrate
from tlssc.dataset import load_segments
from tlssc.direct import OptimizerConfig, minimize
from tlssc.fvdm import (
    FvdmParams,
    Recorded,
    SimState,
    acceleration,
    equilibrium_spacing,
    optimal_velocity,
    simulate,
)
from tlssc.quality import anomaly_acceleration_pct, anomaly_jerk_pct, summarize
from tlssc.selftest import grid_minimum, multimodal, quadratic
from tlssc.synth import synth_oscillation, synth_stopping
from tlssc.threshold import replay_threshold
from tlssc.trajectory import MPH_TO_MPS

V40 = 40 * MPH_TO_MPS
STOP = FvdmParams(0.7510, 0.8127, 5.5761, 18.9590, V40)
BOX = [(0.0, 5.0), (0.0, 5.0), (0.0, 10.0), (0.1, 20.0)]


def test_criterion_1_fvdm_dynamics(criterion):
    t0 = time.perf_counter()
    v_s0 = optimal_velocity(STOP.s0, STOP)
    sat = abs(optimal_velocity(STOP.s0 + 20 * STOP.delta_s, STOP) - STOP.v_max) / STOP.v_max
    eq_acc = max(
        abs(acceleration(optimal_velocity(s, STOP), optimal_velocity(s, STOP), s, STOP))
        for s in np.linspace(STOP.s0, STOP.s0 + 5 * STOP.delta_s, 50)
    )
    rel_err = []
    for ratio in (0.25, 0.5, 0.75):
        u = ratio * STOP.v_max
        t = np.arange(0, 120.05, 0.1)
        sim = simulate(SimState(0, 0, u), Recorded(t, 40.0 + u * t, np.full_like(t, u)), STOP, 0.1, 120.0)
        expected = equilibrium_spacing(u, STOP)
        rel_err.append(abs(sim.spacing[-1] - expected) / expected)
    elapsed = time.perf_counter() - t0
    ok = v_s0 == 0.0 and sat <= 1e-9 and eq_acc == 0.0 and max(rel_err) <= 0.01 and elapsed < 1.0
    criterion(1, ok, f"V(s0)={v_s0} sat={sat:.1e} |a_eq|max={eq_acc:.1e} "
                     f"spacing err max={max(rel_err):.2e} ({elapsed:.2f}s)")
    assert ok


def test_criterion_2_parameter_recovery(criterion):
    t0 = time.perf_counter()
    cfg = OptimizerConfig(max_evals=2000)
    fixtures = {
        "stopping": synth_stopping(STOP, approach_m=120.0),
        "car-following": synth_oscillation(STOP),
    }
    rmse = {}
    for name, seg in fixtures.items():
        # noiseless fixtures: fit the raw columns, which are the exact simulator output
        res = calibrate(CalibrationProblem([seg], optimizer=cfg, smoothed=False))
        rmse[name] = res.rmse
    elapsed = time.perf_counter() - t0
    ok = all(v <= 0.05 for v in rmse.values()) and elapsed < 60.0
    detail = " ".join(f"{k}={v:.4f}" for k, v in rmse.items())
    criterion(2, ok, f"pooled RMSE (limit 0.05 m/s) {detail} ({elapsed:.1f}s)")
    assert ok, f"recovery RMSE above 0.05 m/s: {rmse}"


def test_criterion_3_optimizer_oracle(criterion):
    t0 = time.perf_counter()
    quad = minimize(quadratic, [(0, 1), (0, 1)], OptimizerConfig(5000))
    quad_again = minimize(quadratic, [(0, 1), (0, 1)], OptimizerConfig(5000))
    quad_grid = grid_minimum(lambda p: (p[0] - 0.3) ** 2 + (p[1] - 0.3) ** 2, [(0, 1), (0, 1)], 1001)

    runs = [minimize(multimodal, BOX, OptimizerConfig(5000), keep_history=True) for _ in range(2)]
    mm = runs[0]
    grid40 = grid_minimum(lambda p: sum(np.sin(5 * c) + (c - 0.5) ** 2 for c in p), BOX, 40)
    # the function is a sum of one-dimensional terms, so a dense 1-D grid per axis gives its exact minimum
    dense = sum(
        float(np.min(np.sin(5 * x) + (x - 0.5) ** 2)) for x in (np.linspace(lo, hi, 2_000_001) for lo, hi in BOX)
    )
    elapsed = time.perf_counter() - t0
    deterministic = runs[0].history == runs[1].history and np.array_equal(quad.x, quad_again.x)
    ok = (
        abs(quad.fun - quad_grid) <= 1e-3
        and mm.fun <= grid40 + 1e-3
        and abs(mm.fun - dense) <= 1e-3
        and max(quad.nfev, mm.nfev) <= 5000 + 2 * 4
        and deterministic
        and elapsed < 30.0
    )
    criterion(3, ok, f"quadratic {quad.fun:.2e} vs grid {quad_grid:.2e}; multimodal {mm.fun:.6f} vs "
                     f"40^4 grid {grid40:.6f}, dense {dense:.6f}; evals {mm.nfev}; "
                     f"deterministic={deterministic} ({elapsed:.1f}s)")
    assert ok


def test_criterion_4_quality_arithmetic(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    exact = True
    for _ in range(200):
        values = rng.normal(0, 8, size=int(rng.integers(1, 400)))
        # include exact boundary values, which count as normal
        values[: min(4, len(values))] = [5.0, -8.0, 15.0, -15.0][: min(4, len(values))]
        bad_a = sum(1 for v in values if v < -8 or v > 5)
        bad_j = sum(1 for v in values if v < -15 or v > 15)
        exact &= anomaly_acceleration_pct(values) == 100.0 * bad_a / len(values)
        exact &= anomaly_jerk_pct(values) == 100.0 * bad_j / len(values)
    seg = synth_oscillation(STOP, noise_std=0.2, seed=7)
    rep = summarize([seg], Category.CAR_FOLLOWING)
    elapsed = time.perf_counter() - t0
    ok = exact and rep.anomaly_jerk_pct_raw > 0 and rep.anomaly_jerk_pct_smoothed <= 0.1 and elapsed < 5.0
    criterion(4, ok, f"brute-force match={exact}; noisy jerk raw {rep.anomaly_jerk_pct_raw:.2f}% -> "
                     f"smoothed {rep.anomaly_jerk_pct_smoothed:.2f}% ({elapsed:.2f}s)")
    assert ok


def test_criterion_5_threshold_replay(criterion):
    t0 = time.perf_counter()
    notes = []
    ok = True
    for dist in (40.0, 60.0):
        r = replay_threshold(dist)
        crossed = r.follower.position[-1] > r.stopline
        min_ratio = float(r.follower.speed.min() / V40)
        ok &= r.decision.mode.value == "Following" and crossed and min_ratio >= 0.5
        notes.append(f"{dist:g}m {r.decision.mode.value} min v/v_des={min_ratio:.3f}")
    for dist, inclusive in ((90.0, False), (150.0, True)):
        r = replay_threshold(dist, inclusive=inclusive)
        target = r.stopline - r.params.s0
        pos_err = abs(r.follower.position[-1] - target)
        v_end = float(r.follower.speed[-1])
        ok &= r.decision.mode.value == "PermissionStopping" and pos_err <= 0.5 and v_end <= 0.05
        notes.append(f"{dist:g}m {r.decision.mode.value} |x-x*|={pos_err:.3f} v_end={v_end:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 5.0
    criterion(5, ok, "; ".join(notes) + f" ({elapsed:.2f}s)")
    assert ok


DATASET = os.environ.get("TLSSC_DATASET")


@pytest.mark.skipif(not DATASET, reason="set TLSSC_DATASET to a directory of published segment files")
def test_criterion_6_published_dataset(criterion):
    segs = load_segments([DATASET])
    stopping = [s for s in segs if s.behavior is not None and s.behavior.is_stopping]
    follow4 = [s for s in segs if s.behavior == BehaviorLabel(BehaviorKind.STANDARD_FOLLOW, 4)]
    rep = summarize(stopping, Category.STOPPING)
    res = calibrate(CalibrationProblem(follow4, optimizer=OptimizerConfig(2000)))
    ok = (
        abs(rep.anomaly_accel_pct_raw - 0.17) <= 0.3
        and abs(rep.anomaly_jerk_pct_raw - 1.11) <= 0.3
        and abs(res.rmse - 0.9252) <= 0.25 * 0.9252
    )
    criterion(6, ok, f"(soft) stopping raw accel {rep.anomaly_accel_pct_raw:.2f}% jerk "
                     f"{rep.anomaly_jerk_pct_raw:.2f}%; gap-4 RMSE {res.rmse:.4f}")
    if not ok:
        # soft criterion: report without failing the build
        warnings.warn("published-dataset reproduction outside tolerance", stacklevel=1)


def test_criterion_6_reported_when_skipped(criterion):
    if not DATASET:
        criterion(6, None, "(soft) published dataset not supplied; set TLSSC_DATASET to run")
