import json

import numpy as np
import pytest

from tlssc.calibration import CalibrationResult
from tlssc.cli import build_parser, main
from tlssc.fvdm import FvdmParams, SimulationError, reference_params
from tlssc.quality import QualityReport
from tlssc.report import report
from tlssc.synth import leader_profile, synth_oscillation, synth_stopping
from tlssc.trajectory import MPH_TO_MPS, parse_segment, serialize_segment

P = reference_params("Stopping behavior", 17.8816)


def test_oscillation_leader_hits_waypoints():
    seg = synth_oscillation(P)
    lead = seg.column("lead_speed")
    for mph in (40, 30, 20):
        assert np.min(np.abs(lead - mph * MPH_TO_MPS)) <= 0.1
    assert lead.max() == pytest.approx(40 * MPH_TO_MPS, abs=0.1)
    assert lead.min() == pytest.approx(20 * MPH_TO_MPS, abs=0.1)


def test_profile_acceleration_bounded():
    v = leader_profile([17.88, 8.94, 17.88], dt=0.1, accel_limit=1.0)
    assert np.max(np.abs(np.diff(v))) <= 0.1 + 1e-12


def test_profile_rejects_nonpositive_waypoints():
    with pytest.raises(ValueError):
        leader_profile([10.0, 0.0])


def test_synth_round_trip_and_determinism():
    a = serialize_segment(synth_oscillation(P, noise_std=0.2, seed=11))
    b = serialize_segment(synth_oscillation(P, noise_std=0.2, seed=11))
    assert a == b
    assert serialize_segment(parse_segment(a)) == a
    assert a != serialize_segment(synth_oscillation(P, noise_std=0.2, seed=12))


def test_collision_profile_raises():
    weak = FvdmParams(0.01, 0.0, 0.0, 20.0, 17.88)
    with pytest.raises(SimulationError):
        synth_oscillation(weak, profile=[17.0, 1.0], initial_gap=5.0, accel_limit=8.0)


def test_stopping_fixture_annotated():
    seg = synth_stopping(P, approach_m=120.0)
    assert seg.annotation.has_stop_line
    assert seg.points[-1].speed <= 0.05


def cal_result(group="Stopping behavior"):
    return CalibrationResult(group, FvdmParams(0.751, 0.8127, 5.5761, 18.959, 17.88), 1.67164, 2000,
                             (1.67164,), ("a",), 100)


def test_report_formats_four_decimals():
    text = report([cal_result()], [], fmt="csv")
    lines = text.strip().splitlines()
    assert len(lines) == 2
    assert lines[1] == "Stopping behavior,0.7510,0.8127,5.5761,18.9590,1.6716"


def test_report_omits_empty_quality_table():
    text = report([cal_result()], [])
    assert "FVDM calibration results" in text and "Trajectory quality" not in text
    q = QualityReport("All behaviors", 3, 1234.5, 60.0, 0.17, 0.0, 1.11, 0.0)
    text = report([cal_result(), cal_result("Accelerating behavior")], [q])
    assert text.count("\n| ") == 2 + 1 + 2  # header rows plus data rows
    assert "| 0.17 / 0.00 | 1.11 / 0.00 |" in text and "1,234.50" in text


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["calibrate", "--help"])
    out = capsys.readouterr().out
    for snippet in ("--budget", "(default: 2000)", "(default: 0.0001)", "(default: 90.0)", "0:5,0:5,0:10,0.1:20"):
        assert snippet in out


def test_cli_pipeline(tmp_path, capsys):
    seg_dir = tmp_path / "segs"
    assert run(capsys, "synth", "--kind", "oscillation", "-o", str(seg_dir / "osc.csv"))[0] == 0
    assert run(capsys, "synth", "--kind", "stopping", "-o", str(seg_dir / "stop.csv"))[0] == 0
    assert (seg_dir / "stop.annotation.json").exists()
    # same seed, same bytes
    assert run(capsys, "synth", "--kind", "oscillation", "-o", str(tmp_path / "again" / "osc.csv"))[0] == 0
    body = lambda p: [ln for ln in p.read_text().splitlines() if not ln.startswith("# output")]
    assert body(seg_dir / "osc.csv") == body(tmp_path / "again" / "osc.csv")

    code, out, _ = run(capsys, "assess", str(seg_dir))
    assert code == 0
    assert "# budget: 2000" in out and "# window_s: 1.0" in out
    data_rows = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert data_rows[0].startswith("Behavior,Trajectory segments quantity")
    assert len(data_rows) == 1 + 3

    cal_json = tmp_path / "cal.json"
    code, out, _ = run(capsys, "calibrate", str(seg_dir), "--budget", "60", "--source", "raw",
                       "--json-output", str(cal_json))
    assert code == 0
    rows = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert len(rows) == 1 + 2
    record = json.loads(cal_json.read_text())
    assert record["metadata"]["budget"] == 60
    assert {r["group"] for r in record["results"]} == {
        "Stopping behavior", "Standard car-following behavior (Gap level 4)"}

    q_json = tmp_path / "q.json"
    assert run(capsys, "assess", str(seg_dir), "--format", "json", "-o", str(q_json))[0] == 0
    code, out, _ = run(capsys, "report", "--calibration", str(cal_json), "--quality", str(q_json))
    assert code == 0 and out.count("| Stopping behavior |") == 1 and "| Stopping behaviors |" in out

    smooth_dir = tmp_path / "smooth"
    assert run(capsys, "smooth", str(seg_dir), "--jobs", "2", "-o", str(smooth_dir))[0] == 0
    smoothed = (smooth_dir / "osc.csv").read_text()
    assert "Position_m" in smoothed.splitlines()[next(i for i, ln in enumerate(smoothed.splitlines())
                                                      if not ln.startswith("#"))]


def test_simulate_writes_trajectory_format(capsys):
    code, out, _ = run(capsys, "simulate", "--leader", "stopped", "--stopline", "100", "--v0", "17.88")
    assert code == 0
    lines = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert lines[0].startswith("Time,Longitude,Latitude,Speed")
    seg = parse_segment(out)
    assert seg.points[-1].speed == 0.0
    assert float(lines[-1].split(",")[-4]) == pytest.approx(100 - P.s0, abs=0.5)


@pytest.mark.parametrize("dist, flags, mode", [
    ("40", [], "Following"), ("90", [], "Following"),
    ("90", ["--exclusive"], "PermissionStopping"), ("150", [], "PermissionStopping"),
])
def test_threshold_command(capsys, dist, flags, mode):
    code, out, _ = run(capsys, "threshold", "--activation-m", dist, *flags)
    assert code == 0
    assert f"# mode: {mode}" in out


def test_errors_are_machine_readable(tmp_path, capsys):
    code, out, err = run(capsys, "calibrate", str(tmp_path / "missing.csv"))
    assert code != 0
    record = json.loads(err.strip().splitlines()[-1])
    assert record["command"] == "calibrate" and record["error"]

    bad = tmp_path / "bad.csv"
    bad.write_text("Time,Longitude,Latitude\n2024-06-01T00:00:00Z,1,2\n")
    code, _, err = run(capsys, "assess", str(bad))
    assert code != 0 and "Speed" in json.loads(err)["message"]


def test_hidden_selftest_not_listed(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    assert "opt-selftest" not in capsys.readouterr().out
