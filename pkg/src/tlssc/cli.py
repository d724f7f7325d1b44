"""Command-line entry point: ``tlssc <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .behavior import CAR_FOLLOWING_THRESHOLD_M, BehaviorLabel
from .calibration import DEFAULT_BOUNDS, PARAM_NAMES, CalibrationProblem, CalibrationResult, calibrate, group_key
from .dataset import load_segments, write_segment
from .direct import OptimizerConfig
from .fvdm import FvdmParams, Recorded, SimState, VirtualFree, VirtualStopped, reference_params, simulate
from .quality import QualityReport, summarize_by_category
from .report import CALIBRATION_HEADER, QUALITY_HEADER, calibration_rows, quality_rows, report, to_csv
from .synth import synth_accelerating, synth_oscillation, synth_stopping
from .threshold import replay_threshold
from .trajectory import DT_NOMINAL, MPH_TO_MPS, project_to_path, smooth_segment

log = logging.getLogger("tlssc")

STOP_GROUP = "Stopping behavior"


def parse_bounds(text: str) -> tuple[tuple[float, float], ...]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != len(PARAM_NAMES):
        raise argparse.ArgumentTypeError(f"expected {len(PARAM_NAMES)} lo:hi pairs")
    out = []
    for p in parts:
        lo, _, hi = p.partition(":")
        out.append((float(lo), float(hi)))
    return tuple(out)


def _bounds_text(bounds) -> str:
    return ",".join(f"{lo:g}:{hi:g}" for lo, hi in bounds)


def _metadata(args: argparse.Namespace) -> dict:
    meta = {"tlssc_version": __version__}
    for k, v in sorted(vars(args).items()):
        if k in ("func",) or callable(v):
            continue
        if k == "bounds":
            v = _bounds_text(v)
        elif isinstance(v, (list, tuple)):
            v = " ".join(map(str, v))
        meta[k] = v
    return meta


def _header(meta: dict) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in meta.items())


def _write(text: str, output) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _window_samples(args) -> int:
    return max(1, int(round(args.window_s / args.dt)))


def _params_from_args(args, v_max: float) -> FvdmParams:
    if args.group:
        base = reference_params(args.group, v_max)
    else:
        base = reference_params(STOP_GROUP, v_max)
    values = {k: getattr(args, k) for k in PARAM_NAMES if getattr(args, k) is not None}
    return FvdmParams(**{**{k: getattr(base, k) for k in PARAM_NAMES}, **values}, v_max=v_max)


# --------------------------------------------------------------------------
# subcommands

def cmd_smooth(args) -> int:
    segs = load_segments(args.inputs, args.gap_max_s)
    out_dir = Path(args.output)
    meta = _metadata(args)
    window = _window_samples(args)

    def one(seg):
        smoothed = smooth_segment(seg, window)
        series = project_to_path(smoothed, smoothed=True, require_positive_spacing=False)
        return write_segment(smoothed, out_dir / f"{seg.segment_id}.csv", metadata=meta, derived=series)

    # each segment goes to its own file, so order of completion does not matter
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        written = list(pool.map(one, segs))
    log.info("wrote %d segment(s) to %s", len(written), out_dir)
    return 0


def cmd_assess(args) -> int:
    segs = load_segments(args.inputs, args.gap_max_s)
    reports = summarize_by_category(segs, _window_samples(args))
    meta = _metadata(args)
    if args.format == "json":
        text = json.dumps({"metadata": meta, "reports": [r.to_dict() for r in reports]}, indent=2) + "\n"
    else:
        text = _header(meta) + to_csv(QUALITY_HEADER, quality_rows(reports))
    _write(text, args.output)
    return 0


def cmd_simulate(args) -> int:
    v_max = args.v_max if args.v_max is not None else args.v_max_mph * MPH_TO_MPS
    p = _params_from_args(args, v_max)
    init = SimState(0.0, args.x0, args.v0 if args.v0 is not None else 0.0)
    if args.leader == "free":
        leader = VirtualFree()
    elif args.leader == "stopped":
        leader = VirtualStopped(args.stopline)
    else:
        from .dataset import load_segment

        seg = load_segment(args.leader_file, args.gap_max_s)[0]
        leader = Recorded.from_series(project_to_path(seg, require_positive_spacing=False))
    series = simulate(init, leader, p, args.dt, args.horizon)
    meta = _metadata(args) | {"halted_at": series.halted_at}
    _write(_header(meta) + _series_csv(series), args.output)
    return 0 if series.halted_at is None else 3


def _series_csv(series) -> str:
    from .synth import ORIGIN, _clock, _lat_of
    from .trajectory import format_time

    t, offset = _clock(len(series), float(series.t[1] - series.t[0]) if len(series) > 1 else DT_NOMINAL)
    lat = _lat_of(series.position)
    spacing = series.spacing
    head = ["Time", "Longitude", "Latitude", "Speed"]
    if series.lead_position is not None:
        head += ["Longitude_lead", "Latitude_lead", "Speed_lead"]
        llat = _lat_of(series.lead_position)
    head += ["Position_m", "Accel_mps2", "Jerk_mps3", "Spacing_m"]
    lines = [",".join(head)]
    for i in range(len(series)):
        row = [format_time(t[i], offset), repr(ORIGIN[1]), repr(float(lat[i])), repr(float(series.speed[i]))]
        if series.lead_position is not None:
            row += [repr(ORIGIN[1]), repr(float(llat[i])), repr(float(series.lead_speed[i]))]
        row += [repr(float(series.position[i])), repr(float(series.accel[i])), repr(float(series.jerk[i]))]
        row.append("" if spacing is None else repr(float(spacing[i])))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_calibrate(args) -> int:
    segs = load_segments(args.inputs, args.gap_max_s)
    if not segs:
        raise ValueError("no segment files found")
    groups: dict[str, list] = defaultdict(list)
    for s in segs:
        if s.behavior is None:
            raise ValueError(f"segment {s.segment_id!r} has no behavior label")
        groups[group_key(s.behavior)].append(s)
    if args.behavior:
        wanted = group_key(BehaviorLabel.parse(args.behavior))
        groups = {wanted: groups.get(wanted, [])}
        if not groups[wanted]:
            raise ValueError(f"no segments in group {wanted!r}")
    config = OptimizerConfig(max_evals=args.budget, epsilon=args.epsilon)
    results = []
    for name in sorted(groups):
        problem = CalibrationProblem(groups[name], args.bounds, config, smoothed=args.source == "smoothed",
                                     window_samples=_window_samples(args))
        res = calibrate(problem)
        log.info("%s: rmse %.4f after %d evals", name, res.rmse, res.evals)
        results.append(res)
    meta = _metadata(args)
    if args.format == "json":
        text = json.dumps({"metadata": meta, "results": [r.to_dict() for r in results]}, indent=2) + "\n"
    else:
        text = _header(meta) + to_csv(CALIBRATION_HEADER, calibration_rows(results))
    _write(text, args.output)
    if args.json_output:
        Path(args.json_output).write_text(
            json.dumps({"metadata": meta, "results": [r.to_dict() for r in results]}, indent=2) + "\n"
        )
    return 0


def cmd_threshold(args) -> int:
    desired = args.desired_speed_mph * MPH_TO_MPS
    replay = replay_threshold(
        args.activation_m,
        threshold=args.threshold_m,
        inclusive=not args.exclusive,
        leader_speed=args.leader_speed_mph * MPH_TO_MPS,
        desired_speed=desired,
        stopline_distance=args.stopline_m,
        dt=args.dt,
        horizon=args.horizon,
    )
    meta = _metadata(args) | {"mode": replay.decision.mode.value}
    rows = list(replay.rows())
    cols = list(rows[0])
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join("" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else str(r[c]))
                              for c in cols))
    _write(_header(meta) + "\n".join(lines) + "\n", args.output)
    return 0


def cmd_synth(args) -> int:
    v_max = args.v_max if args.v_max is not None else args.v_max_mph * MPH_TO_MPS
    p = _params_from_args(args, v_max)
    common = dict(noise_std=args.noise_std, seed=args.seed, dt=args.dt)
    behavior = BehaviorLabel.parse(args.behavior) if args.behavior else None
    if args.kind == "oscillation":
        profile = [float(w) * MPH_TO_MPS for w in args.profile_mph.split(",")]
        seg = synth_oscillation(p, profile, behavior=behavior, **common)
    elif args.kind == "stopping":
        seg = synth_stopping(p, approach_m=args.stopline, v_init=args.v0, behavior=behavior, **common)
    else:
        seg = synth_accelerating(p, duration_s=args.horizon, v_init=args.v0 or 0.0, behavior=behavior, **common)
    from dataclasses import replace

    seg = replace(seg, segment_id=Path(args.output).stem)
    write_segment(seg, args.output, metadata=_metadata(args))
    return 0


def _load_json_records(paths, key):
    out = []
    for path in paths or ():
        data = json.loads(Path(path).read_text())
        out.extend(data[key] if isinstance(data, dict) else data)
    return out


def cmd_report(args) -> int:
    cal = []
    for rec in _load_json_records(args.calibration, "results"):
        p = FvdmParams(rec["alpha"], rec["beta"], rec["s0"], rec["delta_s"], rec["v_max"])
        segs = rec.get("segments", [])
        cal.append(CalibrationResult(rec["group"], p, rec["rmse"], rec.get("evals", 0),
                                     tuple(s["rmse"] for s in segs), tuple(s["segment_id"] for s in segs),
                                     rec.get("sample_count", 0)))
    quality = [QualityReport(**rec) for rec in _load_json_records(args.quality, "reports")]
    if not cal and not quality:
        raise ValueError("report needs at least one calibration or quality record")
    _write(report(cal, quality, args.format), args.output)
    return 0


def cmd_opt_selftest(args) -> int:
    from .selftest import run_selftest

    cases = run_selftest()
    ok = True
    for c in cases:
        status = "PASS" if c.passed else "FAIL"
        ok &= c.passed
        print(f"{status} {c.name}: f_best={c.f_best:.6g} grid_oracle={c.oracle:.6g} "
              f"evals={c.evals} deterministic={c.deterministic} ({c.seconds:.1f}s)")
    return 0 if ok else 1


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("shared options")
    g.add_argument("--dt", type=float, default=DT_NOMINAL, help="time step / sample interval (s)")
    g.add_argument("--budget", type=int, default=2000, help="DIRECT objective-evaluation budget")
    g.add_argument("--epsilon", type=float, default=1e-4, help="DIRECT potential-optimality slack")
    g.add_argument("--threshold-m", type=float, default=CAR_FOLLOWING_THRESHOLD_M,
                   help="car-following detection threshold (m)")
    g.add_argument("--gap-max-s", type=float, default=1.0, help="longest hole filled by interpolation (s)")
    g.add_argument("--window-s", type=float, default=1.0, help="moving-average window (s)")
    g.add_argument("--seed", type=int, default=0, help="random seed for synthetic noise")
    g.add_argument("--bounds", type=parse_bounds, default=_bounds_text(DEFAULT_BOUNDS),
                   help="alpha,beta,s0,delta_s search box as lo:hi pairs")
    g.add_argument("--jobs", type=int, default=1, help="files processed in parallel")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    params = argparse.ArgumentParser(add_help=False)
    pg = params.add_argument_group("model parameters (default: published row for --group)")
    pg.add_argument("--group", default=None, help="published calibration row to start from")
    for name in PARAM_NAMES:
        pg.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, default=None,
                        help=f"override {name}")
    pg.add_argument("--v-max", type=float, default=None, help="v_max in m/s (overrides --v-max-mph)")
    pg.add_argument("--v-max-mph", type=float, default=40.0, help="desired speed (mph)")

    parser = argparse.ArgumentParser(
        prog="tlssc", description="Trajectory processing, FVDM calibration and replay tools.", formatter_class=fmt
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("smooth", parents=[common], formatter_class=fmt,
                       help="interpolate, smooth and project segment files")
    p.add_argument("inputs", nargs="+", help="segment files or directories")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("assess", parents=[common], formatter_class=fmt, help="trajectory quality summary")
    p.add_argument("inputs", nargs="+", help="segment files or directories")
    p.add_argument("-o", "--output", default="-", help="output file, - for stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("simulate", parents=[common, params], formatter_class=fmt, help="run the FVDM forward")
    p.add_argument("--leader", choices=("free", "stopped", "recorded"), default="stopped", help="leader model")
    p.add_argument("--stopline", type=float, default=120.0, help="stop-line position (m)")
    p.add_argument("--leader-file", help="segment file providing the recorded leader")
    p.add_argument("--x0", type=float, default=0.0, help="initial position (m)")
    p.add_argument("--v0", type=float, default=None, help="initial speed (m/s)")
    p.add_argument("--horizon", type=float, default=60.0, help="simulated duration (s)")
    p.add_argument("-o", "--output", default="-", help="output file, - for stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common], formatter_class=fmt,
                       help="fit FVDM parameters per behavior group")
    p.add_argument("inputs", nargs="+", help="segment files or directories")
    p.add_argument("--behavior", default=None, help="only calibrate this behavior's group")
    p.add_argument("--source", choices=("smoothed", "raw"), default="smoothed",
                   help="which position/speed columns feed the objective")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
    p.add_argument("-o", "--output", default="-", help="output file, - for stdout")
    p.add_argument("--json-output", default=None, help="also write the structured result here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("threshold", parents=[common], formatter_class=fmt,
                       help="replay the car-following threshold experiment")
    p.add_argument("--activation-m", type=float, required=True, help="leader distance at activation (m)")
    p.add_argument("--exclusive", action="store_true", help="do not follow a leader exactly at the threshold")
    p.add_argument("--leader-speed-mph", type=float, default=40.0, help="leader cruise speed")
    p.add_argument("--desired-speed-mph", type=float, default=40.0, help="follower desired speed")
    p.add_argument("--stopline-m", type=float, default=300.0, help="stop-line distance from the follower (m)")
    p.add_argument("--horizon", type=float, default=60.0, help="simulated duration (s)")
    p.add_argument("-o", "--output", default="-", help="output file, - for stdout")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("synth", parents=[common, params], formatter_class=fmt,
                       help="write a synthetic segment generated by the FVDM")
    p.add_argument("--kind", choices=("oscillation", "stopping", "accelerating"), default="oscillation", help="segment type")
    p.add_argument("--behavior", default=None, help="behavior label written into the segment")
    p.add_argument("--profile-mph", default="40,30,20,30,40", help="leader speed waypoints")
    p.add_argument("--noise-std", type=float, default=0.0, help="speed noise std (m/s)")
    p.add_argument("--stopline", type=float, default=120.0, help="approach length for --kind stopping (m)")
    p.add_argument("--v0", type=float, default=None, help="initial speed (m/s)")
    p.add_argument("--horizon", type=float, default=30.0, help="accelerating segment duration (s)")
    p.add_argument("-o", "--output", required=True, help="output segment CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", parents=[common], formatter_class=fmt,
                       help="render calibration / quality JSON as tables")
    p.add_argument("--calibration", nargs="*", default=[], help="calibrate JSON outputs")
    p.add_argument("--quality", nargs="*", default=[], help="assess JSON outputs")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown", help="output format")
    p.add_argument("-o", "--output", default="-", help="output file, - for stdout")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("opt-selftest", parents=[common], formatter_class=fmt)
    p.set_defaults(func=cmd_opt_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
