"""Command line interface.

Subcommands: design, fk, ik, jacobian, singularity-scan, workspace, follow,
serve, report. All I/O is mm and radians (``--degrees`` converts direction
angles given on the command line). Output is JSON on stdout unless ``--csv``
selects the delimited form; batch runs stream NDJSON. Exit codes: 0 success,
2 validation error, 3 non-convergence, 4 internal fault, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .config import ConfigError, RobotConfig, default_robot, default_slits, load_config
from .differential import detect_singularity, jacobian_fd
from .geometry import (
    E_316L_MPA,
    cantilever_deflection,
    max_bend_from_outer_slits,
    second_moment,
    slit_count_from_pitch,
    slit_relation_residual,
)
from .ik import solve_ik
from .kinematics import forward_kinematics, pull_from_bend_angle, workspace_volume
from .pathlab import follow_path, generate_circle, generate_spiral, load_path_csv
from .specs import (
    ActuationInput,
    IkTarget,
    LimitViolation,
    NestingViolation,
    PathGenerationError,
    SlitPattern,
    SolverFault,
    TubeSpec,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_FAULT = 4
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")


def _parse_floats(text: str, n: int, name: str) -> np.ndarray:
    cells = text.split(",")
    if len(cells) != n:
        raise ValueError(f"{name} needs {n} comma separated values, got {len(cells)}")
    return np.array([float(c) for c in cells])


def _parse_q(text: str, degrees: bool) -> ActuationInput:
    values = _parse_floats(text, 6, "--q")
    if degrees:
        values[2] = math.radians(values[2])
        values[5] = math.radians(values[5])
    return ActuationInput.from_array(values)


def _read_json_arg(source: str) -> dict:
    if source == "-":
        return json.load(sys.stdin)
    with open(source, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------
def _cmd_fk(args, robot: RobotConfig) -> int:
    Q = _parse_q(args.q, args.degrees)
    tip, polyline = forward_kinematics(Q, robot, robot.limits, polyline_step=args.polyline_step)
    if args.csv:
        for row in polyline.to_csv_rows():
            sys.stdout.write(row + "\n")
    else:
        _emit(tip.to_json())
    return EXIT_OK


def _target_from_args(args, degrees: bool) -> IkTarget:
    if args.json:
        return IkTarget.from_json(_read_json_arg(args.json))
    if args.target is None:
        raise ValueError("either --target or --json is required")
    position = _parse_floats(args.target, 3, "--target")
    direction = None
    if args.dir is not None:
        direction = _parse_floats(args.dir, 3, "--dir")
        direction = direction / np.linalg.norm(direction)
    return IkTarget(position, direction)


def _cmd_ik(args, robot: RobotConfig) -> int:
    opts = robot.solver
    if args.seed is not None:
        opts = type(opts)(**{**opts.to_json(), "seed": args.seed})
    if args.batch:
        worst = EXIT_OK
        path = load_path_csv(args.batch)
        previous = None
        for waypoint in path.waypoints:
            report = solve_ik(waypoint, robot, robot.limits, opts, initial_guess=previous)
            _emit(report.to_json())
            previous = report.actuation if args.warm_start else None
            if not report.converged:
                worst = EXIT_NO_CONVERGENCE
        return worst
    target = _target_from_args(args, args.degrees)
    report = solve_ik(target, robot, robot.limits, opts)
    _emit(report.to_json())
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def _cmd_jacobian(args, robot: RobotConfig) -> int:
    Q = _parse_q(args.q, args.degrees)
    J = jacobian_fd(Q, robot, robot.limits)
    check = detect_singularity(J)
    _emit(
        {
            "J": [[float(x) for x in row] for row in J],
            "sigma_min": check.sigma_min,
            "is_singular": check.is_singular,
        }
    )
    return EXIT_OK


def _parse_axis(text: str) -> np.ndarray:
    """One grid axis: a bare value or start:stop:count."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"axis spec {text!r} must be value or start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("axis count must be at least 1")
        return np.linspace(start, stop, count)
    return np.array([float(text)])


def _cmd_singularity_scan(args, robot: RobotConfig) -> int:
    axes = [
        _parse_axis(args.q_p),
        _parse_axis(args.D_p),
        _parse_axis(args.phi_p),
        _parse_axis(args.q_d),
        _parse_axis(args.D_d),
        _parse_axis(args.phi_d),
    ]
    if args.degrees:
        axes[2] = np.radians(axes[2])
        axes[5] = np.radians(axes[5])
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    sys.stdout.write("q_p,D_p,phi_p,q_d,D_d,phi_d,sigma_min,is_singular\n")
    for row in grid:
        Q = ActuationInput.from_array(row)
        check = detect_singularity(jacobian_fd(Q, robot, robot.limits))
        cells = [repr(float(v)) for v in row] + [repr(check.sigma_min), str(int(check.is_singular))]
        sys.stdout.write(",".join(cells) + "\n")
    return EXIT_OK


def _cmd_workspace(args, robot: RobotConfig) -> int:
    estimate = workspace_volume(
        robot, robot.limits, sample_count=args.samples, seed=args.seed, voxel=args.voxel
    )
    if args.csv:
        sys.stdout.write("x_mm,y_mm,z_mm\n")
        for p in estimate.tip_sample:
            sys.stdout.write(f"{p[0]!r},{p[1]!r},{p[2]!r}\n")
    else:
        _emit(estimate.to_json())
    return EXIT_OK


def _cmd_follow(args, robot: RobotConfig) -> int:
    if args.generate is not None:
        if args.generate == "spiral":
            path = generate_spiral(robot, seed=args.seed, n_points=args.points or 12)
        else:
            path = generate_circle(robot, n_points=args.points or 200)
    elif args.path:
        path = load_path_csv(args.path, closed=args.closed)
    else:
        raise ValueError("either --path or --generate is required")
    mode = "resolved_rate" if args.mode == "rr" else args.mode
    trace = follow_path(path, robot, mode=mode)
    for record in trace.records:
        _emit({"type": "waypoint", **record.to_json()})
    _emit({"type": "summary", **trace.summary_json()})
    return EXIT_OK if trace.all_converged else EXIT_NO_CONVERGENCE


def _cmd_design(args, robot: RobotConfig) -> int:
    if args.json:
        doc = _read_json_arg(args.json)
    else:
        doc = None
    segment, outer, inner, beam = _design_inputs(doc, robot)
    max_bend = max_bend_from_outer_slits(outer, segment_spec(segment))
    seg = segment_spec(segment)
    residual = slit_relation_residual(outer, inner, seg)
    outer_pitch = slit_count_from_pitch(seg.outer_tube.steerable_length, outer.slit_height, outer.gap_distance)
    inner_pitch = slit_count_from_pitch(seg.inner_tube.steerable_length, inner.slit_height, inner.gap_distance)
    r_od = seg.outer_tube.outer_diameter / 2.0
    r_id = seg.outer_tube.inner_diameter / 2.0
    alpha = beam["alpha_rad"]
    moment = second_moment(alpha, r_od, r_id)
    deflection = cantilever_deflection(beam["force_n"], seg.steerable_length, beam["modulus_mpa"], moment)
    if args.csv:
        from .geometry import deflection_sweep

        rows = deflection_sweep(
            np.linspace(1e-3, 2 * math.pi, args.sweep_samples),
            r_od,
            r_id,
            beam["force_n"],
            seg.steerable_length,
            beam["modulus_mpa"],
        )
        sys.stdout.write("alpha_rad,I_mm4,w_mm\n")
        for a, i_mm4, w in rows:
            sys.stdout.write(f"{a!r},{i_mm4!r},{w!r}\n")
        return EXIT_OK
    _emit(
        {
            "max_bend_rad": max_bend,
            "pull_for_max_bend_mm": max_bend * seg.pull_per_radian
            if max_bend <= seg.max_bend_angle
            else None,
            "slit_relation_residual_mm": residual,
            "outer_pitch_check": {"count": outer_pitch.count, "quotient": outer_pitch.quotient},
            "inner_pitch_check": {"count": inner_pitch.count, "quotient": inner_pitch.quotient},
            "second_moment_mm4": moment,
            "deflection_mm": deflection,
            "alpha_rad": alpha,
        }
    )
    return EXIT_OK


def segment_spec(doc):
    from .specs import SegmentSpec

    if isinstance(doc, dict):
        kwargs = {
            "outer_tube": TubeSpec(**doc["outer_tube"]),
            "inner_tube": TubeSpec(**doc["inner_tube"]),
        }
        for key in ("d_o", "d_i"):
            if key in doc:
                kwargs[key] = float(doc[key])
        return SegmentSpec(**kwargs)
    return doc


def _design_inputs(doc: Optional[dict], robot: RobotConfig):
    slits = default_slits()
    segment = robot.proximal
    outer = slits["proximal"]["outer"]
    inner = slits["proximal"]["inner"]
    beam = {"force_n": 0.49, "modulus_mpa": E_316L_MPA, "alpha_rad": math.pi}
    if doc is not None:
        unknown = set(doc) - {"segment", "outer_slits", "inner_slits", "beam"}
        if unknown:
            raise ValueError(f"unknown design fields: {sorted(unknown)}")
        if "segment" in doc:
            segment = doc["segment"]
        if "outer_slits" in doc:
            outer = SlitPattern(**doc["outer_slits"])
        if "inner_slits" in doc:
            inner = SlitPattern(**doc["inner_slits"])
        if "beam" in doc:
            beam.update(doc["beam"])
    return segment, outer, inner, beam


def _cmd_serve(args, robot: RobotConfig) -> int:
    import uvicorn

    from .teleop import build_app

    uvicorn.run(build_app(robot), host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def _cmd_report(args, robot: RobotConfig) -> int:
    from .report import write_full_report

    manifest = write_full_report(
        args.out,
        robot,
        seed=args.seed,
        workspace_samples=args.samples,
        circle_points=args.circle_points,
    )
    _emit(manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------
def build_parser() -> _Parser:
    parser = _Parser(prog="cppr", description="dual-segment push/pull dissector workbench")
    parser.add_argument("--version", action="version", version=f"cppr {__version__}")
    parser.add_argument("--config", help="robot config JSON (or set CPPR_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fk", help="forward kinematics of one actuation vector")
    p.add_argument("--q", required=True, help="q_p,D_p,phi_p,q_d,D_d,phi_d")
    p.add_argument("--degrees", action="store_true", help="phi entries of --q are degrees")
    p.add_argument("--csv", action="store_true", help="emit the backbone polyline CSV")
    p.add_argument("--polyline-step", type=float, default=1.0)
    p.set_defaults(handler=_cmd_fk)

    p = sub.add_parser("ik", help="inverse kinematics for a tip target")
    p.add_argument("--target", help="x,y,z in mm")
    p.add_argument("--dir", help="target direction x,y,z (normalized)")
    p.add_argument("--json", help="IkTarget JSON file ('-' for stdin)")
    p.add_argument("--batch", help="CSV of targets; streams one report per line")
    p.add_argument("--warm-start", action="store_true", help="warm start batch solves")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--degrees", action="store_true")
    p.set_defaults(handler=_cmd_ik)

    p = sub.add_parser("jacobian", help="finite-difference tip Jacobian")
    p.add_argument("--q", required=True)
    p.add_argument("--degrees", action="store_true")
    p.set_defaults(handler=_cmd_jacobian)

    p = sub.add_parser("singularity-scan", help="sigma_min over an actuation grid (CSV)")
    p.add_argument("--q-p", default="0")
    p.add_argument("--D-p", dest="D_p", default="0:2.8:8")
    p.add_argument("--phi-p", default="0")
    p.add_argument("--q-d", default="0")
    p.add_argument("--D-d", dest="D_d", default="0:2.3:8")
    p.add_argument("--phi-d", default="0")
    p.add_argument("--degrees", action="store_true")
    p.set_defaults(handler=_cmd_singularity_scan)

    p = sub.add_parser("workspace", help="Monte Carlo workspace volume")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--voxel", type=float, default=1.0)
    p.add_argument("--csv", action="store_true", help="emit a tip-position sample CSV")
    p.set_defaults(handler=_cmd_workspace)

    p = sub.add_parser("follow", help="follow a tip path and stream the trace")
    p.add_argument("--path", help="waypoint CSV (x_mm,y_mm,z_mm[,rx,ry,rz])")
    p.add_argument("--generate", choices=["spiral", "circle"])
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--mode", choices=["ik", "rr", "resolved_rate"], default="ik")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--closed", action="store_true", help="treat the CSV path as closed")
    p.set_defaults(handler=_cmd_follow)

    p = sub.add_parser("design", help="slit design relations and beam stiffness")
    p.add_argument("--json", help="design JSON file ('-' for stdin)")
    p.add_argument("--csv", action="store_true", help="emit the deflection curve CSV")
    p.add_argument("--sweep-samples", type=int, default=64)
    p.set_defaults(handler=_cmd_design)

    p = sub.add_parser("serve", help="run the teleoperation service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(handler=_cmd_serve)

    p = sub.add_parser("report", help="render figures and delimited outputs")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--circle-points", type=int, default=200)
    p.set_defaults(handler=_cmd_report)

    return parser


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        robot = load_config(args.config)
        return args.handler(args, robot)
    except (ConfigError, LimitViolation, NestingViolation, PathGenerationError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except SolverFault as exc:
        sys.stderr.write(f"solver fault: {exc}\n")
        return EXIT_FAULT
    except Exception as exc:  # pragma: no cover - last resort
        sys.stderr.write(f"internal fault: {exc}\n")
        return EXIT_FAULT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
