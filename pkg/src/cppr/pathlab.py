"""Reference path generators and the path-following harness.

Paths are generated procedurally inside the verified workspace with fixed
seeds, pre-checked point by point for reachability, then followed either by
repeated inverse-kinematics solves (warm started along the path) or by
resolved-rate stepping with a capped per-step tip motion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .config import RobotConfig
from .differential import jacobian_fd, resolved_rate_step
from .ik import solve_ik
from .kinematics import fk_tip
from .specs import (
    ActuationInput,
    FollowRecord,
    FollowTrace,
    IkTarget,
    PathGenerationError,
    PathSpec,
    SingularityError,
    SolverOptions,
    TipConfiguration,
)

SHRINK_FACTOR = 0.8
MAX_SHRINK_ATTEMPTS = 10


@dataclass
class FollowOptions:
    """Knobs of the follow harness."""

    warm_start: bool = True
    rr_tolerance: float = 0.02
    rr_step_mm: float = 0.5
    rr_budget: int = 200


def _random_unit_vectors(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _reachable(points: np.ndarray, robot: RobotConfig, opts: SolverOptions) -> bool:
    for p in points:
        report = solve_ik(IkTarget(p), robot, robot.limits, opts)
        if not report.converged:
            return False
    return True


def generate_spiral(
    robot: RobotConfig,
    turns: float = 1.5,
    radius_mm: float = 7.0,
    pitch_mm: float = 6.0,
    n_points: int = 12,
    center=(0.0, 0.0, 50.0),
    seed: int = 7,
    opts: Optional[SolverOptions] = None,
) -> PathSpec:
    """Seeded helix of task points with random unit target orientations.

    Every point must pass the inverse-kinematics reachability pre-check;
    on failure the radius shrinks and generation retries, giving up after
    a fixed number of attempts.
    """
    opts = opts or robot.solver
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=float)
    directions = _random_unit_vectors(n_points, rng)
    angles = np.linspace(0.0, 2.0 * math.pi * turns, n_points)
    span = turns * pitch_mm
    zs = np.linspace(-span / 2.0, span / 2.0, n_points)
    radius = radius_mm
    for _ in range(MAX_SHRINK_ATTEMPTS):
        points = np.stack(
            [
                center[0] + radius * np.cos(angles),
                center[1] + radius * np.sin(angles),
                center[2] + zs,
            ],
            axis=-1,
        )
        if _reachable(points, robot, opts):
            waypoints = [IkTarget(p, d) for p, d in zip(points, directions)]
            return PathSpec(name=f"spiral-{n_points}pt-seed{seed}", waypoints=waypoints)
        radius *= SHRINK_FACTOR
    raise PathGenerationError(
        f"spiral generation failed after {MAX_SHRINK_ATTEMPTS} radius reductions"
    )


def generate_circle(
    robot: RobotConfig,
    center=(0.0, 0.0, 52.0),
    radius_mm: float = 7.0,
    n_points: int = 200,
    plane_normal=(0.0, 0.0, 1.0),
    opts: Optional[SolverOptions] = None,
    check_reachable: bool = True,
) -> PathSpec:
    """Closed circle of evenly spaced tip points in an arbitrary plane.

    Waypoints carry positions only; the published protocol commands tip
    points, leaving the orientation free.
    """
    opts = opts or robot.solver
    center = np.asarray(center, dtype=float)
    normal = np.asarray(plane_normal, dtype=float)
    norm = np.linalg.norm(normal)
    if norm < 1e-12:
        raise ValueError("plane normal must be non-zero")
    normal = normal / norm
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    radius = radius_mm
    for _ in range(MAX_SHRINK_ATTEMPTS):
        angles = 2.0 * math.pi * np.arange(n_points) / n_points
        points = center + radius * (
            np.outer(np.cos(angles), u) + np.outer(np.sin(angles), v)
        )
        if not check_reachable or _reachable(points, robot, opts):
            waypoints = [IkTarget(p) for p in points]
            return PathSpec(name=f"circle-{n_points}pt", waypoints=waypoints, closed=True)
        radius *= SHRINK_FACTOR
    raise PathGenerationError(
        f"circle generation failed after {MAX_SHRINK_ATTEMPTS} radius reductions"
    )


def load_path_csv(path: str, name: Optional[str] = None, closed: bool = False) -> PathSpec:
    """Read a waypoint CSV (x_mm,y_mm,z_mm[,rx,ry,rz])."""
    waypoints: List[IkTarget] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line or line.startswith("x_mm"):
                continue
            cells = line.split(",")
            if len(cells) not in (3, 6):
                raise ValueError(f"{path}:{line_no + 1}: expected 3 or 6 columns")
            position = np.array([float(c) for c in cells[:3]])
            direction = None
            if len(cells) == 6 and any(c.strip() for c in cells[3:]):
                direction = np.array([float(c) for c in cells[3:]])
                direction = direction / np.linalg.norm(direction)
            waypoints.append(IkTarget(position, direction))
    return PathSpec(name=name or path, waypoints=waypoints, closed=closed)


def _follow_ik(
    targets: List[IkTarget], robot: RobotConfig, opts: SolverOptions, follow: FollowOptions
) -> List[FollowRecord]:
    records: List[FollowRecord] = []
    previous: Optional[ActuationInput] = None
    for target in targets:
        report = solve_ik(target, robot, robot.limits, opts, initial_guess=previous)
        achieved = fk_tip(report.actuation, robot)
        records.append(
            FollowRecord(
                target=target,
                achieved=achieved,
                actuation=report.actuation,
                residual=float(np.linalg.norm(achieved.position - target.position)),
                iterations=report.iterations_used,
                converged=report.converged,
            )
        )
        if follow.warm_start:
            previous = report.actuation
    return records


def _seed_tracker(
    target: IkTarget, robot: RobotConfig, opts: SolverOptions
) -> "tuple[ActuationInput, int, bool]":
    """Solve the first waypoint at a pose the tracker can differentiate.

    The straight pose and the whole retracted-distal manifold are rank
    deficient, so seeds landing there are re-solved from random advanced
    (q_d > 0) warm starts until the local Jacobian has full rank.
    """
    from .differential import detect_singularity  # local import avoids a cycle at module load

    rng = np.random.default_rng(opts.seed)
    iterations = 0
    guess: Optional[ActuationInput] = None
    for _ in range(10):
        report = solve_ik(target, robot, robot.limits, opts, initial_guess=guess)
        iterations += report.iterations_used
        Q = report.actuation
        if report.converged and Q.q_d >= 0.0:
            J = jacobian_fd(Q, robot, robot.limits)
            if not detect_singularity(J).is_singular:
                return Q, iterations, True
        raw = np.array(
            [
                rng.uniform(0.0, robot.limits.q_p_max),
                rng.uniform(0.2, 1.0),
                rng.uniform(0.0, 2.0 * math.pi),
                rng.uniform(0.5, robot.limits.q_d_max),
                rng.uniform(0.2, 1.0),
                rng.uniform(0.0, 2.0 * math.pi),
            ]
        )
        guess = ActuationInput.from_array(raw)
    return report.actuation, iterations, False


def _follow_resolved_rate(
    targets: List[IkTarget], robot: RobotConfig, opts: SolverOptions, follow: FollowOptions
) -> List[FollowRecord]:
    # the straight pose is singular, so the run is seeded by solving the
    # first waypoint with the optimizer and tracked differentially from there
    Q, seed_iterations, seeded = _seed_tracker(targets[0], robot, opts)
    tip = fk_tip(Q, robot)
    records = [
        FollowRecord(
            target=targets[0],
            achieved=tip,
            actuation=Q,
            residual=float(np.linalg.norm(tip.position - targets[0].position)),
            iterations=seed_iterations,
            converged=seeded,
        )
    ]
    for target in targets[1:]:
        steps = 0
        converged = False
        while steps < follow.rr_budget:
            error = target.position - tip.position
            distance = float(np.linalg.norm(error))
            if distance <= follow.rr_tolerance:
                converged = True
                break
            sub = tip.position + error * min(1.0, follow.rr_step_mm / distance)
            direction = target.direction if target.direction is not None else tip.direction
            theta_target = np.concatenate([sub, direction])
            try:
                J = jacobian_fd(Q, robot, robot.limits)
                Q = resolved_rate_step(Q, theta_target, J, robot, robot.limits)
            except SingularityError:
                break
            tip = fk_tip(Q, robot)
            steps += 1
        records.append(
            FollowRecord(
                target=target,
                achieved=tip,
                actuation=Q,
                residual=float(np.linalg.norm(tip.position - target.position)),
                iterations=steps,
                converged=converged,
            )
        )
    return records


def follow_path(
    path: PathSpec,
    robot: RobotConfig,
    mode: str = "ik",
    opts: Optional[SolverOptions] = None,
    follow: Optional[FollowOptions] = None,
) -> FollowTrace:
    """Drive the tip along a path and record everything needed to re-verify.

    ``mode`` is ``"ik"`` (solve every waypoint, warm started) or
    ``"resolved_rate"``. Closed paths revisit their first waypoint at the
    end. A waypoint that fails to converge is flagged in its record; the
    run always completes.
    """
    opts = opts or robot.solver
    follow = follow or FollowOptions()
    targets = list(path.waypoints)
    if path.closed:
        targets.append(path.waypoints[0])
    if mode == "ik":
        records = _follow_ik(targets, robot, opts, follow)
    elif mode in ("resolved_rate", "rr"):
        records = _follow_resolved_rate(targets, robot, opts, follow)
    else:
        raise ValueError(f"unknown follow mode {mode!r}")
    return FollowTrace(path_name=path.name, mode=mode, records=records)
