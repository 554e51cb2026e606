"""Kinematics and control workbench for a dual-segment push/pull dissector."""

from .config import RobotConfig, default_robot, default_slits, load_config
from .differential import detect_singularity, jacobian_fd, resolved_rate_step, tip_vector
from .geometry import (
    E_316L_MPA,
    cantilever_deflection,
    deflection_sweep,
    max_bend_from_outer_slits,
    second_moment,
    slit_count_from_pitch,
    slit_relation_residual,
)
from .ik import penalty_objective, solve_ik
from .kinematics import (
    bend_angle_from_pull,
    forward_kinematics,
    fk_tip,
    project_to_limits,
    pull_from_bend_angle,
    pull_limit,
    segment_transform,
    workspace_volume,
)
from .pathlab import FollowOptions, follow_path, generate_circle, generate_spiral
from .specs import (
    ActuationInput,
    ActuationLimits,
    FollowTrace,
    IkTarget,
    LimitViolation,
    NestingViolation,
    PathSpec,
    SegmentArc,
    SegmentSpec,
    ShapePolyline,
    SingularityError,
    SlitPattern,
    SolverFault,
    SolverOptions,
    SolverReport,
    TipConfiguration,
    TubeSpec,
)

__version__ = "0.1.0"
