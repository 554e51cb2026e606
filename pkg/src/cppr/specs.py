"""Shared domain types for the dual-segment push/pull dissector workbench.

Units are fixed across the whole package: lengths in millimetres, angles in
radians, forces in newtons, elastic moduli in MPa (N/mm^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Ordering of the six actuation DoFs everywhere an array form is used
# (Jacobian columns, solver vectors, wire CSV).
DOF_NAMES = ("q_p", "D_p", "phi_p", "q_d", "D_d", "phi_d")


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------
class LimitViolation(ValueError):
    """An actuation value lies outside its allowed range."""

    def __init__(self, bound: str, value: float, detail: str = ""):
        self.bound = bound
        self.value = float(value)
        msg = f"actuation limit '{bound}' violated by value {value:.6g}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NestingViolation(ValueError):
    """Retracted-distal state whose direction or curvature breaks nesting.

    ``field_name`` is ``"phi_d"`` or ``"curvature"`` depending on which part
    of the coupled constraint failed.
    """

    def __init__(self, field_name: str, detail: str):
        self.field_name = field_name
        super().__init__(f"nesting constraint violated ({field_name}): {detail}")


class SingularityError(RuntimeError):
    """Jacobian normal matrix is rank deficient at the requested pose."""

    def __init__(self, sigma_min: float, sigma_max: float):
        self.sigma_min = float(sigma_min)
        self.sigma_max = float(sigma_max)
        super().__init__(
            f"singular Jacobian: sigma_min={sigma_min:.3e}, sigma_max={sigma_max:.3e}"
        )


class SolverFault(RuntimeError):
    """Non-finite value encountered inside the optimizer."""


class PathGenerationError(RuntimeError):
    """Path generator could not produce a fully reachable waypoint set."""


def wrap_angle(a):
    """Wrap an angle (scalar or array) to the representative in [0, 2*pi)."""
    return np.mod(a, TWO_PI)


# ---------------------------------------------------------------------------
# tube / segment / slit geometry
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TubeSpec:
    """One laser patterned tube.

    ``max_bend_angle`` is the design limit for the full steerable section.
    """

    outer_diameter: float
    inner_diameter: float
    steerable_length: float
    compliant_length: float = 0.0
    max_bend_angle: float = math.radians(50.0)

    def __post_init__(self):
        if not (self.outer_diameter > self.inner_diameter > 0.0):
            raise ValueError(
                "tube requires outer_diameter > inner_diameter > 0, got "
                f"{self.outer_diameter} / {self.inner_diameter}"
            )
        if self.steerable_length <= 0.0:
            raise ValueError("steerable_length must be positive")
        if self.compliant_length < 0.0:
            raise ValueError("compliant_length must be non-negative")
        if self.max_bend_angle <= 0.0:
            raise ValueError("max_bend_angle must be positive")

    @property
    def wall_center_offset(self) -> float:
        """Distance from the tube axis to the wall centerline, (OD + ID) / 4."""
        return 0.25 * (self.outer_diameter + self.inner_diameter)


@dataclass(frozen=True)
class SegmentSpec:
    """A push/pull segment: two coaxial patterned tubes welded at the tip.

    ``d_o`` and ``d_i`` are the offsets from the segment backbone to the outer
    and inner tube wall centerlines. They default to (OD + ID) / 4 of each
    tube and may be overridden for what-if studies.
    """

    outer_tube: TubeSpec
    inner_tube: TubeSpec
    d_o: float = 0.0
    d_i: float = 0.0

    def __post_init__(self):
        if self.d_o == 0.0:
            object.__setattr__(self, "d_o", self.outer_tube.wall_center_offset)
        if self.d_i == 0.0:
            object.__setattr__(self, "d_i", self.inner_tube.wall_center_offset)
        if self.outer_tube.inner_diameter < self.inner_tube.outer_diameter:
            raise ValueError(
                "tubes do not nest: outer tube ID "
                f"{self.outer_tube.inner_diameter} < inner tube OD "
                f"{self.inner_tube.outer_diameter}"
            )
        if self.outer_tube.steerable_length != self.inner_tube.steerable_length:
            raise ValueError("tubes are welded at the tip; steerable lengths must match")
        if not (self.d_o > self.d_i > 0.0):
            raise ValueError(f"require d_o > d_i > 0, got d_o={self.d_o}, d_i={self.d_i}")

    @property
    def steerable_length(self) -> float:
        return self.outer_tube.steerable_length

    @property
    def max_bend_angle(self) -> float:
        return min(self.outer_tube.max_bend_angle, self.inner_tube.max_bend_angle)

    @property
    def pull_per_radian(self) -> float:
        """Pull distance producing one radian of bend, d_o + d_i."""
        return self.d_o + self.d_i


@dataclass(frozen=True)
class SlitPattern:
    """Tenon-mortise slit parameters of one patterned tube."""

    tilt_angle: float
    slit_width: float
    gap_distance: float
    slit_height: float
    count: int

    def __post_init__(self):
        if not (0.0 < self.tilt_angle < math.pi / 2.0):
            raise ValueError(f"tilt_angle must be in (0, pi/2), got {self.tilt_angle}")
        for name in ("slit_width", "gap_distance", "slit_height"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"count must be a positive integer, got {self.count}")


# ---------------------------------------------------------------------------
# actuation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ActuationInput:
    """The six actuation DoFs: translations, push/pull distances, directions."""

    q_p: float = 0.0
    D_p: float = 0.0
    phi_p: float = 0.0
    q_d: float = 0.0
    D_d: float = 0.0
    phi_d: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.q_p, self.D_p, self.phi_p, self.q_d, self.D_d, self.phi_d],
            dtype=float,
        )

    @staticmethod
    def from_array(a: Sequence[float]) -> "ActuationInput":
        a = np.asarray(a, dtype=float)
        if a.shape != (6,):
            raise ValueError(f"actuation vector must have 6 entries, got shape {a.shape}")
        return ActuationInput(*(float(x) for x in a))

    def to_json(self) -> dict:
        return {name: float(getattr(self, name)) for name in DOF_NAMES}

    @staticmethod
    def from_json(doc: dict) -> "ActuationInput":
        unknown = set(doc) - set(DOF_NAMES)
        if unknown:
            raise ValueError(f"unknown actuation fields: {sorted(unknown)}")
        return ActuationInput(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class ActuationLimits:
    """Box bounds on the actuation inputs (the phi ranges are implicit)."""

    q_p_max: float = 10.0
    q_d_min: float = -5.0
    q_d_max: float = 10.0
    D_max: float = 5.0

    def __post_init__(self):
        if self.q_p_max <= 0.0:
            raise ValueError("q_p_max must be positive")
        if not (self.q_d_min <= 0.0 <= self.q_d_max):
            raise ValueError("q_d range must contain 0")
        if self.D_max <= 0.0:
            raise ValueError("D_max must be positive")


# ---------------------------------------------------------------------------
# rigid transforms and tip state
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation, composable with ``@``."""

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    @property
    def z_axis(self) -> np.ndarray:
        return self.rotation[:, 2].copy()

    def orthonormality_error(self) -> float:
        r = self.rotation
        return float(
            max(
                np.abs(r.T @ r - np.eye(3)).max(),
                abs(np.linalg.det(r) - 1.0),
            )
        )


@dataclass(frozen=True)
class SegmentArc:
    """Constant-curvature arc of one steerable section."""

    bend_angle: float
    direction: float
    arc_length: float
    curvature: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.arc_length <= 0.0:
            raise ValueError("arc_length must be positive")
        if self.bend_angle < 0.0:
            raise ValueError("bend_angle must be non-negative; direction selects the side")
        implied = self.bend_angle / self.arc_length
        if self.curvature is None:
            object.__setattr__(self, "curvature", implied)
        elif abs(self.curvature - implied) > 1e-9:
            raise ValueError(
                f"curvature {self.curvature} inconsistent with bend_angle/arc_length {implied}"
            )

    @property
    def bend_radius(self) -> float:
        return math.inf if self.curvature == 0.0 else 1.0 / self.curvature


@dataclass(frozen=True)
class TipConfiguration:
    """Tip position and unit tip direction, the controlled quantity."""

    position: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "direction", d)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError(f"tip direction must be unit length, got norm {np.linalg.norm(d)}")

    def as_vector(self) -> np.ndarray:
        """Stacked [P; R] 6-vector used by the differential layer."""
        return np.concatenate([self.position, self.direction])

    def to_json(self) -> dict:
        return {"P": [float(x) for x in self.position], "R": [float(x) for x in self.direction]}


@dataclass(frozen=True)
class ShapePolyline:
    """Sampled backbone points from the base frame to the tip."""

    points: np.ndarray
    labels: List[str]

    SECTION_LABELS = ("proximal-translation", "proximal-arc", "distal-exposed", "distal-arc")

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("polyline points must be an (n, 3) array")
        if len(self.labels) != len(pts):
            raise ValueError("one label per point required")

    def __len__(self) -> int:
        return len(self.points)

    def max_spacing(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).max())

    def decimate(self, max_points: int) -> "ShapePolyline":
        n = len(self.points)
        if n <= max_points:
            return self
        idx = np.unique(np.round(np.linspace(0, n - 1, max_points)).astype(int))
        return ShapePolyline(self.points[idx], [self.labels[i] for i in idx])

    def to_csv_rows(self) -> Iterable[str]:
        yield "x_mm,y_mm,z_mm,segment_label"
        for p, label in zip(self.points, self.labels):
            yield f"{p[0]!r},{p[1]!r},{p[2]!r},{label}"

    def to_json(self) -> dict:
        return {
            "points": [[float(x) for x in p] for p in self.points],
            "labels": list(self.labels),
        }


# ---------------------------------------------------------------------------
# solver types
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class IkTarget:
    """Target tip position with an optional target direction."""

    position: np.ndarray
    direction: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        object.__setattr__(self, "position", p)
        if self.direction is not None:
            d = np.asarray(self.direction, dtype=float).reshape(3)
            n = np.linalg.norm(d)
            if abs(n - 1.0) > 1e-9:
                raise ValueError(f"target direction must be unit length, got norm {n}")
            object.__setattr__(self, "direction", d)

    def to_json(self) -> dict:
        doc = {"P": [float(x) for x in self.position]}
        if self.direction is not None:
            doc["R"] = [float(x) for x in self.direction]
        return doc

    @staticmethod
    def from_json(doc: dict) -> "IkTarget":
        unknown = set(doc) - {"P", "R"}
        if unknown:
            raise ValueError(f"unknown target fields: {sorted(unknown)}")
        direction = doc.get("R")
        return IkTarget(np.asarray(doc["P"], dtype=float), None if direction is None else np.asarray(direction, dtype=float))


@dataclass
class SolverOptions:
    """Tuning of the penalty Newton-Raphson solver."""

    chi: float = 0.5
    mu: float = 0.1
    max_iterations: int = 20
    convergence_threshold: float = 0.01
    step_damping: float = 0.5
    max_backtracks: int = 10
    restarts: int = 8
    seed: int = 0
    fd_step_length: float = 1e-3
    fd_step_angle: float = 1e-4
    record_objective: bool = False

    def __post_init__(self):
        if not (0.0 <= self.chi < 1.0):
            raise ValueError("chi must satisfy 0 <= chi < 1")
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not (0.0 < self.step_damping < 1.0):
            raise ValueError("step_damping must be in (0, 1)")

    def to_json(self) -> dict:
        return {
            "chi": self.chi,
            "mu": self.mu,
            "max_iterations": self.max_iterations,
            "convergence_threshold": self.convergence_threshold,
            "step_damping": self.step_damping,
            "max_backtracks": self.max_backtracks,
            "restarts": self.restarts,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SolverReport:
    """Outcome of one inverse-kinematics solve."""

    actuation: ActuationInput
    position_residual: float
    orientation_residual: Optional[float]
    iterations_used: int
    chi_used: float
    converged: bool
    constraint_violations: List[str] = field(default_factory=list)
    objective_trace: Optional[List[float]] = None

    def to_json(self) -> dict:
        return {
            "Q": self.actuation.to_json(),
            "position_residual_mm": float(self.position_residual),
            "orientation_residual": None
            if self.orientation_residual is None
            else float(self.orientation_residual),
            "iterations_used": int(self.iterations_used),
            "chi_used": float(self.chi_used),
            "converged": bool(self.converged),
            "constraint_violations": list(self.constraint_violations),
        }


# ---------------------------------------------------------------------------
# path following
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PathSpec:
    """Ordered tip waypoints, optionally closed into a loop."""

    name: str
    waypoints: List[IkTarget]
    closed: bool = False

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("a path needs at least 2 waypoints")

    def to_csv_rows(self) -> Iterable[str]:
        yield "x_mm,y_mm,z_mm,rx,ry,rz"
        for wp in self.waypoints:
            p = wp.position
            if wp.direction is None:
                yield f"{p[0]!r},{p[1]!r},{p[2]!r},,,"
            else:
                d = wp.direction
                yield f"{p[0]!r},{p[1]!r},{p[2]!r},{d[0]!r},{d[1]!r},{d[2]!r}"


@dataclass(frozen=True)
class FollowRecord:
    """One waypoint outcome inside a follow run."""

    target: IkTarget
    achieved: TipConfiguration
    actuation: ActuationInput
    residual: float
    iterations: int
    converged: bool

    def to_json(self) -> dict:
        doc = {
            "target": self.target.to_json(),
            "achieved": self.achieved.to_json(),
            "Q": self.actuation.to_json(),
            "residual_mm": float(self.residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }
        return doc


@dataclass(frozen=True)
class FollowTrace:
    """Complete record of a path-following run plus aggregate error metrics."""

    path_name: str
    mode: str
    records: List[FollowRecord]

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records], dtype=float)

    @property
    def rmse(self) -> float:
        res = self.residuals
        return float(np.sqrt(np.mean(res**2)))

    @property
    def max_error(self) -> float:
        return float(self.residuals.max())

    @property
    def total_iterations(self) -> int:
        return int(sum(r.iterations for r in self.records))

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.records)

    def summary_json(self) -> dict:
        return {
            "path": self.path_name,
            "mode": self.mode,
            "waypoints": len(self.records),
            "rmse_mm": self.rmse,
            "max_error_mm": self.max_error,
            "total_iterations": self.total_iterations,
            "all_converged": self.all_converged,
        }
