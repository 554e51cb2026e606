"""Pull-to-bend mapping and piecewise constant curvature chain kinematics.

The chain from the base frame to the tip is: a translation ``q_p`` along the
base z axis, the proximal arc, an exposed straight run of length ``q_d`` when
the distal segment is advanced, and the distal arc. Retracting the distal
segment (``q_d < 0``) nests its steerable section inside the proximal one;
the nested portion conforms to the proximal arc and the exposed remainder
must share the proximal curvature, bending in the proximal plane with the
sense selected by ``phi_d`` in {0, pi}.

Sign convention for the push/pull distance: the bend angle is ``|D| /
(d_o + d_i)``; a positive (pull) distance bends toward ``phi``, a negative
(push) distance toward ``phi + pi``. Inside the actuation box only D >= 0
occurs, so the box-feasible map is the linear ``theta = D / (d_o + d_i)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import RobotConfig
from .specs import (
    ActuationInput,
    ActuationLimits,
    LimitViolation,
    NestingViolation,
    RigidTransform,
    SegmentArc,
    SegmentSpec,
    ShapePolyline,
    TipConfiguration,
    TWO_PI,
    wrap_angle,
)

# Below this bend angle the arc profile switches to its series expansion to
# stay finite and smooth through the straight configuration.
STRAIGHT_EPS = 1e-6

# Exact membership tolerance for the nested bending-sense angle.
NEST_TOL = 1e-9


# ---------------------------------------------------------------------------
# pull <-> bend
# ---------------------------------------------------------------------------
def pull_limit(segment: SegmentSpec, limits: ActuationLimits) -> float:
    """Effective per-segment pull bound: travel limit clipped by the design bend."""
    return min(limits.D_max, segment.max_bend_angle * segment.pull_per_radian)


def bend_angle_from_pull(
    D: float, segment: SegmentSpec, limits: Optional[ActuationLimits] = None
) -> float:
    """Bend angle produced by a push/pull distance.

    With ``limits`` given, |D| is checked against the segment's effective
    pull bound; without limits the bare linear map is evaluated (useful for
    what-if studies beyond the design bend).
    """
    if limits is not None:
        bound = pull_limit(segment, limits)
        if abs(D) > bound + 1e-12:
            raise LimitViolation("D", D, f"|D| exceeds the effective pull bound {bound:.6g} mm")
    return abs(D) / segment.pull_per_radian


def pull_from_bend_angle(theta: float, segment: SegmentSpec) -> float:
    """Push/pull distance for a requested bend angle (inverse of the linear map)."""
    if theta < 0.0:
        raise LimitViolation("theta", theta, "bend angle must be non-negative")
    if theta > segment.max_bend_angle + 1e-12:
        raise LimitViolation(
            "theta", theta, f"bend angle exceeds the design maximum {segment.max_bend_angle:.6g} rad"
        )
    return theta * segment.pull_per_radian


# ---------------------------------------------------------------------------
# constant-curvature arc building blocks
# ---------------------------------------------------------------------------
def _arc_profile(theta):
    """A = (1 - cos t)/t and B = sin t / t, series-expanded through t = 0."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < STRAIGHT_EPS
    safe = np.where(small, 1.0, theta)
    A = np.where(small, theta / 2.0 - theta**3 / 24.0, (1.0 - np.cos(safe)) / safe)
    B = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    return A, B


def _cc_rotation(phi, theta) -> np.ndarray:
    """Batched Rz(phi) @ Ry(theta) @ Rz(-phi) with shape (..., 3, 3)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    R = np.empty(np.broadcast(phi, theta).shape + (3, 3))
    R[..., 0, 0] = c * c * ct + s * s
    R[..., 0, 1] = s * c * (ct - 1.0)
    R[..., 0, 2] = c * st
    R[..., 1, 0] = s * c * (ct - 1.0)
    R[..., 1, 1] = s * s * ct + c * c
    R[..., 1, 2] = s * st
    R[..., 2, 0] = -st * c
    R[..., 2, 1] = -st * s
    R[..., 2, 2] = ct
    return R


def segment_transform(arc: SegmentArc) -> RigidTransform:
    """Rigid transform across one constant-curvature arc.

    Rotate by ``direction`` about the base z axis, traverse the arc in the
    x-z plane, rotate back. The straight limit is an exact z translation.
    """
    A, B = _arc_profile(arc.bend_angle)
    x = arc.arc_length * float(A)
    z = arc.arc_length * float(B)
    c, s = math.cos(arc.direction), math.sin(arc.direction)
    translation = np.array([x * c, x * s, z])
    rotation = _cc_rotation(arc.direction, arc.bend_angle)
    return RigidTransform(rotation, translation)


def _translation_transform(length: float) -> RigidTransform:
    return RigidTransform(np.eye(3), np.array([0.0, 0.0, length]))


# ---------------------------------------------------------------------------
# raw 6-vector helpers (array order q_p, D_p, phi_p, q_d, D_d, phi_d)
# ---------------------------------------------------------------------------
def _effective_angles(D, phi, per_rad):
    """Bend magnitude and effective direction under the signed-pull convention."""
    theta = np.abs(D) / per_rad
    phi_eff = np.where(np.asarray(D) < 0.0, phi + math.pi, phi)
    return theta, phi_eff


def nesting_pull(D_p: float, proximal: SegmentSpec, distal: SegmentSpec) -> float:
    """Distal pull matching the proximal curvature, required while nested."""
    kappa_p = (abs(D_p) / proximal.pull_per_radian) / proximal.steerable_length
    return kappa_p * distal.steerable_length * distal.pull_per_radian


def nesting_substitute(Q: np.ndarray, robot: RobotConfig) -> np.ndarray:
    """Canonical evaluation form of raw actuation vectors.

    Wraps both direction angles and, for retracted rows, snaps ``phi_d`` to
    the nearer of {0, pi} and replaces ``D_d`` with the curvature-matching
    pull. Non-retracted rows are unchanged. Works on (n, 6) or (6,) arrays
    and always copies.
    """
    Q = np.array(Q, dtype=float, copy=True)
    flat = Q.ndim == 1
    if flat:
        Q = Q[None, :]
    Q[:, 2] = wrap_angle(Q[:, 2])
    Q[:, 5] = wrap_angle(Q[:, 5])
    nested = Q[:, 3] < 0.0
    if nested.any():
        phi_d = Q[nested, 5]
        dist_to_zero = np.minimum(phi_d, TWO_PI - phi_d)
        Q[nested, 5] = np.where(dist_to_zero <= np.abs(phi_d - math.pi), 0.0, math.pi)
        Q[nested, 4] = (
            np.abs(Q[nested, 1])
            / robot.proximal.pull_per_radian
            / robot.proximal.steerable_length
            * robot.distal.steerable_length
            * robot.distal.pull_per_radian
        )
    return Q[0] if flat else Q


def fk_pose_batch(Q: np.ndarray, robot: RobotConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized tip pose of raw actuation rows; no limit checking.

    Parameters
    ----------
    Q : ndarray, shape (n, 6)
        Actuation rows. Retracted rows are expected in canonical form (see
        :func:`nesting_substitute`); their ``phi_d`` is read as the bending
        sense within the proximal plane.

    Returns
    -------
    positions : ndarray, shape (n, 3)
    directions : ndarray, shape (n, 3)
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[1] != 6:
        raise ValueError(f"expected an (n, 6) actuation array, got shape {Q.shape}")
    prox, dist = robot.proximal, robot.distal
    q_p, D_p, phi_p, q_d, D_d, phi_d = (Q[:, k] for k in range(6))

    th_p, ph_p = _effective_angles(D_p, phi_p, prox.pull_per_radian)
    L_p = prox.steerable_length
    A_p, B_p = _arc_profile(th_p)
    R1 = _cc_rotation(ph_p, th_p)
    o1 = np.stack(
        [L_p * A_p * np.cos(ph_p), L_p * A_p * np.sin(ph_p), q_p + L_p * B_p], axis=-1
    )

    nested = q_d < 0.0
    L_d = dist.steerable_length
    exposed = np.where(nested, np.clip(L_d + q_d, 0.0, None), L_d)
    run = np.where(nested, 0.0, q_d)
    th_d_full, ph_d = _effective_angles(D_d, phi_d, dist.pull_per_radian)
    th_d = np.where(nested, th_d_full * exposed / L_d, th_d_full)
    # Nested rows bend in the proximal plane; phi_d is the sense within it.
    ph_d = np.where(nested, ph_p + phi_d, ph_d)

    A_d, B_d = _arc_profile(th_d)
    local = np.stack(
        [
            exposed * A_d * np.cos(ph_d),
            exposed * A_d * np.sin(ph_d),
            run + exposed * B_d,
        ],
        axis=-1,
    )
    R2 = _cc_rotation(ph_d, th_d)
    positions = o1 + np.einsum("nij,nj->ni", R1, local)
    R_tip = np.einsum("nij,njk->nik", R1, R2)
    directions = R_tip[:, :, 2]
    return positions, directions


def fk_eval(Q: np.ndarray, robot: RobotConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Total-function tip pose of raw rows: canonicalize nesting, then FK."""
    Q = np.asarray(Q, dtype=float)
    flat = Q.ndim == 1
    if flat:
        Q = Q[None, :]
    P, R = fk_pose_batch(nesting_substitute(Q, robot), robot)
    if flat:
        return P[0], R[0]
    return P, R


# ---------------------------------------------------------------------------
# validation and projection
# ---------------------------------------------------------------------------
def validate_actuation(Q: ActuationInput, robot: RobotConfig, limits: ActuationLimits) -> None:
    """Raise if ``Q`` violates the actuation box or the nesting constraint."""
    tol = 1e-9
    if not -tol <= Q.q_p <= limits.q_p_max + tol:
        raise LimitViolation("q_p", Q.q_p, f"allowed [0, {limits.q_p_max}]")
    if not limits.q_d_min - tol <= Q.q_d <= limits.q_d_max + tol:
        raise LimitViolation("q_d", Q.q_d, f"allowed [{limits.q_d_min}, {limits.q_d_max}]")
    bound_p = pull_limit(robot.proximal, limits)
    if not -tol <= Q.D_p <= bound_p + tol:
        raise LimitViolation("D_p", Q.D_p, f"allowed [0, {bound_p:.6g}]")
    bound_d = pull_limit(robot.distal, limits)
    if not -tol <= Q.D_d <= bound_d + tol:
        raise LimitViolation("D_d", Q.D_d, f"allowed [0, {bound_d:.6g}]")
    if not -tol <= Q.phi_p <= TWO_PI + tol:
        raise LimitViolation("phi_p", Q.phi_p, "allowed [0, 2*pi]")
    if not -tol <= Q.phi_d <= TWO_PI + tol:
        raise LimitViolation("phi_d", Q.phi_d, "allowed [0, 2*pi]")
    if Q.q_d < 0.0:
        if min(abs(Q.phi_d), abs(Q.phi_d - math.pi), abs(Q.phi_d - TWO_PI)) > NEST_TOL:
            raise NestingViolation(
                "phi_d", f"retracted distal requires phi_d in {{0, pi}}, got {Q.phi_d:.6g}"
            )
        matched = nesting_pull(Q.D_p, robot.proximal, robot.distal)
        if abs(Q.D_d - matched) > NEST_TOL:
            raise NestingViolation(
                "curvature",
                f"retracted distal requires D_d = {matched:.9g} mm to match the proximal curvature, got {Q.D_d:.9g}",
            )


def within_limits(
    Q: ActuationInput,
    robot: RobotConfig,
    limits: ActuationLimits,
    tol: float = 1e-6,
    sign_form: bool = True,
) -> bool:
    """Feasibility test of the box plus the conditional phi_d rule.

    With ``sign_form`` the distal direction bound is the optimizer's
    ``[0, (sign(q_d) + 1) * pi]`` written for retracted states as membership
    in {0, pi}; otherwise the plain [0, 2*pi] box applies whenever the distal
    is not retracted.
    """
    checks = [
        -tol <= Q.q_p <= limits.q_p_max + tol,
        limits.q_d_min - tol <= Q.q_d <= limits.q_d_max + tol,
        -tol <= Q.D_p <= pull_limit(robot.proximal, limits) + tol,
        -tol <= Q.phi_p <= TWO_PI + tol,
    ]
    if Q.q_d < 0.0:
        matched = nesting_pull(Q.D_p, robot.proximal, robot.distal)
        checks.append(abs(Q.D_d - matched) <= tol)
        checks.append(Q.phi_d in (0.0, math.pi) or min(abs(Q.phi_d), abs(Q.phi_d - math.pi)) <= tol)
    else:
        checks.append(-tol <= Q.D_d <= pull_limit(robot.distal, limits) + tol)
        if sign_form:
            bound = (np.sign(Q.q_d) + 1.0) * math.pi
            checks.append(-tol <= Q.phi_d <= bound + tol)
        else:
            checks.append(-tol <= Q.phi_d <= TWO_PI + tol)
    return all(checks)


def project_to_limits(
    Q: ActuationInput,
    robot: RobotConfig,
    limits: ActuationLimits,
    sign_form: bool = True,
) -> Tuple[ActuationInput, List[str]]:
    """Nearest feasible actuation plus the names of the fields that moved.

    Signed pulls are first normalized to the canonical non-negative form
    (D < 0 becomes |D| toward phi + pi), then the box is clipped and the
    nesting substitution applied for retracted states. ``sign_form`` selects
    the optimizer's distal direction bound (which pins phi_d <= pi exactly at
    q_d = 0); without it the plain [0, 2*pi) range applies for q_d >= 0.
    """
    moved: List[str] = []
    q_p, D_p, phi_p, q_d, D_d, phi_d = Q.as_array()

    def clip(value, lo, hi, name):
        clipped = min(max(value, lo), hi)
        if abs(clipped - value) > 1e-12:
            moved.append(name)
        return clipped

    if D_p < 0.0:
        D_p, phi_p = -D_p, phi_p + math.pi
    phi_p = float(wrap_angle(phi_p))
    q_p = clip(q_p, 0.0, limits.q_p_max, "q_p")
    q_d = clip(q_d, limits.q_d_min, limits.q_d_max, "q_d")
    D_p = clip(D_p, 0.0, pull_limit(robot.proximal, limits), "D_p")
    if q_d < 0.0:
        phi_w = float(wrap_angle(phi_d))
        snapped = 0.0 if min(phi_w, TWO_PI - phi_w) <= abs(phi_w - math.pi) else math.pi
        if abs(snapped - phi_w) > 1e-12 and abs(abs(snapped - phi_w) - TWO_PI) > 1e-12:
            moved.append("phi_d")
        phi_d = snapped
        matched = nesting_pull(D_p, robot.proximal, robot.distal)
        if abs(D_d - matched) > 1e-12:
            moved.append("D_d")
        D_d = matched
    else:
        if D_d < 0.0:
            D_d, phi_d = -D_d, phi_d + math.pi
        phi_d = float(wrap_angle(phi_d))
        D_d = clip(D_d, 0.0, pull_limit(robot.distal, limits), "D_d")
        if sign_form:
            bound = (np.sign(q_d) + 1.0) * math.pi
            if phi_d > bound:
                moved.append("phi_d")
                phi_d = float(bound)
    return ActuationInput(q_p, D_p, phi_p, q_d, D_d, phi_d), moved


# ---------------------------------------------------------------------------
# full forward kinematics with shape sampling
# ---------------------------------------------------------------------------
def _arc_points(theta: float, phi: float, length: float, step: float) -> np.ndarray:
    """Points along one arc at arclength spacing <= step, excluding the start."""
    n = max(1, int(math.ceil(length / step)))
    s = np.linspace(0.0, length, n + 1)[1:]
    psi = theta * s / length
    A, B = _arc_profile(psi)
    c, sn = math.cos(phi), math.sin(phi)
    x = s * A
    return np.stack([x * c, x * sn, s * B], axis=-1)


def forward_kinematics(
    Q: ActuationInput,
    robot: RobotConfig,
    limits: Optional[ActuationLimits] = None,
    polyline_step: float = 1.0,
) -> Tuple[TipConfiguration, ShapePolyline]:
    """Tip configuration and sampled backbone shape of a validated actuation.

    ``limits`` defaults to the robot's own actuation limits. Invalid inputs
    raise :class:`LimitViolation` or :class:`NestingViolation`.
    """
    if limits is None:
        limits = robot.limits
    validate_actuation(Q, robot, limits)
    prox, dist = robot.proximal, robot.distal

    th_p = abs(Q.D_p) / prox.pull_per_radian
    ph_p = Q.phi_p + (math.pi if Q.D_p < 0.0 else 0.0)
    nested = Q.q_d < 0.0
    exposed = dist.steerable_length + Q.q_d if nested else dist.steerable_length
    exposed = max(exposed, 0.0)
    th_d_full = abs(Q.D_d) / dist.pull_per_radian
    th_d = th_d_full * exposed / dist.steerable_length if nested else th_d_full
    ph_d = (ph_p + Q.phi_d) if nested else (Q.phi_d + (math.pi if Q.D_d < 0.0 else 0.0))

    points = [np.zeros(3)]
    labels = ["proximal-translation"]
    frame = RigidTransform.identity()

    def extend(local_pts: np.ndarray, label: str, transform: RigidTransform):
        nonlocal frame
        if len(local_pts):
            world = frame.apply(local_pts)
            points.extend(world)
            labels.extend([label] * len(world))
        frame = frame @ transform

    if Q.q_p > 0.0:
        n = max(1, int(math.ceil(Q.q_p / polyline_step)))
        zs = np.linspace(0.0, Q.q_p, n + 1)[1:]
        extend(
            np.stack([np.zeros_like(zs), np.zeros_like(zs), zs], axis=-1),
            "proximal-translation",
            _translation_transform(Q.q_p),
        )
    extend(
        _arc_points(th_p, ph_p, prox.steerable_length, polyline_step),
        "proximal-arc",
        segment_transform(SegmentArc(th_p, ph_p, prox.steerable_length)),
    )
    if not nested and Q.q_d > 0.0:
        n = max(1, int(math.ceil(Q.q_d / polyline_step)))
        zs = np.linspace(0.0, Q.q_d, n + 1)[1:]
        extend(
            np.stack([np.zeros_like(zs), np.zeros_like(zs), zs], axis=-1),
            "distal-exposed",
            _translation_transform(Q.q_d),
        )
    if exposed > 0.0:
        extend(
            _arc_points(th_d, ph_d, exposed, polyline_step),
            "distal-arc",
            segment_transform(SegmentArc(th_d, ph_d, exposed)),
        )

    tip = TipConfiguration(position=frame.translation, direction=frame.z_axis)
    return tip, ShapePolyline(np.asarray(points), labels)


def fk_tip(Q: ActuationInput, robot: RobotConfig, limits: Optional[ActuationLimits] = None) -> TipConfiguration:
    """Tip configuration only (validated); shape sampling skipped."""
    if limits is None:
        limits = robot.limits
    validate_actuation(Q, robot, limits)
    P, R = fk_eval(Q.as_array(), robot)
    return TipConfiguration(position=P, direction=R / np.linalg.norm(R))


# ---------------------------------------------------------------------------
# workspace estimation
# ---------------------------------------------------------------------------
def sample_feasible(
    n: int, robot: RobotConfig, limits: ActuationLimits, rng: np.random.Generator
) -> np.ndarray:
    """Uniform feasible actuation rows honouring the box and nesting rule.

    Draw order is fixed (per-DoF, then the retracted-row fixups) so a given
    generator state always yields the same sample.
    """
    q_p = rng.uniform(0.0, limits.q_p_max, n)
    D_p = rng.uniform(0.0, pull_limit(robot.proximal, limits), n)
    phi_p = rng.uniform(0.0, TWO_PI, n)
    q_d = rng.uniform(limits.q_d_min, limits.q_d_max, n)
    D_d = rng.uniform(0.0, pull_limit(robot.distal, limits), n)
    phi_d = rng.uniform(0.0, TWO_PI, n)
    sense = rng.integers(0, 2, n) * math.pi
    nested = q_d < 0.0
    phi_d = np.where(nested, sense, phi_d)
    ratio = (
        robot.distal.steerable_length
        * robot.distal.pull_per_radian
        / (robot.proximal.steerable_length * robot.proximal.pull_per_radian)
    )
    D_d = np.where(nested, D_p * ratio, D_d)
    return np.stack([q_p, D_p, phi_p, q_d, D_d, phi_d], axis=-1)


@dataclass(frozen=True)
class WorkspaceEstimate:
    """Monte Carlo voxel estimate of the reachable tip volume."""

    volume_cm3: float
    occupied_voxels: int
    samples: int
    voxel_mm: float
    seed: int
    tip_sample: np.ndarray  # small subsample kept for reporting

    def to_json(self) -> dict:
        return {
            "volume_cm3": self.volume_cm3,
            "occupied_voxels": self.occupied_voxels,
            "samples": self.samples,
            "voxel_mm": self.voxel_mm,
            "seed": self.seed,
        }


def workspace_volume(
    robot: RobotConfig,
    limits: Optional[ActuationLimits] = None,
    sample_count: int = 1_000_000,
    seed: int = 0,
    voxel: float = 1.0,
    chunk: int = 250_000,
    keep_tips: int = 5000,
) -> WorkspaceEstimate:
    """Voxelized Monte Carlo estimate of the reachable tip volume, in cm^3.

    Uses a counter-based generator (Philox) so the sample stream is
    reproducible and splittable for parallel sweeps.
    """
    if limits is None:
        limits = robot.limits
    if voxel <= 0.0:
        raise ValueError("voxel pitch must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    Q = sample_feasible(sample_count, robot, limits, rng)
    keys = []
    kept = []
    stride = max(1, sample_count // max(keep_tips, 1))
    for start in range(0, sample_count, chunk):
        P, _ = fk_pose_batch(Q[start : start + chunk], robot)
        idx = (np.floor(P / voxel).astype(np.int64) + (1 << 20)).astype(np.uint64)
        if idx.max() >= (1 << 21):
            raise ValueError("voxel pitch too fine for the key encoding")
        keys.append((idx[:, 0] << np.uint64(42)) | (idx[:, 1] << np.uint64(21)) | idx[:, 2])
        kept.append(P[::stride])
    occupied = np.unique(np.concatenate(keys)).size
    volume_mm3 = occupied * voxel**3
    return WorkspaceEstimate(
        volume_cm3=volume_mm3 / 1000.0,
        occupied_voxels=int(occupied),
        samples=sample_count,
        voxel_mm=voxel,
        seed=seed,
        tip_sample=np.concatenate(kept)[:keep_tips],
    )
