"""Finite-difference Jacobian, singularity test, and resolved-rate stepping.

The tip state is the stacked 6-vector [P; R] (position then unit direction),
differentiated against the actuation order (q_p, D_p, phi_p, q_d, D_d,
phi_d). No analytic Jacobian exists for the nested chain, so central
differences against the forward model are the reference, degrading to
one-sided probes at the actuation box faces.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .config import RobotConfig
from .kinematics import fk_eval, project_to_limits, pull_limit
from .specs import ActuationInput, ActuationLimits, SingularityError

MIN_STEP = 1e-9
DEFAULT_STEPS = np.array([1e-3, 1e-3, 1e-4, 1e-3, 1e-3, 1e-4])
SINGULARITY_TOL = 1e-8


def tip_vector(Q: ActuationInput, robot: RobotConfig) -> np.ndarray:
    """Stacked [P; R] tip state of a raw actuation input."""
    P, R = fk_eval(Q.as_array(), robot)
    return np.concatenate([P, R])


def jacobian_fd(
    Q: ActuationInput,
    robot: RobotConfig,
    limits: Optional[ActuationLimits] = None,
    steps: Optional[np.ndarray] = None,
) -> np.ndarray:
    """6x6 finite-difference Jacobian of the tip state.

    Central differences everywhere except within one step of a box face,
    where the probe pair collapses to a one-sided difference. Direction
    angles are treated as circular and always probed centrally. Probes that
    straddle q_d = 0 mix the advanced and retracted regimes, so estimates
    within one step of that boundary are not smooth.
    """
    steps = DEFAULT_STEPS if steps is None else np.asarray(steps, dtype=float)
    if steps.shape != (6,):
        raise ValueError("six per-DoF steps required")
    if np.any(steps < MIN_STEP):
        raise ValueError(f"finite-difference steps below {MIN_STEP} are rejected")
    q = Q.as_array()
    lo = np.array([0.0, 0.0, -math.inf, -math.inf, 0.0, -math.inf])
    hi = np.full(6, math.inf)
    if limits is not None:
        lo[3] = limits.q_d_min
        hi[0] = limits.q_p_max
        hi[3] = limits.q_d_max
        hi[1] = pull_limit(robot.proximal, limits)
        hi[4] = pull_limit(robot.distal, limits)
    probes = np.empty((12, 6))
    spans = np.empty(6)
    for k in range(6):
        h = steps[k]
        up = min(q[k] + h, hi[k]) if limits is not None else q[k] + h
        down = max(q[k] - h, lo[k]) if limits is not None else q[k] - h
        if up - down <= 0.0:
            raise ValueError(f"DoF {k} has no room to probe inside its bounds")
        probes[2 * k] = q
        probes[2 * k, k] = up
        probes[2 * k + 1] = q
        probes[2 * k + 1, k] = down
        spans[k] = up - down
    P, R = fk_eval(probes, robot)
    theta = np.hstack([P, R])
    return (theta[0::2] - theta[1::2]).T / spans


class SingularityCheck(NamedTuple):
    is_singular: bool
    sigma_min: float


def detect_singularity(J: np.ndarray, tolerance: float = SINGULARITY_TOL) -> SingularityCheck:
    """Relative rank test of the tip Jacobian via its singular values.

    The unit-norm direction rows always satisfy R . dR/dQ = 0, so the full
    6x6 matrix carries one structural zero singular value at every pose; a
    tip state of 3 positions plus a unit direction spans at most rank 5.
    The test therefore compares the smallest task-capable singular value
    (the fifth) against the largest, and reports that value. A pose is
    singular when the effective rank drops below 5, e.g. the straight pose
    whose direction-angle columns vanish.
    """
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)):
        raise ValueError("Jacobian contains non-finite entries")
    sigma = np.linalg.svd(J, compute_uv=False)
    sigma_max = float(sigma[0])
    sigma_task = float(sigma[4])
    return SingularityCheck(
        is_singular=bool(sigma_task < tolerance * max(sigma_max, 1e-300)),
        sigma_min=sigma_task,
    )


def resolved_rate_step(
    Q_k: ActuationInput,
    theta_target: np.ndarray,
    J_k: np.ndarray,
    robot: RobotConfig,
    limits: Optional[ActuationLimits] = None,
    tolerance: float = SINGULARITY_TOL,
) -> ActuationInput:
    """One resolved-rate update toward a nearby tip state target.

    Solves the undamped normal equations of the linearized model in their
    least-squares (pseudoinverse) form, since the unit-direction rows leave
    J' J with a structural null space at every pose, then clips the result
    into the actuation box (the conditional distal direction bound
    included). Raises :class:`SingularityError` when the pose itself is
    rank deficient.
    """
    if limits is None:
        limits = robot.limits
    theta_target = np.asarray(theta_target, dtype=float).reshape(6)
    check = detect_singularity(J_k, tolerance)
    if check.is_singular:
        sigma = np.linalg.svd(np.asarray(J_k, dtype=float), compute_uv=False)
        raise SingularityError(sigma_min=sigma[4], sigma_max=sigma[0])
    error = theta_target - tip_vector(Q_k, robot)
    delta = np.linalg.lstsq(np.asarray(J_k, dtype=float), error, rcond=None)[0]
    projected, _ = project_to_limits(
        ActuationInput.from_array(Q_k.as_array() + delta), robot, limits
    )
    return projected
