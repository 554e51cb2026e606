"""Constrained inverse kinematics: penalty objective and Newton iteration.

The objective is the tip position error norm plus a weighted orientation
error norm plus linear penalties on actuation-box violations. The retracted
distal equality constraint (shared curvature, bending sense in {0, pi}) is
enforced by substitution inside the forward evaluation rather than penalized,
so reported solutions satisfy it exactly.

Each iteration takes a Newton least-squares step on the stacked tip residual
(finite-difference Jacobian, box projection, backtracking damping judged on
the penalized objective), which converges quadratically near a solution
where a plain gradient step on the scalar objective crawls. A position-only
fallback phase takes over when the weighted phase stalls, and seeded random
feasible restarts rerun both phases when needed.
"""
from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np

from .config import RobotConfig
from .kinematics import (
    fk_eval,
    fk_pose_batch,
    nesting_substitute,
    project_to_limits,
    pull_limit,
    sample_feasible,
)
from .specs import (
    ActuationInput,
    ActuationLimits,
    IkTarget,
    SolverFault,
    SolverOptions,
    SolverReport,
    TWO_PI,
    wrap_angle,
)

_FLAT_GRAD = 1e-18


def _violations(Q: np.ndarray, robot: RobotConfig, limits: ActuationLimits) -> np.ndarray:
    """Summed box violations per row; direction angles are wrapped first."""
    Q = np.atleast_2d(Q)
    q_p, D_p, phi_p, q_d, D_d, phi_d = (Q[:, k] for k in range(6))
    phi_p = wrap_angle(phi_p)
    phi_d = wrap_angle(phi_d)
    v = np.maximum(0.0, -q_p) + np.maximum(0.0, q_p - limits.q_p_max)
    v += np.maximum(0.0, limits.q_d_min - q_d) + np.maximum(0.0, q_d - limits.q_d_max)
    bound_p = pull_limit(robot.proximal, limits)
    v += np.maximum(0.0, -D_p) + np.maximum(0.0, D_p - bound_p)
    bound_d = pull_limit(robot.distal, limits)
    v += np.maximum(0.0, -D_d) + np.maximum(0.0, D_d - bound_d)
    # wrapped phi_p always satisfies its [0, 2*pi] box; phi_d keeps the
    # conditional sign-function bound, with the violation measured as the
    # circular distance to the feasible arc so the penalty stays smooth
    # across the wrap seam
    bound = (np.sign(q_d) + 1.0) * math.pi
    outside = phi_d > bound
    v += np.where(outside, np.minimum(phi_d - bound, TWO_PI - phi_d), 0.0)
    return v


def _objective_batch(
    Q: np.ndarray,
    target: IkTarget,
    robot: RobotConfig,
    limits: ActuationLimits,
    chi: float,
    mu: float,
) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    P, R = fk_pose_batch(nesting_substitute(Q, robot), robot)
    H = np.linalg.norm(P - target.position, axis=1)
    if chi != 0.0 and target.direction is not None:
        H = H + chi * np.linalg.norm(R - target.direction, axis=1)
    return H + mu * _violations(Q, robot, limits)


def penalty_objective(
    Q: ActuationInput,
    target: IkTarget,
    robot: RobotConfig,
    limits: ActuationLimits,
    opts: Optional[SolverOptions] = None,
) -> float:
    """Penalized tip-error objective at one actuation input.

    Total over all inputs: the forward model runs on the nesting-substituted
    form while the penalties measure the raw violations, so an infeasible
    point always scores strictly worse than its feasible shadow.
    """
    opts = opts or SolverOptions()
    value = _objective_batch(Q.as_array(), target, robot, limits, opts.chi, opts.mu)[0]
    return float(value)


def _fd_steps(opts: SolverOptions) -> np.ndarray:
    return np.array(
        [
            opts.fd_step_length,
            opts.fd_step_length,
            opts.fd_step_angle,
            opts.fd_step_length,
            opts.fd_step_length,
            opts.fd_step_angle,
        ]
    )


def _residual_and_jacobian(
    q: np.ndarray,
    target: IkTarget,
    robot: RobotConfig,
    chi: float,
    opts: SolverOptions,
) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked tip residual [f - P; chi (g - R)] and its FD Jacobian."""
    steps = _fd_steps(opts)
    probes = np.repeat(q[None, :], 13, axis=0)
    for k in range(6):
        probes[2 * k, k] += steps[k]
        probes[2 * k + 1, k] -= steps[k]
    P, R = fk_eval(probes, robot)
    use_dir = chi != 0.0 and target.direction is not None
    if use_dir:
        values = np.hstack([P - target.position, chi * (R - target.direction)])
    else:
        values = P - target.position
    jac = (values[0::2][:6] - values[1::2]).T / (2.0 * steps)
    return values[12], jac


def _newton_phase(
    q0: np.ndarray,
    H0: float,
    chi: float,
    target: IkTarget,
    robot: RobotConfig,
    limits: ActuationLimits,
    opts: SolverOptions,
    trace: Optional[List[float]],
) -> Tuple[np.ndarray, float, int]:
    """One damped Newton descent on the tip residual; returns best iterate.

    Steps solve the least-squares linear model of the stacked residual, are
    projected into the actuation box, and are accepted only when they lower
    the penalized objective, so the objective is non-increasing across
    accepted steps within a phase.
    """
    q, H = q0.copy(), H0
    best_q, best_H = q, H
    iterations = 0
    if trace is not None:
        trace.append(H)
    for _ in range(opts.max_iterations):
        if H <= opts.convergence_threshold:
            break
        residual, jac = _residual_and_jacobian(q, target, robot, chi, opts)
        if not (np.all(np.isfinite(jac)) and np.all(np.isfinite(residual))):
            raise SolverFault("non-finite residual or Jacobian in Newton iteration")
        step = np.linalg.lstsq(jac, -residual, rcond=None)[0]
        if float(step @ step) < _FLAT_GRAD:
            break
        scale = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            candidate = ActuationInput.from_array(q + scale * step)
            q_new = project_to_limits(candidate, robot, limits)[0].as_array()
            H_new = float(
                _objective_batch(q_new, target, robot, limits, chi, opts.mu)[0]
            )
            if math.isnan(H_new):
                raise SolverFault("objective evaluated to NaN")
            if H_new < H:
                accepted = True
                break
            scale *= opts.step_damping
        if not accepted:
            break
        q, H = q_new, H_new
        iterations += 1
        if trace is not None:
            trace.append(H)
        if H < best_H:
            best_q, best_H = q, H
    return best_q, best_H, iterations


def _report(
    q: np.ndarray,
    chi_used: float,
    iterations: int,
    target: IkTarget,
    robot: RobotConfig,
    limits: ActuationLimits,
    opts: SolverOptions,
    trace: Optional[List[float]],
) -> SolverReport:
    """Project the iterate into the feasible box and grade the result."""
    projected, moved = project_to_limits(ActuationInput.from_array(q), robot, limits)
    P, R = fk_eval(projected.as_array(), robot)
    pos_res = float(np.linalg.norm(P - target.position))
    orient_res = (
        None if target.direction is None else float(np.linalg.norm(R - target.direction))
    )
    objective = pos_res
    if chi_used != 0.0 and orient_res is not None:
        objective += chi_used * orient_res
    return SolverReport(
        actuation=projected,
        position_residual=pos_res,
        orientation_residual=orient_res,
        iterations_used=iterations,
        chi_used=chi_used,
        converged=objective <= opts.convergence_threshold,
        constraint_violations=moved,
        objective_trace=None if trace is None else list(trace),
    )


def solve_ik(
    target: IkTarget,
    robot: RobotConfig,
    limits: Optional[ActuationLimits] = None,
    opts: Optional[SolverOptions] = None,
    initial_guess: Optional[ActuationInput] = None,
) -> SolverReport:
    """Actuation inputs reaching a target tip configuration.

    Runs the weighted phase first; if it cannot reach the convergence
    threshold the orientation weight is dropped and the position-only phase
    continues from the best weighted iterate. Both phases rerun from seeded
    random feasible starts when needed. Non-convergence is reported, not
    raised.
    """
    if limits is None:
        limits = robot.limits
    opts = opts or robot.solver
    if not np.all(np.isfinite(target.position)):
        raise SolverFault("target position is not finite")
    rng = np.random.default_rng(opts.seed)
    trace: Optional[List[float]] = [] if opts.record_objective else None

    q_start = (initial_guess or ActuationInput()).as_array()
    chi = opts.chi if target.direction is not None else 0.0
    total_iterations = 0
    best_q: Optional[np.ndarray] = None
    best_pos = math.inf

    def position_residual(q: np.ndarray) -> float:
        P, _ = fk_eval(q, robot)
        return float(np.linalg.norm(P - target.position))

    for attempt in range(1 + opts.restarts):
        if attempt > 0:
            q_start = sample_feasible(1, robot, limits, rng)[0]
        H0 = float(_objective_batch(q_start, target, robot, limits, chi, opts.mu)[0])
        if math.isnan(H0):
            raise SolverFault("objective evaluated to NaN at the starting point")
        q1, H1, it1 = _newton_phase(q_start, H0, chi, target, robot, limits, opts, trace)
        total_iterations += it1
        if H1 <= opts.convergence_threshold:
            return _report(q1, chi, total_iterations, target, robot, limits, opts, trace)
        if chi != 0.0:
            # fallback: drop the orientation term and continue from the best
            # weighted iterate, pursuing position only
            H1b = float(_objective_batch(q1, target, robot, limits, 0.0, opts.mu)[0])
            q2, H2, it2 = _newton_phase(q1, H1b, 0.0, target, robot, limits, opts, trace)
            total_iterations += it2
            if H2 <= opts.convergence_threshold:
                return _report(q2, 0.0, total_iterations, target, robot, limits, opts, trace)
            candidates = (q1, q2)
        else:
            candidates = (q1,)
        for q in candidates:
            res = position_residual(q)
            if res < best_pos:
                best_q, best_pos = q, res

    assert best_q is not None
    return _report(best_q, 0.0, total_iterations, target, robot, limits, opts, trace)
