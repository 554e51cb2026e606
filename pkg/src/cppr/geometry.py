"""Slit-pattern design relations and the analytic stiffness model.

The patterned tubes bend as circular arcs, which ties the slit layout of the
two tubes of a segment together. The functions here evaluate those relations
both ways: compute a quantity from a chosen set of inputs, or report the
residual of an over-determined parameter set so a designer can see by how
much a candidate layout misses closure. Manufactured parameter tables are
treated as data to check, never as ground truth.

Cross sections keep an uncut area spanning a central angle ``alpha``; the
second moment of that area drives the cantilever deflection under a tip load.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .specs import SegmentSpec, SlitPattern

# Handbook Young's modulus for 316L medical steel, MPa. The tubes are 316L;
# override per call for other alloys (Nitinol is about 30000 MPa).
E_316L_MPA = 193000.0


def max_bend_from_outer_slits(pattern: SlitPattern, segment: SegmentSpec) -> float:
    """Maximum bend angle closing all outer-tube slits.

    Eliminating the bend radius from the closed-slit arc relations of the
    outer tube leaves ``theta = N * s / (2 * d_o)``.

    Parameters
    ----------
    pattern : SlitPattern
        Slit layout of the segment's outer tube.
    segment : SegmentSpec
        Segment supplying the backbone offset ``d_o``.

    Returns
    -------
    float
        Bend angle in radians.
    """
    return max_bend_from_slit_geometry(pattern.count, pattern.slit_width, segment.d_o)


def max_bend_from_slit_geometry(count: float, slit_width: float, d_o: float) -> float:
    """Raw form of :func:`max_bend_from_outer_slits` for scalar studies."""
    if d_o <= 0.0:
        raise ValueError(f"d_o must be positive, got {d_o}")
    return count * slit_width / (2.0 * d_o)


def slit_relation_residual(
    outer: SlitPattern, inner: SlitPattern, segment: SegmentSpec
) -> float:
    """Closure residual of the inter-tube slit relation, in mm.

    Zero means the outer and inner patterns are mutually consistent with the
    shared-arc geometry of the segment. Manufactured tables generally do not
    close exactly; the signed residual quantifies the gap.
    """
    return slit_relation_residual_raw(
        L_o=segment.outer_tube.steerable_length,
        L_i=segment.inner_tube.steerable_length,
        N_i=inner.count,
        s_i=inner.slit_width,
        beta_i=inner.tilt_angle,
        N_o=outer.count,
        s_o=outer.slit_width,
        d_o=segment.d_o,
        d_i=segment.d_i,
    )


def slit_relation_residual_raw(
    L_o: float,
    L_i: float,
    N_i: float,
    s_i: float,
    beta_i: float,
    N_o: float,
    s_o: float,
    d_o: float,
    d_i: float,
) -> float:
    """Residual (LHS - RHS) of the inter-tube relation with bare numbers.

    Accepts fractional slit counts and degenerate values so that limits and
    solve-then-verify constructions can be checked.
    """
    cos_b = math.cos(beta_i)
    if abs(cos_b) < 1e-12:
        raise ValueError("inner tilt angle of pi/2 makes the slit extension undefined")
    if d_o <= 0.0:
        raise ValueError(f"d_o must be positive, got {d_o}")
    lhs = L_o - L_i - N_i * s_i / cos_b
    rhs = (d_o - d_i) * N_o * s_o / (2.0 * d_o)
    return lhs - rhs


def consistent_inner_count(
    L_o: float,
    L_i: float,
    s_i: float,
    beta_i: float,
    N_o: float,
    s_o: float,
    d_o: float,
    d_i: float,
) -> float:
    """Inner-tube slit count that closes the inter-tube relation exactly.

    Returns the real-valued count; a manufacturable layout needs it rounded,
    which reintroduces a residual of up to half a slit extension.
    """
    if s_i <= 0.0:
        raise ValueError("s_i must be positive")
    cos_b = math.cos(beta_i)
    if abs(cos_b) < 1e-12:
        raise ValueError("inner tilt angle of pi/2 makes the slit extension undefined")
    if d_o <= 0.0:
        raise ValueError(f"d_o must be positive, got {d_o}")
    rhs = (d_o - d_i) * N_o * s_o / (2.0 * d_o)
    return cos_b * (L_o - L_i - rhs) / s_i


class SlitCount(NamedTuple):
    """Rounded slit count plus the exact pitch quotient it came from."""

    count: int
    quotient: float


def slit_count_from_pitch(length: float, slit_height: float, gap_distance: float) -> SlitCount:
    """Number of slit pitches fitting a patterned length.

    The pitch is ``d_h + d_g``. The rounded count is what manufacturing uses;
    the exact quotient is reported alongside so a non-integer fit is visible
    instead of silently absorbed.
    """
    pitch = slit_height + gap_distance
    if pitch <= 0.0:
        raise ValueError("slit_height + gap_distance must be positive")
    if length <= 0.0:
        raise ValueError("length must be positive")
    quotient = length / pitch
    return SlitCount(count=int(math.floor(quotient + 0.5)), quotient=quotient)


def second_moment(alpha: float, r_od: float, r_id: float) -> float:
    """Second moment of area of a slit cross section, in mm^4.

    ``alpha`` is the central angle of the uncut area; ``alpha = 2*pi`` is the
    full annulus, ``alpha = 0`` a fully cut section.

    Parameters
    ----------
    alpha : float
        Central angle of the uncut area, radians, within [0, 2*pi].
    r_od, r_id : float
        Outer and inner radii of the tube wall, mm.

    Returns
    -------
    float
        ``(1/8) * (alpha - sin(alpha)) * (r_od^4 - r_id^4)``.
    """
    if not 0.0 <= alpha <= 2.0 * math.pi:
        raise ValueError(f"alpha must lie in [0, 2*pi], got {alpha}")
    if not r_od > r_id >= 0.0:
        raise ValueError(f"require r_od > r_id >= 0, got {r_od}, {r_id}")
    return 0.125 * (alpha - math.sin(alpha)) * (r_od**4 - r_id**4)


def cantilever_deflection(force: float, length: float, modulus: float, moment: float) -> float:
    """Tip deflection of a cantilevered segment under a transverse tip load.

    Parameters
    ----------
    force : float
        Tip load in newtons (zero is allowed and gives zero deflection).
    length : float
        Beam length in mm.
    modulus : float
        Young's modulus in MPa.
    moment : float
        Second moment of area in mm^4.

    Returns
    -------
    float
        Deflection ``F * L^3 / (3 * E * I)`` in mm.
    """
    if force < 0.0:
        raise ValueError("force must be non-negative")
    if length <= 0.0 or modulus <= 0.0:
        raise ValueError("length and modulus must be positive")
    if moment <= 0.0:
        raise ValueError("degenerate section: second moment must be positive")
    return force * length**3 / (3.0 * modulus * moment)


def deflection_sweep(
    alphas: np.ndarray,
    r_od: float,
    r_id: float,
    force: float,
    length: float,
    modulus: float = E_316L_MPA,
) -> np.ndarray:
    """Deflection curve over a grid of uncut angles.

    Returns an (n, 3) array with columns (alpha_rad, I_mm4, w_mm), the rows
    of the exported CSV.
    """
    alphas = np.asarray(alphas, dtype=float)
    rows = np.empty((alphas.size, 3))
    for k, alpha in enumerate(alphas.ravel()):
        moment = second_moment(float(alpha), r_od, r_id)
        w = math.inf if moment == 0.0 else cantilever_deflection(force, length, modulus, moment)
        rows[k] = (alpha, moment, w)
    return rows
