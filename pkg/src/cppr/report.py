"""Report rendering: delimited outputs with matplotlib figures alongside.

Everything lands in one output directory: CSV/NDJSON files carrying the raw
numbers and a PNG per study. Used by the ``report`` CLI subcommand; the
compute subcommands stay figure-free.
"""
from __future__ import annotations

import json
import math
import os
from typing import Optional

import numpy as np

from .config import RobotConfig, default_slits
from .geometry import E_316L_MPA, deflection_sweep
from .kinematics import WorkspaceEstimate, workspace_volume
from .pathlab import FollowOptions, follow_path, generate_circle, generate_spiral
from .specs import FollowTrace


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def write_deflection_report(
    out_dir: str,
    robot: RobotConfig,
    force: float = 0.49,
    modulus: float = E_316L_MPA,
    samples: int = 64,
) -> dict:
    """Deflection curve of the proximal outer tube over the uncut angle."""
    tube = robot.proximal.outer_tube
    r_od = tube.outer_diameter / 2.0
    r_id = tube.inner_diameter / 2.0
    alphas = np.linspace(1e-3, 2.0 * math.pi, samples)
    rows = deflection_sweep(alphas, r_od, r_id, force, tube.steerable_length, modulus)
    csv_path = os.path.join(out_dir, "deflection_curve.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("alpha_rad,I_mm4,w_mm\n")
        for alpha, moment, w in rows:
            fh.write(f"{alpha!r},{moment!r},{w!r}\n")

    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(rows[:, 0], rows[:, 1])
    ax1.set_xlabel("uncut angle alpha (rad)")
    ax1.set_ylabel("second moment I (mm$^4$)")
    ax2.semilogy(rows[:, 0], rows[:, 2])
    ax2.set_xlabel("uncut angle alpha (rad)")
    ax2.set_ylabel(f"tip deflection under {force} N (mm)")
    fig.tight_layout()
    png_path = os.path.join(out_dir, "deflection_curve.png")
    fig.savefig(png_path, dpi=140)
    plt.close(fig)
    return {"csv": csv_path, "png": png_path}


def write_workspace_report(
    out_dir: str,
    robot: RobotConfig,
    samples: int = 200_000,
    seed: int = 0,
    voxel: float = 1.0,
) -> dict:
    """Workspace volume estimate with an r-z density figure."""
    estimate = workspace_volume(robot, robot.limits, samples, seed, voxel)
    json_path = os.path.join(out_dir, "workspace.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(estimate.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    tips = estimate.tip_sample
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    r = np.hypot(tips[:, 0], tips[:, 1])
    ax.hexbin(r, tips[:, 2], gridsize=48, mincnt=1)
    ax.set_xlabel("radial distance (mm)")
    ax.set_ylabel("z (mm)")
    ax.set_title(f"tip workspace, {estimate.volume_cm3:.1f} cm$^3$")
    fig.tight_layout()
    png_path = os.path.join(out_dir, "workspace.png")
    fig.savefig(png_path, dpi=140)
    plt.close(fig)
    return {"json": json_path, "png": png_path, "volume_cm3": estimate.volume_cm3}


def _write_trace(out_dir: str, stem: str, trace: FollowTrace) -> dict:
    ndjson_path = os.path.join(out_dir, f"{stem}.ndjson")
    with open(ndjson_path, "w", encoding="utf-8") as fh:
        for record in trace.records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
    summary_path = os.path.join(out_dir, f"{stem}_summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(trace.summary_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    plt = _pyplot()
    fig = plt.figure(figsize=(9, 4))
    ax3d = fig.add_subplot(1, 2, 1, projection="3d")
    targets = np.array([r.target.position for r in trace.records])
    achieved = np.array([r.achieved.position for r in trace.records])
    ax3d.plot(targets[:, 0], targets[:, 1], targets[:, 2], "o-", ms=3, label="target")
    ax3d.plot(achieved[:, 0], achieved[:, 1], achieved[:, 2], ".--", ms=3, label="achieved")
    ax3d.set_xlabel("x (mm)")
    ax3d.set_ylabel("y (mm)")
    ax3d.set_zlabel("z (mm)")
    ax3d.legend(loc="upper left", fontsize=8)
    ax_err = fig.add_subplot(1, 2, 2)
    ax_err.plot(trace.residuals * 1000.0, ".-")
    ax_err.set_xlabel("waypoint")
    ax_err.set_ylabel("position error (um)")
    ax_err.set_title(f"rmse {trace.rmse * 1000:.1f} um, max {trace.max_error * 1000:.1f} um")
    fig.tight_layout()
    png_path = os.path.join(out_dir, f"{stem}.png")
    fig.savefig(png_path, dpi=140)
    plt.close(fig)
    return {"ndjson": ndjson_path, "summary": summary_path, "png": png_path}


def write_path_reports(
    out_dir: str,
    robot: RobotConfig,
    seed: int = 7,
    circle_points: int = 200,
) -> dict:
    """Spiral task (solver mode) and circle tracking (resolved-rate mode)."""
    spiral = generate_spiral(robot, seed=seed)
    spiral_trace = follow_path(spiral, robot, mode="ik")
    circle = generate_circle(robot, n_points=circle_points)
    circle_trace = follow_path(circle, robot, mode="resolved_rate")
    return {
        "spiral": _write_trace(out_dir, "spiral_ik", spiral_trace),
        "circle": _write_trace(out_dir, "circle_rr", circle_trace),
    }


def write_full_report(
    out_dir: str,
    robot: RobotConfig,
    seed: int = 7,
    workspace_samples: int = 200_000,
    circle_points: int = 200,
) -> dict:
    """All studies into one directory; returns the file manifest."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "deflection": write_deflection_report(out_dir, robot),
        "workspace": write_workspace_report(out_dir, robot, samples=workspace_samples, seed=seed),
        **write_path_reports(out_dir, robot, seed=seed, circle_points=circle_points),
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
