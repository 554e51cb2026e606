"""Simulated-robot teleoperation service.

One authoritative state owner applies joystick, translation, and tip-target
commands in a single serialized order, keeps the actuation state inside its
limits at all times, and fans identical telemetry snapshots out to every
subscriber. The wire surface is HTTP (GET /state, POST /command,
GET /config) plus a WebSocket stream of snapshots.
"""
from __future__ import annotations

import asyncio
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Set

import numpy as np

from .config import RobotConfig
from .differential import detect_singularity, jacobian_fd
from .ik import solve_ik
from .kinematics import (
    forward_kinematics,
    project_to_limits,
    pull_from_bend_angle,
)
from .specs import (
    ActuationInput,
    IkTarget,
    LimitViolation,
    ShapePolyline,
    TipConfiguration,
    wrap_angle,
)

POLYLINE_POINTS = 200
HEARTBEAT_SECONDS = 0.5


@dataclass(frozen=True)
class JoystickCommand:
    """Two-axis stick reading for one segment."""

    segment_select: str  # "proximal" | "distal"
    joystick_angle: float
    deflection_fraction: float
    mode: str = "shape"

    def __post_init__(self):
        if self.segment_select not in ("proximal", "distal"):
            raise ValueError(f"segment_select must be proximal or distal, got {self.segment_select!r}")
        if not 0.0 <= self.deflection_fraction <= 1.0:
            raise ValueError("deflection_fraction must lie in [0, 1]")
        if self.mode not in ("shape", "tip"):
            raise ValueError(f"mode must be shape or tip, got {self.mode!r}")


@dataclass(frozen=True)
class TranslationCommand:
    segment_select: str
    translation_delta: float

    def __post_init__(self):
        if self.segment_select not in ("proximal", "distal"):
            raise ValueError(f"segment_select must be proximal or distal, got {self.segment_select!r}")


@dataclass(frozen=True)
class TipTargetCommand:
    target: IkTarget


def parse_command(doc: dict):
    """Classify a wire command document by its fields."""
    if not isinstance(doc, dict):
        raise ValueError("command must be a JSON object")
    if "P" in doc:
        return TipTargetCommand(IkTarget.from_json(doc))
    if "translation_delta" in doc:
        unknown = set(doc) - {"segment_select", "translation_delta"}
        if unknown:
            raise ValueError(f"unknown translation fields: {sorted(unknown)}")
        return TranslationCommand(doc["segment_select"], float(doc["translation_delta"]))
    unknown = set(doc) - {"segment_select", "joystick_angle", "deflection_fraction", "mode"}
    if unknown:
        raise ValueError(f"unknown joystick fields: {sorted(unknown)}")
    return JoystickCommand(
        segment_select=doc["segment_select"],
        joystick_angle=float(doc["joystick_angle"]),
        deflection_fraction=float(doc["deflection_fraction"]),
        mode=doc.get("mode", "shape"),
    )


def map_joystick(cmd: JoystickCommand, segment) -> "tuple[float, float]":
    """Stick reading to (direction angle, bend angle).

    The stick angle is the direction angle; full deflection maps to the
    segment's design bend, linearly.
    """
    phi = float(wrap_angle(cmd.joystick_angle))
    theta = cmd.deflection_fraction * segment.max_bend_angle
    return phi, theta


@dataclass
class TeleopState:
    """Authoritative simulator state."""

    actuation: ActuationInput
    tip: TipConfiguration
    polyline: ShapePolyline
    singular: bool
    sequence: int = 0


class TeleopSim:
    """Applies commands, keeps the state feasible, builds snapshots."""

    def __init__(self, robot: RobotConfig, polyline_points: int = POLYLINE_POINTS):
        self.robot = robot
        self.polyline_points = polyline_points
        self.state = self._evaluate(ActuationInput(), sequence=0)

    def _evaluate(self, Q: ActuationInput, sequence: int) -> TeleopState:
        tip, polyline = forward_kinematics(Q, self.robot)
        singular = detect_singularity(jacobian_fd(Q, self.robot, self.robot.limits)).is_singular
        return TeleopState(
            actuation=Q,
            tip=tip,
            polyline=polyline.decimate(self.polyline_points),
            singular=singular,
            sequence=sequence,
        )

    def snapshot(self) -> dict:
        s = self.state
        return {
            "sequence": s.sequence,
            "Q": s.actuation.to_json(),
            "tip": s.tip.to_json(),
            "polyline": s.polyline.to_json(),
            "singular": s.singular,
        }

    def apply(self, command) -> dict:
        """Apply one command; returns the event document.

        Applied commands advance the sequence number; rejected ones leave
        the state untouched. Limit clips surface as a warning in the event.
        """
        s = self.state
        if isinstance(command, JoystickCommand):
            if command.mode == "tip":
                raise ValueError("tip mode takes a tip-target command, not a stick reading")
            segment = self.robot.proximal if command.segment_select == "proximal" else self.robot.distal
            phi, theta = map_joystick(cmd=command, segment=segment)
            pull = pull_from_bend_angle(theta, segment)
            q = s.actuation
            if command.segment_select == "proximal":
                candidate = ActuationInput(q.q_p, pull, phi, q.q_d, q.D_d, q.phi_d)
            else:
                candidate = ActuationInput(q.q_p, q.D_p, q.phi_p, q.q_d, pull, phi)
            projected, moved = project_to_limits(candidate, self.robot, self.robot.limits, sign_form=False)
            self.state = self._evaluate(projected, s.sequence + 1)
            return self._applied_event(moved)
        if isinstance(command, TranslationCommand):
            q = s.actuation
            if command.segment_select == "proximal":
                candidate = ActuationInput(
                    q.q_p + command.translation_delta, q.D_p, q.phi_p, q.q_d, q.D_d, q.phi_d
                )
            else:
                candidate = ActuationInput(
                    q.q_p, q.D_p, q.phi_p, q.q_d + command.translation_delta, q.D_d, q.phi_d
                )
            projected, moved = project_to_limits(candidate, self.robot, self.robot.limits, sign_form=False)
            self.state = self._evaluate(projected, s.sequence + 1)
            return self._applied_event(moved)
        if isinstance(command, TipTargetCommand):
            report = solve_ik(
                command.target,
                self.robot,
                self.robot.limits,
                self.robot.solver,
                initial_guess=s.actuation,
            )
            if not report.converged:
                return {
                    "event": "ik_failed",
                    "sequence": s.sequence,
                    "position_residual_mm": report.position_residual,
                    "chi_used": report.chi_used,
                }
            self.state = self._evaluate(report.actuation, s.sequence + 1)
            event = self._applied_event([])
            event["position_residual_mm"] = report.position_residual
            event["chi_used"] = report.chi_used
            return event
        raise TypeError(f"unsupported command type {type(command).__name__}")

    def _applied_event(self, moved: List[str]) -> dict:
        event = {"event": "applied", "sequence": self.state.sequence}
        if moved:
            event["event"] = "clipped"
            event["clipped_fields"] = sorted(set(moved))
        return event


def build_app(robot: Optional[RobotConfig] = None):
    """FastAPI application wrapping one simulator instance."""
    from contextlib import asynccontextmanager

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import JSONResponse

    from .config import default_robot

    sim = TeleopSim(robot or default_robot())
    lock = asyncio.Lock()
    subscribers: Set[asyncio.Queue] = set()

    def broadcast(snapshot: dict) -> None:
        for queue in subscribers:
            queue.put_nowait(snapshot)

    @asynccontextmanager
    async def lifespan(app):
        task = asyncio.create_task(heartbeat())
        yield
        task.cancel()

    async def heartbeat():
        while True:
            await asyncio.sleep(HEARTBEAT_SECONDS)
            async with lock:
                broadcast(sim.snapshot())

    app = FastAPI(title="cppr teleop service", lifespan=lifespan)
    app.state.sim = sim

    @app.get("/state")
    async def get_state():
        async with lock:
            return sim.snapshot()

    @app.get("/config")
    async def get_config():
        return sim.robot.to_json()

    @app.post("/command")
    async def post_command(doc: dict):
        try:
            command = parse_command(doc)
        except (ValueError, KeyError, TypeError) as exc:
            return JSONResponse(
                status_code=422,
                content={"event": "rejected", "detail": str(exc), "sequence": sim.state.sequence},
            )
        async with lock:
            try:
                event = sim.apply(command)
            except (ValueError, LimitViolation) as exc:
                return JSONResponse(
                    status_code=422,
                    content={"event": "rejected", "detail": str(exc), "sequence": sim.state.sequence},
                )
            snapshot = sim.snapshot()
            if event["event"] in ("applied", "clipped"):
                broadcast(snapshot)
        return {"event": event, "snapshot": snapshot}

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue()
        async with lock:
            queue.put_nowait(sim.snapshot())
            subscribers.add(queue)
        try:
            while True:
                snapshot = await queue.get()
                await ws.send_text(json.dumps(snapshot, sort_keys=True))
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            subscribers.discard(queue)

    return app
