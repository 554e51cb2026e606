"""Robot description loading: built-in defaults plus strict JSON config files."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional

from .specs import ActuationLimits, SegmentSpec, SlitPattern, SolverOptions, TubeSpec

CONFIG_ENV_VAR = "CPPR_CONFIG"

_TUBE_FIELDS = {
    "outer_diameter",
    "inner_diameter",
    "steerable_length",
    "compliant_length",
    "max_bend_angle",
}
_SEGMENT_FIELDS = {"outer_tube", "inner_tube", "d_o", "d_i"}
_LIMIT_FIELDS = {"q_p_max", "q_d_min", "q_d_max", "D_max"}
_SOLVER_FIELDS = {
    "chi",
    "mu",
    "max_iterations",
    "convergence_threshold",
    "step_damping",
    "max_backtracks",
    "restarts",
    "seed",
}
_TOP_FIELDS = {"proximal", "distal", "limits", "solver"}


@dataclass(frozen=True)
class RobotConfig:
    """Two segments plus actuation limits and solver defaults."""

    proximal: SegmentSpec
    distal: SegmentSpec
    limits: ActuationLimits
    solver: SolverOptions

    def to_json(self) -> dict:
        def tube(t: TubeSpec) -> dict:
            return {
                "outer_diameter": t.outer_diameter,
                "inner_diameter": t.inner_diameter,
                "steerable_length": t.steerable_length,
                "compliant_length": t.compliant_length,
                "max_bend_angle": t.max_bend_angle,
            }

        def segment(s: SegmentSpec) -> dict:
            return {
                "outer_tube": tube(s.outer_tube),
                "inner_tube": tube(s.inner_tube),
                "d_o": s.d_o,
                "d_i": s.d_i,
            }

        return {
            "proximal": segment(self.proximal),
            "distal": segment(self.distal),
            "limits": {
                "q_p_max": self.limits.q_p_max,
                "q_d_min": self.limits.q_d_min,
                "q_d_max": self.limits.q_d_max,
                "D_max": self.limits.D_max,
            },
            "solver": self.solver.to_json(),
        }


def default_robot() -> RobotConfig:
    """The published dissector: 3.5 mm proximal, 2.9 mm distal segment."""
    proximal = SegmentSpec(
        outer_tube=TubeSpec(3.5, 3.3, 30.0, 0.0, math.radians(50.0)),
        inner_tube=TubeSpec(3.2, 3.0, 30.0, 0.0, math.radians(50.0)),
    )
    distal = SegmentSpec(
        outer_tube=TubeSpec(2.9, 2.7, 20.0, 40.0, math.radians(50.0)),
        inner_tube=TubeSpec(2.6, 2.4, 20.0, 40.0, math.radians(50.0)),
    )
    return RobotConfig(
        proximal=proximal,
        distal=distal,
        limits=ActuationLimits(q_p_max=10.0, q_d_min=-5.0, q_d_max=10.0, D_max=5.0),
        solver=SolverOptions(),
    )


def default_slits() -> dict:
    """Slit patterns of the four manufactured tubes."""
    return {
        "proximal": {
            "outer": SlitPattern(math.radians(63.0), 0.03, 0.56, 0.25, 50),
            "inner": SlitPattern(math.radians(69.0), 0.05, 0.39, 0.25, 68),
        },
        "distal": {
            "outer": SlitPattern(math.radians(63.6), 0.03, 0.31, 0.25, 57),
            "inner": SlitPattern(math.radians(70.0), 0.049, 0.32, 0.25, 83),
        },
    }


class ConfigError(ValueError):
    """Config document rejected by the strict schema."""


def _require_fields(doc: dict, allowed: set, required: set, where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"missing field(s) in {where}: {sorted(missing)}")


def _number(doc: dict, key: str, where: str) -> float:
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    return float(v)


def _parse_tube(doc: dict, where: str) -> TubeSpec:
    _require_fields(doc, _TUBE_FIELDS, _TUBE_FIELDS - {"compliant_length", "max_bend_angle"}, where)
    kwargs = {k: _number(doc, k, where) for k in doc}
    try:
        return TubeSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_segment(doc: dict, where: str) -> SegmentSpec:
    _require_fields(doc, _SEGMENT_FIELDS, {"outer_tube", "inner_tube"}, where)
    kwargs = {
        "outer_tube": _parse_tube(doc["outer_tube"], f"{where}.outer_tube"),
        "inner_tube": _parse_tube(doc["inner_tube"], f"{where}.inner_tube"),
    }
    for key in ("d_o", "d_i"):
        if key in doc:
            kwargs[key] = _number(doc, key, where)
    try:
        return SegmentSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(doc: dict) -> RobotConfig:
    """Validate a config document; omitted sections fall back to defaults."""
    base = default_robot()
    _require_fields(doc, _TOP_FIELDS, set(), "config")
    proximal = _parse_segment(doc["proximal"], "proximal") if "proximal" in doc else base.proximal
    distal = _parse_segment(doc["distal"], "distal") if "distal" in doc else base.distal
    limits = base.limits
    if "limits" in doc:
        _require_fields(doc["limits"], _LIMIT_FIELDS, set(), "limits")
        merged = {
            "q_p_max": base.limits.q_p_max,
            "q_d_min": base.limits.q_d_min,
            "q_d_max": base.limits.q_d_max,
            "D_max": base.limits.D_max,
        }
        merged.update({k: _number(doc["limits"], k, "limits") for k in doc["limits"]})
        try:
            limits = ActuationLimits(**merged)
        except ValueError as exc:
            raise ConfigError(f"limits: {exc}") from exc
    solver = base.solver
    if "solver" in doc:
        _require_fields(doc["solver"], _SOLVER_FIELDS, set(), "solver")
        merged = base.solver.to_json()
        for k in doc["solver"]:
            merged[k] = _number(doc["solver"], k, "solver")
        for int_key in ("max_iterations", "max_backtracks", "restarts", "seed"):
            merged[int_key] = int(merged[int_key])
        try:
            solver = SolverOptions(**merged)
        except ValueError as exc:
            raise ConfigError(f"solver: {exc}") from exc
    return RobotConfig(proximal=proximal, distal=distal, limits=limits, solver=solver)


def load_config(path: Optional[str] = None) -> RobotConfig:
    """Load a config file, honouring the environment override, else defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return default_robot()
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
