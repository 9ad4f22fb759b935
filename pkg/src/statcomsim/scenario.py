"""Scenario schema: loading, validation and serialization.

A scenario file is a JSON object with the top-level keys ``grid``,
``statcom``, ``motors``, ``controller``, ``events``, ``solver`` and
``metadata``.  Every key is optional and falls back to its default; unknown
keys are rejected.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .controllers import ControllerConfig, ControllerKind
from .machine import DEFAULT_MOTOR, MotorParams
from .network import DisturbanceEvent, EventKind, GridParams, validate_events
from .sim.solver import SolverConfig
from .statcom import StatcomParams


class ScenarioError(ValueError):
    """Invalid or unreadable scenario; ``path`` is a JSON-pointer-style location."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class MotorGroup(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    count: int = Field(1, ge=1)
    params: MotorParams = DEFAULT_MOTOR


class MotorsConfig(BaseModel):
    """``count`` identical machines, or an explicit list of ``groups``.

    Each group is simulated as one machine whose current is multiplied by
    its count.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    count: int = Field(9, ge=1)
    params: MotorParams = DEFAULT_MOTOR
    groups: list[MotorGroup] | None = None

    @model_validator(mode="after")
    def _nonempty(self):
        if self.groups is not None and not self.groups:
            raise ValueError("no motors configured")
        return self

    def group_list(self) -> list[MotorGroup]:
        if self.groups:
            return list(self.groups)
        return [MotorGroup(count=self.count, params=self.params)]


class Metadata(BaseModel):
    model_config = ConfigDict(extra="allow", frozen=True)

    name: str = "scenario"
    notes: str = ""


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    grid: GridParams = GridParams()
    statcom: StatcomParams = StatcomParams()
    motors: MotorsConfig = MotorsConfig()
    controller: ControllerConfig = ControllerConfig()
    events: list[DisturbanceEvent] = []
    solver: SolverConfig = SolverConfig()
    metadata: Metadata = Metadata()

    @model_validator(mode="after")
    def _events_disjoint(self):
        validate_events(self.events)
        return self

    @property
    def v_dc_ref(self) -> float:
        return self.controller.v_dc_ref or self.statcom.v_dc_nom

    def with_controller(self, kind: ControllerKind | str) -> Scenario:
        ctrl = self.controller.model_copy(update={"kind": ControllerKind(kind)})
        return self.model_copy(update={"controller": ctrl})

    def with_solver(self, **changes: Any) -> Scenario:
        data = self.solver.model_dump()
        data.update({k: v for k, v in changes.items() if v is not None})
        return self.model_copy(update={"solver": SolverConfig(**data)})

    def snapped_events(self) -> list[DisturbanceEvent]:
        """Events with start and end moved to the nearest solver step boundary."""
        dt = self.solver.dt
        out = []
        for ev in self.events:
            k0 = round(ev.t_start / dt)
            k1 = max(round(ev.t_end / dt), k0 + 1)
            out.append(ev.model_copy(update={"t_start": k0 * dt, "duration": (k1 - k0) * dt}))
        return out


def _pointer(loc: tuple) -> str:
    return "/" + "/".join(str(p) for p in loc) if loc else "/"


def scenario_from_dict(data: Any) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object", "/")
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        extra = f" (+{exc.error_count() - 1} more)" if exc.error_count() > 1 else ""
        raise ScenarioError(err["msg"] + extra, _pointer(tuple(err["loc"]))) from None


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    scenario = scenario_from_dict(data)
    if scenario.metadata.name == "scenario":
        meta = scenario.metadata.model_copy(update={"name": path.stem})
        scenario = scenario.model_copy(update={"metadata": meta})
    return scenario


def scenario_to_dict(scenario: Scenario) -> dict:
    return scenario.model_dump(mode="json")


def write_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n",
                          encoding="utf-8")


def sag_swell_scenario(**solver: Any) -> Scenario:
    """20 % swell at 4 s and 20 % sag at 10 s, each lasting 2 s, over 14 s."""
    events = [
        DisturbanceEvent(kind=EventKind.SWELL, t_start=4.0, duration=2.0, magnitude=0.2),
        DisturbanceEvent(kind=EventKind.SAG, t_start=10.0, duration=2.0, magnitude=0.2),
    ]
    sc = Scenario(events=events, solver=SolverConfig(t_end=14.0),
                  metadata=Metadata(name="sag_swell",
                                    notes="swell start time assumed at 4 s"))
    return sc.with_solver(**solver) if solver else sc


def deep_fault_scenario(**solver: Any) -> Scenario:
    """Source collapses to 10 % for 100 ms."""
    events = [DisturbanceEvent(kind=EventKind.FAULT, t_start=1.0, duration=0.1, magnitude=0.9)]
    sc = Scenario(events=events, solver=SolverConfig(t_end=3.0),
                  metadata=Metadata(name="deep_fault"))
    return sc.with_solver(**solver) if solver else sc
