"""Thevenin grid, PCC node and supply disturbances.

The PCC can be modeled two ways.  With ``c_bus == 0`` (default) the node is
quasi-static: all branches meeting there are inductive, so KCL fixes the
node voltage algebraically and no fictitious element is added.  With
``c_bus > 0`` a shunt capacitor turns the node into an ODE; that path is
kept for studies of the node dynamics but it shifts the steady operating
point by roughly ``omega*c_bus*X_th``.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

from numba import njit
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .frames import OMEGA_NOM, DqPair


class GridParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    v_source_nom: float = Field(1.0, gt=0.0)
    r_g: float = Field(0.01, ge=0.0)
    l_g: float = Field(0.10 / OMEGA_NOM, gt=0.0)
    c_bus: float = Field(0.0, ge=0.0)
    omega_nom: float = Field(OMEGA_NOM, gt=0.0)

    @property
    def x_g(self) -> float:
        return self.omega_nom * self.l_g

    def c_bus_for_resonance(self, factor: float) -> float:
        """Shunt capacitance resonating with l_g at ``factor * omega_nom``."""
        return 1.0 / (self.l_g * (factor * self.omega_nom) ** 2)


class EventKind(str, Enum):
    SWELL = "swell"
    SAG = "sag"
    FAULT = "fault"


class DisturbanceEvent(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: EventKind
    t_start: float = Field(ge=0.0)
    duration: float = Field(gt=0.0)
    magnitude: float = Field(gt=0.0, le=1.0)

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    def factor(self) -> float:
        if self.kind is EventKind.SWELL:
            return 1.0 + self.magnitude
        return 1.0 - self.magnitude

    def describe(self) -> str:
        return f"{self.kind.value}@{self.t_start:g}s+{self.duration:g}s"


@dataclass(frozen=True)
class NetworkState:
    i_grid: DqPair
    v_pcc: DqPair


class EventOverlapError(ValueError):
    pass


def validate_events(events: Sequence[DisturbanceEvent]) -> None:
    ordered = sorted(enumerate(events), key=lambda ie: ie[1].t_start)
    for (ia, a), (ib, b) in zip(ordered, ordered[1:]):
        if b.t_start < a.t_end:
            raise EventOverlapError(
                f"events overlap: #{ia} {a.describe()} and #{ib} {b.describe()}")


def source_magnitude(t: float, base: float, events: Sequence[DisturbanceEvent]) -> float:
    """Source EMF magnitude at time t; events act on [t_start, t_start + duration)."""
    for ev in events:
        if ev.t_start <= t < ev.t_end:
            return base * ev.factor()
    return base


@njit(cache=True)
def branch_rates(i_d, i_q, e_d, e_q, v_d, v_q, r, l, omega):
    """L di/dt = e - v - R i + rotational coupling, for an R-L branch feeding the node."""
    did = (e_d - v_d - r * i_d + omega * l * i_q) / l
    diq = (e_q - v_q - r * i_q - omega * l * i_d) / l
    return did, diq


@njit(cache=True)
def node_rates(v_d, v_q, inet_d, inet_q, c, omega):
    return inet_d / c + omega * v_q, inet_q / c - omega * v_d


def network_derivatives(state: NetworkState, i_injected: DqPair, i_load: DqPair,
                        grid: GridParams, v_src: DqPair) -> tuple[DqPair, DqPair]:
    """Grid-branch and capacitive-node rates; requires ``grid.c_bus > 0``."""
    if not grid.c_bus > 0.0:
        raise ValueError("network_derivatives needs a capacitive PCC node (c_bus > 0)")
    ig, v = state.i_grid, state.v_pcc
    did, diq = branch_rates(ig.d, ig.q, v_src.d, v_src.q, v.d, v.q, grid.r_g, grid.l_g,
                            grid.omega_nom)
    inet_d = ig.d + i_injected.d - i_load.d
    inet_q = ig.q + i_injected.q - i_load.q
    dvd, dvq = node_rates(v.d, v.q, inet_d, inet_q, grid.c_bus, grid.omega_nom)
    return DqPair(did, diq), DqPair(dvd, dvq)


def phasor_node(grid: GridParams, v_src: complex, i_injected: complex = 0j,
                i_load: complex = 0j) -> tuple[complex, complex]:
    """Steady (V_pcc, I_grid) of the one-bus circuit for fixed branch currents."""
    w = grid.omega_nom
    z_g = grid.r_g + 1j * w * grid.l_g
    y_c = 1j * w * grid.c_bus
    v = (v_src / z_g + i_injected - i_load) / (1.0 / z_g + y_c)
    return v, (v_src - v) / z_g


__all__ = ["GridParams", "EventKind", "DisturbanceEvent", "NetworkState", "EventOverlapError",
           "validate_events", "source_magnitude", "network_derivatives", "phasor_node",
           "branch_rates", "node_rates"]
