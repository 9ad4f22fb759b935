"""STATCOM control strategies producing converter voltage commands.

Three strategies share the same pair of outer regulators (AC voltage ->
q current, DC voltage -> d current) and differ in how the current
references become converter voltages:

* ``double_loop`` - two inner current PIs with decoupling feedforward,
* ``dov``         - the algebraic power-balance law (no current feedback),
* ``proposed``    - the power-balance law plus an L*dI/dt term computed from a
  filtered derivative of the current reference.

Sign convention: the converter current is positive toward the PCC, so a
voltage sag calls for negative q current (capacitive injection) and a low
DC link calls for negative d current (active power drawn from the grid).
Both regulators therefore act on ``measured - reference``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from numba import njit
from pydantic import BaseModel, ConfigDict, Field

from .frames import DqPair, PllParams
from .statcom import StatcomParams


class ControllerKind(str, Enum):
    DOUBLE_LOOP = "double_loop"
    DOV = "dov"
    PROPOSED = "proposed"


KIND_CODES = {ControllerKind.DOUBLE_LOOP: 0, ControllerKind.DOV: 1, ControllerKind.PROPOSED: 2}


# -- configuration ---------------------------------------------------------

class PiGains(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kp: float = Field(ge=0.0)
    ki: float = Field(ge=0.0)


class Gains(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    ac: PiGains = PiGains(kp=3.0, ki=600.0)
    dc: PiGains = PiGains(kp=0.5, ki=20.0)
    id: PiGains = PiGains(kp=0.3, ki=60.0)
    iq: PiGains = PiGains(kp=0.3, ki=60.0)


class Limits(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    i_d_max: float = Field(1.0, gt=0.0)
    i_q_max: float = Field(3.0, gt=0.0)
    v_inner_max: float = Field(0.5, gt=0.0)
    m_max: float = Field(1.0, gt=0.0, le=1.2)


class DerivFilter(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tau_f: float = Field(2e-3, gt=0.0)


class ControllerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ControllerKind = ControllerKind.PROPOSED
    gains: Gains = Gains()
    limits: Limits = Limits()
    deriv_filter: DerivFilter = DerivFilter()
    v_ref: float = Field(1.0, gt=0.0)
    # None tracks the STATCOM's nominal DC voltage
    v_dc_ref: float | None = Field(None, gt=0.0)
    sensor_tau: float = Field(5e-4, gt=0.0)
    pll: PllParams = PllParams()
    discrete: bool = False


# -- value types -----------------------------------------------------------

@dataclass(frozen=True)
class PiBlock:
    kp: float
    ki: float
    integrator: float = 0.0
    out_min: float = -math.inf
    out_max: float = math.inf

    def __post_init__(self):
        if not self.out_min < self.out_max:
            raise ValueError("out_min must be below out_max")


@dataclass(frozen=True)
class ControllerInputs:
    v_pcc_mag: float
    v_ref: float
    v_dc: float
    v_dc_ref: float
    i_meas: DqPair
    dt: float

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.v_ref > 0.0:
            raise ValueError("v_ref must be positive")


@dataclass(frozen=True)
class VoltageCommand:
    v_conv_ref: DqPair
    i_ref: DqPair
    saturated: bool = False


@dataclass(frozen=True)
class DerivEstimator:
    prev: DqPair = DqPair(0.0, 0.0)
    filtered: DqPair = DqPair(0.0, 0.0)
    tau_f: float = 2e-3

    def __post_init__(self):
        if not self.tau_f > 0.0:
            raise ValueError("tau_f must be positive")


# -- scalar kernels (shared with the simulation kernel) ----------------------

@njit(cache=True)
def clamp(u, lo, hi):
    if u > hi:
        return hi
    if u < lo:
        return lo
    return u


@njit(cache=True)
def pi_continuous(kp, ki, integrator, error, lo, hi):
    """Output and integrator rate of a continuous PI with conditional clamping."""
    u = kp * error + integrator
    rate = ki * error
    if u > hi:
        u = hi
        if rate > 0.0:
            rate = 0.0
    elif u < lo:
        u = lo
        if rate < 0.0:
            rate = 0.0
    return u, rate


@njit(cache=True)
def pi_discrete(kp, ki, integrator, error, dt, lo, hi):
    """One sample of a PI with conditional clamping; returns (output, integrator)."""
    inc = ki * error * dt
    u = kp * error + integrator + inc
    if u > hi:
        u = hi
        if inc > 0.0:
            inc = 0.0
    elif u < lo:
        u = lo
        if inc < 0.0:
            inc = 0.0
    return u, integrator + inc


@njit(cache=True)
def dov_law(i_d, i_q, v_dl, r_s, x_s):
    return r_s * i_d - x_s * i_q + v_dl, r_s * i_q + x_s * i_d


@njit(cache=True)
def saturate(v_d, v_q, v_dc, m_max):
    """Radial limit to m_max*v_dc/2; returns (v_d, v_q, saturated)."""
    lim = m_max * v_dc / 2.0
    mag = math.hypot(v_d, v_q)
    if mag <= lim:
        return v_d, v_q, False
    k = lim / mag
    return v_d * k, v_q * k, True


# -- public step functions ---------------------------------------------------

def pi_step(block: PiBlock, error: float, dt: float) -> tuple[PiBlock, float]:
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    u, integ = pi_discrete(block.kp, block.ki, block.integrator, error, dt,
                           block.out_min, block.out_max)
    return replace(block, integrator=integ), u


def outer_loops_step(ac_pi: PiBlock, dc_pi: PiBlock, inputs: ControllerInputs
                     ) -> tuple[PiBlock, PiBlock, DqPair]:
    """AC regulator -> q current reference, DC regulator -> d current reference."""
    ac_pi, i_q = pi_step(ac_pi, inputs.v_pcc_mag - inputs.v_ref, inputs.dt)
    dc_pi, i_d = pi_step(dc_pi, inputs.v_dc - inputs.v_dc_ref, inputs.dt)
    return ac_pi, dc_pi, DqPair(i_d, i_q)


def dov_feedforward(i_ref: DqPair, v_dl: float, params: StatcomParams) -> DqPair:
    return DqPair(*dov_law(i_ref.d, i_ref.q, v_dl, params.r_s, params.x_s))


def saturate_command(v: DqPair, v_dc: float, m_max: float) -> DqPair:
    if not v_dc > 0.0 or not 0.0 < m_max <= 1.2:
        raise ValueError("need v_dc > 0 and 0 < m_max <= 1.2")
    d, q, _ = saturate(v.d, v.q, v_dc, m_max)
    return DqPair(d, q)


def _command(v_d: float, v_q: float, i_ref: DqPair, v_dc: float, m_max: float) -> VoltageCommand:
    d, q, sat = saturate(v_d, v_q, v_dc, m_max)
    return VoltageCommand(DqPair(d, q), i_ref, bool(sat))


def deriv_step(est: DerivEstimator, x: DqPair, dt: float) -> DerivEstimator:
    """First-order filtered backward difference."""
    alpha = dt / (est.tau_f + dt)
    f = est.filtered
    fd = f.d + alpha * ((x.d - est.prev.d) / dt - f.d)
    fq = f.q + alpha * ((x.q - est.prev.q) / dt - f.q)
    return replace(est, prev=x, filtered=DqPair(fd, fq))


def dov_step(ac_pi: PiBlock, dc_pi: PiBlock, inputs: ControllerInputs, params: StatcomParams,
             m_max: float = 1.0) -> tuple[PiBlock, PiBlock, VoltageCommand]:
    ac_pi, dc_pi, i_ref = outer_loops_step(ac_pi, dc_pi, inputs)
    v_d, v_q = dov_law(i_ref.d, i_ref.q, inputs.v_pcc_mag, params.r_s, params.x_s)
    return ac_pi, dc_pi, _command(v_d, v_q, i_ref, inputs.v_dc, m_max)


def proposed_step(ac_pi: PiBlock, dc_pi: PiBlock, deriv: DerivEstimator, inputs: ControllerInputs,
                  params: StatcomParams, m_max: float = 1.0
                  ) -> tuple[PiBlock, PiBlock, DerivEstimator, VoltageCommand]:
    """Power-balance law augmented with L_s * dI*/dt."""
    ac_pi, dc_pi, i_ref = outer_loops_step(ac_pi, dc_pi, inputs)
    deriv = deriv_step(deriv, i_ref, inputs.dt)
    v_d, v_q = dov_law(i_ref.d, i_ref.q, inputs.v_pcc_mag, params.r_s, params.x_s)
    v_d = v_d + params.l_s * deriv.filtered.d
    v_q = v_q + params.l_s * deriv.filtered.q
    return ac_pi, dc_pi, deriv, _command(v_d, v_q, i_ref, inputs.v_dc, m_max)


def double_loop_step(ac_pi: PiBlock, dc_pi: PiBlock, id_pi: PiBlock, iq_pi: PiBlock,
                     inputs: ControllerInputs, params: StatcomParams, m_max: float = 1.0
                     ) -> tuple[PiBlock, PiBlock, PiBlock, PiBlock, VoltageCommand]:
    """Outer regulators feeding decoupled inner current PIs."""
    ac_pi, dc_pi, i_ref = outer_loops_step(ac_pi, dc_pi, inputs)
    i = inputs.i_meas
    id_pi, u_d = pi_step(id_pi, i_ref.d - i.d, inputs.dt)
    iq_pi, u_q = pi_step(iq_pi, i_ref.q - i.q, inputs.dt)
    x = params.x_s
    v_d = u_d - x * i.q + inputs.v_pcc_mag
    v_q = u_q + x * i.d
    return ac_pi, dc_pi, id_pi, iq_pi, _command(v_d, v_q, i_ref, inputs.v_dc, m_max)


# -- strategy state bundles --------------------------------------------------

@dataclass(frozen=True)
class DoubleLoopState:
    ac: PiBlock
    dc: PiBlock
    id: PiBlock
    iq: PiBlock

    def pi_blocks(self) -> tuple[PiBlock, ...]:
        return (self.ac, self.dc, self.id, self.iq)


@dataclass(frozen=True)
class DovState:
    ac: PiBlock
    dc: PiBlock

    def pi_blocks(self) -> tuple[PiBlock, ...]:
        return (self.ac, self.dc)


@dataclass(frozen=True)
class ProposedState:
    ac: PiBlock
    dc: PiBlock
    deriv: DerivEstimator = field(default_factory=DerivEstimator)

    def pi_blocks(self) -> tuple[PiBlock, ...]:
        return (self.ac, self.dc)


ControllerState = DoubleLoopState | DovState | ProposedState


def initial_controller_state(cfg: ControllerConfig, kind: ControllerKind | None = None
                             ) -> ControllerState:
    kind = ControllerKind(kind or cfg.kind)
    g, lim = cfg.gains, cfg.limits
    ac = PiBlock(g.ac.kp, g.ac.ki, 0.0, -lim.i_q_max, lim.i_q_max)
    dc = PiBlock(g.dc.kp, g.dc.ki, 0.0, -lim.i_d_max, lim.i_d_max)
    if kind is ControllerKind.DOUBLE_LOOP:
        id_ = PiBlock(g.id.kp, g.id.ki, 0.0, -lim.v_inner_max, lim.v_inner_max)
        iq = PiBlock(g.iq.kp, g.iq.ki, 0.0, -lim.v_inner_max, lim.v_inner_max)
        return DoubleLoopState(ac, dc, id_, iq)
    if kind is ControllerKind.DOV:
        return DovState(ac, dc)
    return ProposedState(ac, dc, DerivEstimator(tau_f=cfg.deriv_filter.tau_f))


def controller_step(state: ControllerState, inputs: ControllerInputs, params: StatcomParams,
                    m_max: float = 1.0) -> tuple[ControllerState, VoltageCommand]:
    """Dispatch one sample of whichever strategy ``state`` belongs to."""
    if isinstance(state, DoubleLoopState):
        ac, dc, id_, iq, cmd = double_loop_step(state.ac, state.dc, state.id, state.iq,
                                                inputs, params, m_max)
        return DoubleLoopState(ac, dc, id_, iq), cmd
    if isinstance(state, ProposedState):
        ac, dc, deriv, cmd = proposed_step(state.ac, state.dc, state.deriv, inputs, params, m_max)
        return ProposedState(ac, dc, deriv), cmd
    ac, dc, cmd = dov_step(state.ac, state.dc, inputs, params, m_max)
    return DovState(ac, dc), cmd
