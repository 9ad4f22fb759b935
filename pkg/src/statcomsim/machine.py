"""Induction machines in the synchronous frame, flux-linkage formulation.

Stator current flows from the bus into the machine.  Speeds are electrical
rad/s; torques are in the normalized units implied by unit power and unit
peak voltage.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

from numba import njit
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq

from .frames import OMEGA_NOM, DqPair


class MechLoad(BaseModel):
    """T_load = torque_const + torque_quad * omega_r**2 (omega_r electrical)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    torque_const: float = Field(0.0, ge=0.0)
    torque_quad: float = Field(0.0, ge=0.0)

    def torque(self, omega_r: float) -> float:
        return self.torque_const + self.torque_quad * omega_r * omega_r


class MotorParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    r_stator: float = Field(ge=0.0)
    r_rotor: float = Field(ge=0.0)
    l_ls: float = Field(gt=0.0)
    l_lr: float = Field(gt=0.0)
    l_m: float = Field(gt=0.0)
    j_inertia: float = Field(gt=0.0)
    pole_pairs: int = Field(2, ge=1)
    load: MechLoad = MechLoad()

    @model_validator(mode="after")
    def _nonsingular(self):
        det = (self.l_ls + self.l_m) * (self.l_lr + self.l_m) - self.l_m ** 2
        if not det > 1e-12 * (self.l_ls + self.l_m) * (self.l_lr + self.l_m):
            raise ValueError("singular inductance matrix")
        return self

    @property
    def l_ss(self) -> float:
        return self.l_ls + self.l_m

    @property
    def l_rr(self) -> float:
        return self.l_lr + self.l_m

    @classmethod
    def from_machine_base(cls, rating: float = 1.0 / 9.0, r_stator: float = 0.02,
                          r_rotor: float = 0.03, x_ls: float = 0.08, x_lr: float = 0.08,
                          x_m: float = 2.5, pole_pairs: int = 2, mech_time_constant: float = 0.5,
                          rated_slip: float = 0.02, omega_nom: float = OMEGA_NOM) -> MotorParams:
        """Build a machine from impedances on its own rating.

        ``rating`` is the machine's power as a fraction of the system base.
        The fan load is sized so that rated voltage gives ``rated_slip``, and
        J gives ``J * omega_m**2 / rating == mech_time_constant``.
        """
        z = 1.0 / rating
        omega_m = omega_nom / pole_pairs
        base = cls(r_stator=r_stator * z, r_rotor=r_rotor * z, l_ls=x_ls * z / omega_nom,
                   l_lr=x_lr * z / omega_nom, l_m=x_m * z / omega_nom,
                   j_inertia=mech_time_constant * rating / omega_m ** 2, pole_pairs=pole_pairs)
        t_rated = phasor_steady_state(base, 1.0, rated_slip, omega_nom).torque
        w_r = (1.0 - rated_slip) * omega_nom
        return base.model_copy(update={"load": MechLoad(torque_quad=t_rated / w_r ** 2)})


@dataclass(frozen=True)
class MotorState:
    lambda_s: DqPair
    lambda_r: DqPair
    omega_r: float


# -- scalar kernels -----------------------------------------------------------

@njit(cache=True)
def motor_currents(lsd, lsq, lrd, lrq, l_ss, l_rr, l_m):
    det = l_ss * l_rr - l_m * l_m
    isd = (l_rr * lsd - l_m * lrd) / det
    isq = (l_rr * lsq - l_m * lrq) / det
    ird = (l_ss * lrd - l_m * lsd) / det
    irq = (l_ss * lrq - l_m * lsq) / det
    return isd, isq, ird, irq


@njit(cache=True)
def motor_torque(lsd, lsq, isd, isq, pole_pairs):
    return 1.5 * pole_pairs * (lsd * isq - lsq * isd)


@njit(cache=True)
def rotor_rates(lrd, lrq, ird, irq, wr, r_r, omega_f):
    slip_w = omega_f - wr
    return -r_r * ird + slip_w * lrq, -r_r * irq - slip_w * lrd


@njit(cache=True)
def motor_rates(lsd, lsq, lrd, lrq, wr, vd, vq, r_s, r_r, l_ss, l_rr, l_m, j, pp, tc, tq, omega_f):
    isd, isq, ird, irq = motor_currents(lsd, lsq, lrd, lrq, l_ss, l_rr, l_m)
    dlsd = vd - r_s * isd + omega_f * lsq
    dlsq = vq - r_s * isq - omega_f * lsd
    dlrd, dlrq = rotor_rates(lrd, lrq, ird, irq, wr, r_r, omega_f)
    te = motor_torque(lsd, lsq, isd, isq, pp)
    dwr = pp * (te - (tc + tq * wr * wr)) / j
    return dlsd, dlsq, dlrd, dlrq, dwr


def _unpack(p: MotorParams):
    return (p.r_stator, p.r_rotor, p.l_ss, p.l_rr, p.l_m, p.j_inertia, float(p.pole_pairs),
            p.load.torque_const, p.load.torque_quad)


def stator_current(state: MotorState, params: MotorParams) -> DqPair:
    s, r = state.lambda_s, state.lambda_r
    isd, isq, _, _ = motor_currents(s.d, s.q, r.d, r.q, params.l_ss, params.l_rr, params.l_m)
    return DqPair(isd, isq)


def rotor_current(state: MotorState, params: MotorParams) -> DqPair:
    s, r = state.lambda_s, state.lambda_r
    _, _, ird, irq = motor_currents(s.d, s.q, r.d, r.q, params.l_ss, params.l_rr, params.l_m)
    return DqPair(ird, irq)


def motor_derivatives(state: MotorState, v_stator: DqPair, params: MotorParams,
                      omega_frame: float = OMEGA_NOM) -> tuple[DqPair, DqPair, float]:
    """Returns (dlambda_s/dt, dlambda_r/dt, domega_r/dt)."""
    s, r = state.lambda_s, state.lambda_r
    r_s, r_r, l_ss, l_rr, l_m, j, pp, tc, tq = _unpack(params)
    out = motor_rates(s.d, s.q, r.d, r.q, state.omega_r, v_stator.d, v_stator.q,
                      r_s, r_r, l_ss, l_rr, l_m, j, pp, tc, tq, omega_frame)
    return DqPair(out[0], out[1]), DqPair(out[2], out[3]), out[4]


def electromagnetic_torque(state: MotorState, params: MotorParams) -> float:
    i = stator_current(state, params)
    return float(motor_torque(state.lambda_s.d, state.lambda_s.q, i.d, i.q, params.pole_pairs))


def aggregate_motors(states: Sequence[MotorState], params: MotorParams | Sequence[MotorParams],
                     count: int = 1) -> DqPair:
    """Total stator current drawn from the bus.

    A single state stands for ``count`` identical machines; a longer list is
    summed machine by machine.
    """
    if not states:
        raise ValueError("no motors configured")
    if count < 1:
        raise ValueError("count must be >= 1")
    plist = [params] * len(states) if isinstance(params, MotorParams) else list(params)
    if len(states) == 1:
        return stator_current(states[0], plist[0]) * count
    tot = DqPair(0.0, 0.0)
    for st, p in zip(states, plist, strict=True):
        tot = tot + stator_current(st, p)
    return tot


# -- per-phase equivalent circuit -----------------------------------------------

@dataclass(frozen=True)
class PhasorSolution:
    i_stator: complex
    i_rotor: complex
    torque: float
    slip: float


def phasor_steady_state(params: MotorParams, v: complex, slip: float,
                        omega: float = OMEGA_NOM) -> PhasorSolution:
    """Classical T-equivalent circuit at a given slip.

    Phasors carry peak amplitudes, so a phasor equals the synchronous-frame
    dq vector read as d + jq.
    """
    if not slip != 0.0:
        raise ValueError("slip must be nonzero")
    zs = params.r_stator + 1j * omega * params.l_ls
    zm = 1j * omega * params.l_m
    zr = params.r_rotor / slip + 1j * omega * params.l_lr
    z_in = zs + zm * zr / (zm + zr)
    i_s = v / z_in
    e = v - zs * i_s
    i_r = -e / zr
    p_gap = 1.5 * abs(i_r) ** 2 * params.r_rotor / slip
    torque = p_gap * params.pole_pairs / omega
    return PhasorSolution(complex(i_s), complex(i_r), torque, slip)


def equilibrium_slip(params: MotorParams, v_mag: float, omega: float = OMEGA_NOM) -> float:
    """Slip at which electromagnetic torque balances the mechanical load."""
    def f(s):
        return (phasor_steady_state(params, v_mag, s, omega).torque
                - params.load.torque((1.0 - s) * omega))
    return brentq(f, 1e-7, 0.3, xtol=1e-14)


def steady_state(params: MotorParams, v: complex, slip: float,
                 omega: float = OMEGA_NOM) -> MotorState:
    """Flux-linkage state corresponding to the phasor solution."""
    sol = phasor_steady_state(params, v, slip, omega)
    lam_s = params.l_ss * sol.i_stator + params.l_m * sol.i_rotor
    lam_r = params.l_m * sol.i_stator + params.l_rr * sol.i_rotor
    return MotorState(DqPair(lam_s.real, lam_s.imag), DqPair(lam_r.real, lam_r.imag),
                      (1.0 - slip) * omega)


DEFAULT_MOTOR = MotorParams.from_machine_base()

__all__ = ["MechLoad", "MotorParams", "MotorState", "PhasorSolution", "motor_derivatives",
           "electromagnetic_torque", "aggregate_motors", "stator_current", "rotor_current",
           "phasor_steady_state", "equilibrium_slip", "steady_state", "DEFAULT_MOTOR"]
