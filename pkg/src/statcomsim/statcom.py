"""Averaged STATCOM plant: dq current dynamics, DC link and power terms.

Currents are positive flowing from the converter toward the PCC.  All
powers are three-phase totals in amplitude-invariant units, hence the
literal 3/2 factors.
"""
from __future__ import annotations

from dataclasses import dataclass

from numba import njit
from pydantic import BaseModel, ConfigDict, Field

from .frames import OMEGA_NOM, DqPair


class StatcomParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    r_s: float = Field(0.01, ge=0.0)
    l_s: float = Field(0.15 / OMEGA_NOM, gt=0.0)
    omega: float = Field(OMEGA_NOM, gt=0.0)
    # 40 ms stored-energy time constant at v_dc_nom on a unit power base
    c_dc: float = Field(2.0 * 0.04 / 3.0**2, gt=0.0)
    r_loss: float = Field(100.0, gt=0.0)
    v_dc_nom: float = Field(3.0, gt=0.0)
    v_dc_floor_frac: float = Field(0.1, gt=0.0, lt=1.0)
    enabled: bool = True

    @property
    def x_s(self) -> float:
        return self.omega * self.l_s

    @property
    def v_dc_floor(self) -> float:
        return self.v_dc_floor_frac * self.v_dc_nom


@dataclass(frozen=True)
class StatcomState:
    i_dq: DqPair
    v_dc: float


@dataclass(frozen=True)
class PowerPair:
    p: float
    q: float


class DcLinkCollapse(RuntimeError):
    """The DC-link voltage fell to or below its configured floor."""


@njit(cache=True)
def _current_derivs(i_d, i_q, vc_d, vc_q, vp_d, vp_q, r_s, l_s, omega):
    did = (-r_s * i_d + omega * l_s * i_q + vc_d - vp_d) / l_s
    diq = (-r_s * i_q - omega * l_s * i_d + vc_q - vp_q) / l_s
    return did, diq


@njit(cache=True)
def _dc_link_deriv(v_dc, p_conv, c_dc, r_loss):
    return (-p_conv / v_dc - v_dc / r_loss) / c_dc


@njit(cache=True)
def _power(v_d, v_q, i_d, i_q):
    return 1.5 * (v_d * i_d + v_q * i_q), 1.5 * (v_d * i_q - v_q * i_d)


def current_derivatives(state: StatcomState, v_conv: DqPair, v_pcc: DqPair,
                        params: StatcomParams) -> DqPair:
    """dI/dt of the converter current in the synchronous frame."""
    i = state.i_dq
    return DqPair(*_current_derivs(i.d, i.q, v_conv.d, v_conv.q, v_pcc.d, v_pcc.q,
                                   params.r_s, params.l_s, params.omega))


def dc_link_derivative(state: StatcomState, v_conv: DqPair, params: StatcomParams,
                       v_dc_floor: float | None = None) -> float:
    """dV_dc/dt of an ideal averaged converter with a parallel loss resistor.

    Raises DcLinkCollapse when the link voltage is at or below the floor
    (default ``params.v_dc_floor``).
    """
    floor = params.v_dc_floor if v_dc_floor is None else v_dc_floor
    if not state.v_dc > floor:
        raise DcLinkCollapse(f"dc-link collapse: v_dc={state.v_dc:g} <= floor {floor:g}")
    p_conv = statcom_output_power(v_conv, state.i_dq).p
    return float(_dc_link_deriv(state.v_dc, p_conv, params.c_dc, params.r_loss))


def statcom_output_power(v_conv: DqPair, i: DqPair) -> PowerPair:
    return PowerPair(*_power(v_conv.d, v_conv.q, i.d, i.q))


def rl_power(i: DqPair, params: StatcomParams) -> PowerPair:
    """Power absorbed by the series R-L, with the reactive sign as commonly printed.

    The reactive term here is +3/2 wL I^2; the balance with the converter
    and load powers only closes with the opposite sign, which
    ``power_balance_residual`` applies.
    """
    i2 = i.d * i.d + i.q * i.q
    return PowerPair(1.5 * params.r_s * i2, 1.5 * params.x_s * i2)


def load_power(v_pcc: DqPair, i: DqPair) -> PowerPair:
    return PowerPair(*_power(v_pcc.d, v_pcc.q, i.d, i.q))


def power_balance_residual(v_conv: DqPair, v_pcc: DqPair, i: DqPair,
                           params: StatcomParams) -> PowerPair:
    """Residual of converter power = R-L power + load power.

    The reactive R-L term enters with its sign flipped relative to
    ``rl_power``; with that correction both residuals vanish at the
    equilibrium of the current dynamics.
    """
    s = statcom_output_power(v_conv, i)
    rl = rl_power(i, params)
    ld = load_power(v_pcc, i)
    return PowerPair(s.p - rl.p - ld.p, s.q + rl.q - ld.q)


def equilibrium_voltage(i: DqPair, v_dl: float, params: StatcomParams) -> DqPair:
    """Converter voltage that holds ``i`` constant against a d-aligned PCC voltage."""
    x = params.x_s
    return DqPair(params.r_s * i.d - x * i.q + v_dl, params.r_s * i.q + x * i.d)


def stored_energy(v_dc: float, params: StatcomParams) -> float:
    return 0.5 * params.c_dc * v_dc * v_dc


def modulation_limit(v_dc: float, m_max: float) -> float:
    return m_max * v_dc / 2.0


__all__ = [
    "StatcomParams", "StatcomState", "PowerPair", "DcLinkCollapse",
    "current_derivatives", "dc_link_derivative", "statcom_output_power",
    "rl_power", "load_power", "power_balance_residual", "equilibrium_voltage",
    "stored_energy", "modulation_limit",
]
