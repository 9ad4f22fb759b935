"""abc <-> synchronous dq transformations and the SRF phase-locked loop.

Amplitude-invariant scaling is used throughout: a balanced set of peak
amplitude 1.0 maps to a dq vector of magnitude 1.0.  The q axis leads the
d axis, so a phase signal ``cos(theta + phi)`` maps to ``(cos phi, sin phi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from numba import njit
from pydantic import BaseModel, ConfigDict, Field

TWO_PI = 2.0 * math.pi
_SHIFT = TWO_PI / 3.0
OMEGA_NOM = TWO_PI * 60.0


@dataclass(frozen=True)
class AbcTriple:
    a: float
    b: float
    c: float


@dataclass(frozen=True)
class DqPair:
    d: float
    q: float

    def magnitude(self) -> float:
        return math.hypot(self.d, self.q)

    def __add__(self, other: DqPair) -> DqPair:
        return DqPair(self.d + other.d, self.q + other.q)

    def __sub__(self, other: DqPair) -> DqPair:
        return DqPair(self.d - other.d, self.q - other.q)

    def __mul__(self, k: float) -> DqPair:
        return DqPair(self.d * k, self.q * k)

    __rmul__ = __mul__


ZERO = DqPair(0.0, 0.0)


@njit(cache=True)
def wrap_angle(theta):
    """Wrap to [0, 2*pi) with an exact floating remainder."""
    w = theta % TWO_PI
    if w >= TWO_PI:
        w = 0.0
    return w


@njit(cache=True)
def rotate(d, q, angle):
    """Rotate a dq vector by ``angle`` (counter-clockwise)."""
    c = math.cos(angle)
    s = math.sin(angle)
    return d * c - q * s, d * s + q * c


@njit(cache=True)
def _park(a, b, c, theta):
    ca = math.cos(theta)
    cb = math.cos(theta - _SHIFT)
    cc = math.cos(theta + _SHIFT)
    sa = math.sin(theta)
    sb = math.sin(theta - _SHIFT)
    sc = math.sin(theta + _SHIFT)
    d = (2.0 / 3.0) * (a * ca + b * cb + c * cc)
    q = -(2.0 / 3.0) * (a * sa + b * sb + c * sc)
    return d, q


@njit(cache=True)
def _inverse_park(d, q, theta):
    a = d * math.cos(theta) - q * math.sin(theta)
    b = d * math.cos(theta - _SHIFT) - q * math.sin(theta - _SHIFT)
    c = d * math.cos(theta + _SHIFT) - q * math.sin(theta + _SHIFT)
    return a, b, c


def park(abc: AbcTriple, theta: float) -> DqPair:
    """Amplitude-invariant Park transform; the zero sequence is discarded."""
    return DqPair(*_park(abc.a, abc.b, abc.c, theta))


def inverse_park(dq: DqPair, theta: float) -> AbcTriple:
    return AbcTriple(*_inverse_park(dq.d, dq.q, theta))


class PllParams(BaseModel):
    """SRF-PLL gains acting on the q component (per unit volt)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kp: float = Field(400.0, ge=0.0)
    ki: float = Field(80000.0, ge=0.0)
    omega_nom: float = Field(OMEGA_NOM, gt=0.0)


@dataclass(frozen=True)
class PllState:
    theta: float
    omega: float
    integrator: float = 0.0
    clamped: bool = False


@njit(cache=True)
def pll_rate(v_q, integrator, kp, ki, omega_nom):
    """Continuous-time PLL: returns (frequency deviation, integrator rate, clamped)."""
    dw = kp * v_q + integrator
    lim = 0.5 * omega_nom
    rate = ki * v_q
    clamped = False
    if dw > lim:
        dw = lim
        clamped = True
        if rate > 0.0:
            rate = 0.0
    elif dw < -lim:
        dw = -lim
        clamped = True
        if rate < 0.0:
            rate = 0.0
    return dw, rate, clamped


def pll_step(state: PllState, v_pcc_dq: DqPair, dt: float,
             params: PllParams | None = None) -> PllState:
    """Advance the PLL by one sample.

    ``v_pcc_dq`` is the PCC voltage expressed in the frame of ``state.theta``;
    the PI drives its q component to zero so that the d axis sits on the
    voltage vector.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    p = params or PllParams()
    q = v_pcc_dq.q
    integrator = state.integrator + p.ki * q * dt
    omega = p.omega_nom + p.kp * q + integrator
    lo, hi = 0.5 * p.omega_nom, 1.5 * p.omega_nom
    clamped = not (lo <= omega <= hi)
    if (omega > hi and q > 0.0) or (omega < lo and q < 0.0):
        integrator = state.integrator
    omega = min(max(omega, lo), hi)
    theta = float(wrap_angle(state.theta + omega * dt))
    return replace(state, theta=theta, omega=omega, integrator=integrator, clamped=clamped)
