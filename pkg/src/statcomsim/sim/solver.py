"""Solver settings, the generic RK4 step, logged time series and the
structured view of the packed system state."""
from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..frames import DqPair, PllState, wrap_angle
from ..machine import MotorState
from ..network import NetworkState
from ..statcom import StatcomState
from . import kernel as K

LOG_COLUMNS = ("t", "v_pcc_mag", "v_pcc_d", "v_pcc_q", "i_ds", "i_qs", "v_dc", "p_s", "q_s",
               "motor_speed", "motor_torque", "v_conv_d", "v_conv_q")

_OUT_FOR_COLUMN = {
    "v_pcc_mag": K.O_VMAG, "v_pcc_d": K.O_VD, "v_pcc_q": K.O_VQ, "i_ds": K.O_ID,
    "i_qs": K.O_IQ, "v_dc": K.O_VDC, "p_s": K.O_PS, "q_s": K.O_QS,
    "motor_speed": K.O_SPEED, "motor_torque": K.O_TORQUE, "v_conv_d": K.O_VCD,
    "v_conv_q": K.O_VCQ,
}


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dt: float = Field(1e-4, gt=0.0)
    t_end: float = Field(2.0, ge=0.0)
    log_decimation: int = Field(10, ge=1)
    init: str = Field("phasor", pattern="^(phasor|flat)$")
    flat_ramp: float = Field(0.2, gt=0.0)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], x: np.ndarray, t: float,
             dt: float) -> np.ndarray:
    """Classical four-stage Runge-Kutta step for x' = f(t, x)."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    k1 = np.asarray(f(t, x))
    k2 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k1))
    k3 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k2))
    k4 = np.asarray(f(t + dt, x + dt * k3))
    out = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"numerical blow-up at t={t:g}")
    return out


@dataclass
class ControllerBundle:
    """Integrator-type controller states as carried by the packed vector."""

    ac_integrator: float
    dc_integrator: float
    id_integrator: float
    iq_integrator: float
    deriv_lag: DqPair
    v_meas: DqPair


@dataclass
class SystemState:
    statcom: StatcomState
    motors: list[MotorState]
    network: NetworkState
    pll: PllState
    controller: ControllerBundle

    def pack(self) -> np.ndarray:
        x = np.zeros(K.n_states(len(self.motors)))
        x[K.X_ID], x[K.X_IQ] = self.statcom.i_dq.d, self.statcom.i_dq.q
        x[K.X_VDC] = self.statcom.v_dc
        x[K.X_DELTA] = self.pll.theta
        x[K.X_PLLI] = self.pll.integrator
        c = self.controller
        x[K.X_AC], x[K.X_DC] = c.ac_integrator, c.dc_integrator
        x[K.X_INT_ID], x[K.X_INT_IQ] = c.id_integrator, c.iq_integrator
        x[K.X_FD], x[K.X_FQ] = c.deriv_lag.d, c.deriv_lag.q
        x[K.X_VMD], x[K.X_VMQ] = c.v_meas.d, c.v_meas.q
        n = self.network
        x[K.X_IGD], x[K.X_IGQ] = n.i_grid.d, n.i_grid.q
        x[K.X_VPD], x[K.X_VPQ] = n.v_pcc.d, n.v_pcc.q
        for k, m in enumerate(self.motors):
            b = K.X_MOT + K.N_MSTATE * k
            x[b:b + 5] = (m.lambda_s.d, m.lambda_s.q, m.lambda_r.d, m.lambda_r.q, m.omega_r)
        return x

    @classmethod
    def unpack(cls, x: np.ndarray, omega_nom: float, network: NetworkState | None = None
               ) -> SystemState:
        """Rebuild from a packed vector.

        The PLL angle in the vector is relative to the network frame, which
        itself turns at ``omega_nom``; ``pll.theta`` keeps that relative angle.
        """
        n_mot = (len(x) - K.X_MOT) // K.N_MSTATE
        motors = []
        for k in range(n_mot):
            b = K.X_MOT + K.N_MSTATE * k
            motors.append(MotorState(DqPair(x[b], x[b + 1]), DqPair(x[b + 2], x[b + 3]),
                                     float(x[b + 4])))
        net = network or NetworkState(DqPair(x[K.X_IGD], x[K.X_IGQ]),
                                      DqPair(x[K.X_VPD], x[K.X_VPQ]))
        return cls(
            statcom=StatcomState(DqPair(x[K.X_ID], x[K.X_IQ]), float(x[K.X_VDC])),
            motors=motors,
            network=net,
            pll=PllState(theta=float(x[K.X_DELTA]),
                         omega=omega_nom + float(x[K.X_PLLI]),
                         integrator=float(x[K.X_PLLI])),
            controller=ControllerBundle(float(x[K.X_AC]), float(x[K.X_DC]),
                                        float(x[K.X_INT_ID]), float(x[K.X_INT_IQ]),
                                        DqPair(x[K.X_FD], x[K.X_FQ]),
                                        DqPair(x[K.X_VMD], x[K.X_VMQ])),
        )


@dataclass
class TimeSeriesLog:
    columns: dict[str, np.ndarray]
    status: str = "ok"
    failure_time: float | None = None
    message: str = ""
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def __len__(self) -> int:
        return len(self.columns["t"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def to_csv(self, path: str | Path | None = None) -> str:
        """Header plus rows; floats use shortest round-trip repr."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        cols = [self.columns[c] for c in LOG_COLUMNS]
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> TimeSeriesLog:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        data = (np.array([[float(v) for v in r] for r in body]) if body
                else np.zeros((0, len(header))))
        return cls({h: data[:, j].copy() for j, h in enumerate(header)})


def wrap(theta: float) -> float:
    return float(wrap_angle(theta))
