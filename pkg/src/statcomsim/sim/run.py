"""Scenario execution: parameter packing, steady-state initialization,
integration and multi-controller comparison."""
from __future__ import annotations

import cmath
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.optimize import fsolve, root

from ..controllers import KIND_CODES, ControllerKind
from ..machine import equilibrium_slip, phasor_steady_state, steady_state
from ..network import source_magnitude
from . import kernel as K
from .metrics import StepMetrics, event_windows, step_metrics
from .solver import LOG_COLUMNS, _OUT_FOR_COLUMN, SystemState, TimeSeriesLog

if TYPE_CHECKING:
    from ..scenario import Scenario

log = logging.getLogger(__name__)

STATUS_NAMES = {K.STATUS_OK: "ok", K.STATUS_DC_COLLAPSE: "dc-link collapse",
                K.STATUS_BLOWUP: "numerical blow-up"}


class SimulationError(RuntimeError):
    pass


@dataclass
class Packed:
    par: np.ndarray
    mot: np.ndarray


def pack_parameters(sc: Scenario) -> Packed:
    g, st, c = sc.grid, sc.statcom, sc.controller
    par = np.zeros(K.N_PAR)
    par[K.P_RG], par[K.P_LG], par[K.P_CBUS], par[K.P_WG] = g.r_g, g.l_g, g.c_bus, g.omega_nom
    par[K.P_RS], par[K.P_LS], par[K.P_WS] = st.r_s, st.l_s, st.omega
    par[K.P_CDC], par[K.P_RLOSS], par[K.P_VDC_FLOOR] = st.c_dc, st.r_loss, st.v_dc_floor
    par[K.P_ST_ON] = 1.0 if st.enabled else 0.0
    par[K.P_KIND] = KIND_CODES[c.kind]
    gn, lim = c.gains, c.limits
    par[K.P_KP_AC], par[K.P_KI_AC] = gn.ac.kp, gn.ac.ki
    par[K.P_KP_DC], par[K.P_KI_DC] = gn.dc.kp, gn.dc.ki
    par[K.P_KP_ID], par[K.P_KI_ID] = gn.id.kp, gn.id.ki
    par[K.P_KP_IQ], par[K.P_KI_IQ] = gn.iq.kp, gn.iq.ki
    par[K.P_IDMAX], par[K.P_IQMAX] = lim.i_d_max, lim.i_q_max
    par[K.P_VINMAX], par[K.P_MMAX] = lim.v_inner_max, lim.m_max
    par[K.P_TAUF], par[K.P_VREF], par[K.P_VDCREF] = c.deriv_filter.tau_f, c.v_ref, sc.v_dc_ref
    par[K.P_TAUV] = c.sensor_tau
    par[K.P_PLL_KP], par[K.P_PLL_KI], par[K.P_PLL_WNOM] = c.pll.kp, c.pll.ki, c.pll.omega_nom
    par[K.P_DISCRETE] = 1.0 if c.discrete else 0.0
    groups = sc.motors.group_list()
    mot = np.zeros((len(groups), K.N_MPAR))
    for k, grp in enumerate(groups):
        p = grp.params
        mot[k] = (grp.count, p.r_stator, p.r_rotor, p.l_ss, p.l_rr, p.l_m, p.j_inertia,
                  p.pole_pairs, p.load.torque_const, p.load.torque_quad)
    return Packed(par, mot)


def source_schedule(sc: Scenario) -> np.ndarray:
    """Source magnitude held over each solver step (events snapped to the step grid)."""
    dt, n = sc.solver.dt, sc.solver.n_steps
    emf = np.full(n, sc.grid.v_source_nom)
    events = sc.snapped_events()
    mids = (np.arange(n) + 0.5) * dt
    for ev in events:
        k0, k1 = round(ev.t_start / dt), round(ev.t_end / dt)
        emf[k0:k1] = sc.grid.v_source_nom * ev.factor()
    if sc.solver.init == "flat":
        emf *= np.minimum(1.0, mids / sc.solver.flat_ramp)
    return emf


def _active_mask(sc: Scenario, n: int) -> np.ndarray:
    m = np.ones(n, dtype=bool)
    if sc.grid.c_bus == 0.0:
        m[[K.X_IGD, K.X_IGQ, K.X_VPD, K.X_VPQ]] = False
    kind = sc.controller.kind
    if kind is not ControllerKind.DOUBLE_LOOP:
        m[[K.X_INT_ID, K.X_INT_IQ]] = False
    if kind is not ControllerKind.PROPOSED:
        m[[K.X_FD, K.X_FQ]] = False
    if not sc.statcom.enabled:
        m[[K.X_ID, K.X_IQ, K.X_VDC, K.X_AC, K.X_DC, K.X_INT_ID, K.X_INT_IQ, K.X_FD,
           K.X_FQ]] = False
    return m


@dataclass
class OperatingPoint:
    v_pcc: complex
    i_statcom: complex
    i_grid: complex
    slips: list[float]


def phasor_operating_point(sc: Scenario) -> OperatingPoint:
    """Steady operating point of the one-bus circuit from phasor relations only.

    With the STATCOM on, |V_pcc| = v_ref and the converter covers its DC
    losses; without it, the bus floats.
    """
    g, st = sc.grid, sc.statcom
    w = g.omega_nom
    e = sc.grid.v_source_nom
    z_g = g.r_g + 1j * w * g.l_g
    y_c = 1j * w * g.c_bus
    groups = sc.motors.group_list()
    v_dc = sc.v_dc_ref

    def motor_current(v: complex) -> tuple[complex, list[float]]:
        slips = [equilibrium_slip(grp.params, abs(v), w) for grp in groups]
        i = sum(grp.count * phasor_steady_state(grp.params, v, s, w).i_stator
                for grp, s in zip(groups, slips))
        return i, slips

    if st.enabled:
        v_ref = sc.controller.v_ref
        i_unit, slips = motor_current(v_ref + 0j)

        def f(u):
            phi, i_d, i_q = u
            rot = cmath.exp(1j * phi)
            v = v_ref * rot
            i_s = (i_d + 1j * i_q) * rot
            i_m = i_unit * rot
            i_g = (e - v) / z_g
            kcl = i_g + i_s - i_m - y_c * v
            v_c = v + (st.r_s + 1j * st.x_s) * i_s
            p_conv = 1.5 * (v_c * i_s.conjugate()).real
            return [kcl.real, kcl.imag, p_conv + v_dc ** 2 / st.r_loss]

        sol, info, ier, msg = fsolve(f, [0.0, 0.0, -0.5], full_output=True, xtol=1e-13)
        if ier != 1 and not np.max(np.abs(f(sol))) < 1e-10:
            raise SimulationError(f"phasor operating point did not converge: {msg}")
        phi, i_d, i_q = sol
        rot = cmath.exp(1j * phi)
        v = v_ref * rot
        i_s = (i_d + 1j * i_q) * rot
        return OperatingPoint(v, i_s, (e - v) / z_g, slips)

    def f(u):
        v = u[0] + 1j * u[1]
        i_m, _ = motor_current(v)
        kcl = (e - v) / z_g - i_m - y_c * v
        return [kcl.real, kcl.imag]

    sol, info, ier, msg = fsolve(f, [e, 0.0], full_output=True, xtol=1e-13)
    if ier != 1 and not np.max(np.abs(f(sol))) < 1e-10:
        raise SimulationError(f"phasor operating point did not converge: {msg}")
    v = sol[0] + 1j * sol[1]
    _, slips = motor_current(v)
    return OperatingPoint(v, 0j, (e - v) / z_g, slips)


def _phasor_state(sc: Scenario, op: OperatingPoint) -> np.ndarray:
    st = sc.statcom
    groups = sc.motors.group_list()
    x = np.zeros(K.n_states(len(groups)))
    phi = cmath.phase(op.v_pcc)
    rot = cmath.exp(-1j * phi)
    i_pll = op.i_statcom * rot
    x[K.X_ID], x[K.X_IQ] = op.i_statcom.real, op.i_statcom.imag
    x[K.X_VDC] = sc.v_dc_ref
    x[K.X_DELTA] = phi
    x[K.X_AC], x[K.X_DC] = i_pll.imag, i_pll.real
    x[K.X_INT_ID], x[K.X_INT_IQ] = st.r_s * i_pll.real, st.r_s * i_pll.imag
    x[K.X_FD], x[K.X_FQ] = i_pll.real, i_pll.imag
    x[K.X_VMD], x[K.X_VMQ] = op.v_pcc.real, op.v_pcc.imag
    x[K.X_IGD], x[K.X_IGQ] = op.i_grid.real, op.i_grid.imag
    x[K.X_VPD], x[K.X_VPQ] = op.v_pcc.real, op.v_pcc.imag
    w = sc.grid.omega_nom
    for k, (grp, s) in enumerate(zip(groups, op.slips)):
        m = steady_state(grp.params, op.v_pcc, s, w)
        b = K.X_MOT + K.N_MSTATE * k
        x[b:b + 5] = (m.lambda_s.d, m.lambda_s.q, m.lambda_r.d, m.lambda_r.q, m.omega_r)
    return x


def evaluate_rhs(sc: Scenario, x: np.ndarray, emf: float | None = None,
                 packed: Packed | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time derivative and algebraic outputs at state x."""
    pk = packed or pack_parameters(sc)
    par = pk.par.copy()
    par[K.P_DISCRETE] = 0.0
    dx = np.zeros_like(x)
    out = np.zeros(K.N_OUT)
    K.rhs(np.asarray(x, dtype=float), sc.grid.v_source_nom if emf is None else emf, par,
          pk.mot, np.zeros(K.N_HOLD), dx, out)
    return dx, out


def _state_scale(sc: Scenario, x: np.ndarray) -> np.ndarray:
    scale = np.ones_like(x)
    scale[K.X_MOT + 4::K.N_MSTATE] = sc.grid.omega_nom
    return scale


def initial_state(sc: Scenario) -> tuple[np.ndarray, str]:
    """Equilibrium of the pre-event system, or a flat start as fallback.

    Returns the state and the method actually used.
    """
    pk = pack_parameters(sc)
    n = K.n_states(pk.mot.shape[0])
    if sc.solver.init == "phasor":
        try:
            x0 = _phasor_state(sc, phasor_operating_point(sc))
            mask = _active_mask(sc, n)
            scale = _state_scale(sc, x0)

            def f(z):
                x = x0.copy()
                x[mask] = z * scale[mask]
                dx, _ = evaluate_rhs(sc, x, packed=pk)
                return dx[mask] * scale[mask] / scale[mask].max()

            sol = root(f, x0[mask] / scale[mask], method="hybr", options={"xtol": 1e-14})
            x = x0.copy()
            x[mask] = sol.x * scale[mask]
            dx, _ = evaluate_rhs(sc, x, packed=pk)
            if np.all(np.isfinite(x)) and np.max(np.abs(dx[mask])) < 1e-6:
                return x, "phasor"
            log.warning("steady-state polish did not converge (%s); using flat start",
                        sol.message)
        except (SimulationError, ValueError) as exc:
            log.warning("phasor initialization failed (%s); using flat start", exc)
    x = np.zeros(n)
    x[K.X_VDC] = sc.v_dc_ref
    return x, "flat"


def run_scenario(sc: Scenario, x0: np.ndarray | None = None) -> TimeSeriesLog:
    """Integrate the scenario and return the decimated log.

    On DC-link collapse or blow-up the log is truncated at the last good
    sample and carries the failure status and time.
    """
    solver = sc.solver
    pk = pack_parameters(sc)
    if x0 is None:
        x0, method = initial_state(sc)
        if method == "flat" and solver.init == "phasor":
            sc = sc.with_solver(init="flat")
    emf = source_schedule(sc)
    x = np.array(x0, dtype=float)
    n_rows = solver.n_steps // solver.log_decimation + 1
    vals = np.zeros((n_rows, x.size))
    extra = np.zeros((n_rows, K.N_OUT))
    hold = np.zeros(K.N_HOLD)
    status, fail_step, rows = K.simulate(x, emf, pk.par, pk.mot, hold, solver.dt,
                                         solver.log_decimation, vals, extra)
    t = np.arange(rows) * (solver.dt * solver.log_decimation)
    cols = {"t": t}
    for name in LOG_COLUMNS[1:]:
        cols[name] = extra[:rows, _OUT_FOR_COLUMN[name]].copy()
    result = TimeSeriesLog(cols, extra={"states": vals[:rows].copy(),
                                        "outputs": extra[:rows].copy(),
                                        "final_state": x.copy()})
    if status != K.STATUS_OK:
        result.status = STATUS_NAMES[status]
        result.failure_time = (fail_step + 1) * solver.dt
        result.message = f"{result.status} at t={result.failure_time:.6g}s"
    return result


def final_system_state(sc: Scenario, result: TimeSeriesLog) -> SystemState:
    return SystemState.unpack(result.extra["final_state"], sc.grid.omega_nom)


def system_rk4_step(state: SystemState, t: float, dt: float, sc: Scenario) -> SystemState:
    """Advance the composed system by one RK4 step from time t.

    The source magnitude is the one in force over [t, t + dt); in discrete
    mode the controller is sampled once before the stages.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    pk = pack_parameters(sc)
    x = state.pack()
    n = x.size
    emf = source_magnitude(t + 0.5 * dt, sc.grid.v_source_nom, sc.snapped_events())
    hold = np.zeros(K.N_HOLD)
    if sc.controller.discrete:
        K.discrete_update(x, pk.par, hold, dt)
    scratch = [np.empty(n) for _ in range(5)]
    ok = K.rk4_advance(x, emf, pk.par, pk.mot, hold, dt, *scratch, np.zeros(K.N_OUT))
    if not ok or not np.all(np.isfinite(x)):
        raise FloatingPointError(f"numerical blow-up at t={t:g}")
    return SystemState.unpack(x, sc.grid.omega_nom)


@dataclass
class ControllerRun:
    kind: ControllerKind
    log: TimeSeriesLog
    metrics: dict[str, list[StepMetrics]]

    @property
    def failed(self) -> bool:
        return not self.log.ok


METRIC_COLUMNS = ("v_pcc_mag", "motor_speed", "motor_torque")


def run_with_metrics(sc: Scenario) -> ControllerRun:
    result = run_scenario(sc)
    windows = event_windows(sc.snapped_events(), sc.solver.t_end)
    if not result.ok:
        # a run that died early has no samples for the later events
        t_last = result["t"][-1]
        windows = [w for w in windows if w.t_start <= t_last]
    metrics = {col: [step_metrics(result, col, w) for w in windows] for col in METRIC_COLUMNS}
    return ControllerRun(sc.controller.kind, result, metrics)


def compare_controllers(sc: Scenario, kinds=tuple(ControllerKind), parallel: bool = True
                        ) -> dict[ControllerKind, ControllerRun]:
    """Run the same scenario under each controller kind."""
    scenarios = [sc.with_controller(k) for k in kinds]
    if parallel and len(scenarios) > 1:
        # compile once before fanning out
        run_scenario(scenarios[0].with_solver(t_end=0.0))
        with ThreadPoolExecutor(max_workers=len(scenarios)) as pool:
            runs = list(pool.map(run_with_metrics, scenarios))
    else:
        runs = [run_with_metrics(s) for s in scenarios]
    return {r.kind: r for r in runs}


__all__ = ["pack_parameters", "source_schedule", "phasor_operating_point", "initial_state",
           "run_scenario", "compare_controllers", "run_with_metrics", "ControllerRun",
           "evaluate_rhs", "final_system_state", "system_rk4_step", "SimulationError"]
