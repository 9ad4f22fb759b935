import numpy as np
import pytest
from scipy.optimize import brentq

from statcomsim.controllers import ControllerKind
from statcomsim.machine import phasor_steady_state
from statcomsim.network import GridParams
from statcomsim.scenario import Scenario, deep_fault_scenario, sag_swell_scenario
from statcomsim.sim import kernel as K
from statcomsim.sim.metrics import event_windows
from statcomsim.sim.run import (compare_controllers, evaluate_rhs, initial_state,
                                phasor_operating_point, run_scenario)
from statcomsim.statcom import StatcomParams


def collapse_scenario():
    data = deep_fault_scenario().model_dump()
    data["controller"]["gains"]["dc"] = {"kp": 0.0, "ki": 0.0}
    data["statcom"]["r_loss"] = 5.0
    return Scenario.model_validate(data)


def power_flow(sc: Scenario) -> complex:
    """Fixed-point iteration of the one-bus circuit with motors at torque balance."""
    g, p = sc.grid, sc.motors.params
    w = g.omega_nom
    z_g = g.r_g + 1j * w * g.l_g
    y_c = 1j * w * g.c_bus
    v = complex(g.v_source_nom)
    for _ in range(200):
        s = brentq(lambda s: phasor_steady_state(p, abs(v), s, w).torque
                   - p.load.torque((1 - s) * w), 1e-7, 0.3, xtol=1e-15)
        i_load = sc.motors.count * phasor_steady_state(p, v, s, w).i_stator
        v_new = (g.v_source_nom / z_g - i_load) / (1 / z_g + y_c)
        if abs(v_new - v) < 1e-14:
            break
        v = v_new
    return v


class TestRunBasics:
    def test_zero_length_run(self):
        log = run_scenario(Scenario().with_solver(t_end=0.0))
        assert len(log["t"]) == 1
        assert log.ok

    def test_no_event_run_is_flat(self):
        log = run_scenario(Scenario().with_solver(t_end=1.0))
        after = log["t"] >= 0.5
        assert np.max(np.abs(log["v_pcc_mag"][after] - 1.0)) < 0.005

    def test_row_count(self):
        sc = Scenario().with_solver(t_end=0.1, dt=1e-4, log_decimation=7)
        assert len(run_scenario(sc)["t"]) == int(0.1 / 7e-4) + 1

    def test_deterministic(self):
        sc = sag_swell_scenario(t_end=1.0)
        assert run_scenario(sc).to_csv() == run_scenario(sc).to_csv()

    def test_deviation_confined_to_events(self):
        sc = sag_swell_scenario()
        log = run_scenario(sc)
        t, v = log["t"], log["v_pcc_mag"]
        quiet = np.ones_like(t, dtype=bool)
        for w in event_windows(sc.snapped_events(), sc.solver.t_end):
            # allow 0.5 s of recovery after the event clears
            quiet &= ~((t >= w.t_start) & (t < w.t_clear + 0.5))
        assert np.max(np.abs(v[quiet] - 1.0)) < 1e-3
        dev = np.abs(v - 1.0)
        assert dev[(t >= 4.0) & (t < 4.1)].max() > 0.01
        assert dev[(t >= 10.0) & (t < 10.1)].max() > 0.01


class TestInitialization:
    @pytest.mark.parametrize("kind", list(ControllerKind))
    def test_phasor_init_is_equilibrium(self, kind):
        sc = Scenario().with_controller(kind)
        x, method = initial_state(sc)
        assert method == "phasor"
        dx, out = evaluate_rhs(sc, x)
        assert np.max(np.abs(dx)) < 1e-6
        assert out[K.O_VMAG] == pytest.approx(1.0, abs=1e-9)

    def test_operating_point_regulates_voltage(self):
        op = phasor_operating_point(Scenario())
        assert abs(op.v_pcc) == pytest.approx(1.0, abs=1e-10)
        # motor load draws lagging current, so the compensator injects capacitive current
        assert op.i_statcom.imag < 0.0

    def test_fallback_to_flat_start(self, caplog):
        sc = Scenario(statcom=StatcomParams(r_loss=1e-6))
        x, method = initial_state(sc)
        assert method == "flat"
        assert x[K.X_VDC] == sc.v_dc_ref
        assert "flat start" in caplog.text


class TestNetworkConsistency:
    def test_quasi_static_flat_start_matches_power_flow(self):
        sc = Scenario(statcom=StatcomParams(enabled=False)).with_solver(init="flat", t_end=4.0)
        log = run_scenario(sc)
        assert log.ok
        assert log["v_pcc_mag"][-1] == pytest.approx(abs(power_flow(sc)), rel=1e-3)

    def test_capacitive_node_matches_power_flow(self):
        grid = GridParams()
        grid = grid.model_copy(update={"c_bus": grid.c_bus_for_resonance(20.0)})
        sc = Scenario(grid=grid, statcom=StatcomParams(enabled=False)).with_solver(t_end=0.5)
        log = run_scenario(sc)
        v_ref = abs(power_flow(sc))
        np.testing.assert_allclose(log["v_pcc_mag"], v_ref, rtol=1e-6)

    def test_capacitive_node_with_statcom_regulates(self):
        grid = GridParams()
        grid = grid.model_copy(update={"c_bus": grid.c_bus_for_resonance(20.0)})
        log = run_scenario(sag_swell_scenario(t_end=6.0).model_copy(update={"grid": grid}))
        assert log.ok
        assert log["v_pcc_mag"][-1] == pytest.approx(1.0, abs=2e-3)


class TestFailures:
    def test_collapse_gives_partial_log(self):
        log = run_scenario(collapse_scenario())
        assert not log.ok
        assert log.status == "dc-link collapse"
        assert 1.0 < log.failure_time < 3.0
        assert log["t"][-1] <= log.failure_time
        assert np.all(np.isfinite(log["v_pcc_mag"]))
        assert "dc-link collapse at t=" in log.message

    def test_compare_marks_failed_runs(self):
        runs = compare_controllers(collapse_scenario())
        assert set(runs) == set(ControllerKind)
        assert all(r.failed for r in runs.values())
        ok = compare_controllers(deep_fault_scenario())
        assert not any(r.failed for r in ok.values())
        assert len(ok[ControllerKind.DOV].metrics["v_pcc_mag"]) == 1
