import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from statcomsim.controllers import (ControllerConfig, ControllerInputs, ControllerKind,
                                    DerivEstimator, DoubleLoopState, DovState, PiBlock,
                                    ProposedState, controller_step, double_loop_step,
                                    dov_feedforward, dov_step, initial_controller_state,
                                    outer_loops_step, pi_step, proposed_step, saturate_command)
from statcomsim.frames import DqPair
from statcomsim.statcom import StatcomParams

WITNESS = StatcomParams(r_s=0.01, l_s=0.15 / 377.0, omega=377.0)
DT = 1e-4


def inputs(v=1.0, v_ref=1.0, v_dc=3.0, v_dc_ref=3.0, i=DqPair(0.0, 0.0), dt=DT):
    return ControllerInputs(v, v_ref, v_dc, v_dc_ref, i, dt)


class TestPiStep:
    def test_zero(self):
        _, u = pi_step(PiBlock(3.0, 600.0), 0.0, DT)
        assert u == 0.0

    def test_hand_arithmetic(self):
        blk, u = pi_step(PiBlock(1.0, 10.0), 0.1, 0.01)
        assert u == pytest.approx(0.11, abs=1e-15)
        assert blk.integrator == pytest.approx(0.01, abs=1e-15)

    def test_anti_windup(self):
        blk, u = pi_step(PiBlock(100.0, 10.0, 0.0, -1.0, 1.0), 1.0, DT)
        assert u == 1.0 and blk.integrator == 0.0

    def test_integrates_back_out_of_saturation(self):
        blk, u = pi_step(PiBlock(100.0, 10.0, 0.5, -1.0, 1.0), -0.001, DT)
        assert blk.integrator < 0.5

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            pi_step(PiBlock(1.0, 1.0), 0.1, 0.0)

    def test_limits_ordered(self):
        with pytest.raises(ValueError):
            PiBlock(1.0, 1.0, 0.0, 1.0, 1.0)

    @given(st.lists(st.floats(-100.0, 100.0, allow_nan=False), min_size=1, max_size=60),
           st.floats(0.0, 50.0), st.floats(0.0, 5e4), st.floats(0.01, 5.0))
    def test_output_never_exceeds_limits(self, errors, kp, ki, lim):
        blk = PiBlock(kp, ki, 0.0, -lim, lim)
        for e in errors:
            blk, u = pi_step(blk, e, 1e-3)
            assert -lim <= u <= lim
            assert math.isfinite(blk.integrator)


class TestOuterLoops:
    def test_zero_errors(self):
        _, _, i = outer_loops_step(PiBlock(3, 600), PiBlock(0.5, 20), inputs())
        assert i == DqPair(0.0, 0.0)

    def test_sag_requests_capacitive_current(self):
        # capacitive current is negative on the q axis in this frame
        _, _, i = outer_loops_step(PiBlock(3, 600), PiBlock(0.5, 20), inputs(v=0.9))
        assert i.q < 0.0

    def test_hand_arithmetic(self):
        _, _, i = outer_loops_step(PiBlock(2.0, 0.0), PiBlock(0.5, 20), inputs(v=1.05))
        assert i.q == pytest.approx(0.10, abs=1e-15)

    def test_dc_loop_charges_on_low_link(self):
        # negative d current draws active power into the converter
        _, _, i = outer_loops_step(PiBlock(3, 600), PiBlock(0.5, 20), inputs(v_dc=2.9))
        assert i.d < 0.0


class TestDovFeedforward:
    def test_idle(self):
        assert dov_feedforward(DqPair(0, 0), 1.0, WITNESS) == DqPair(1.0, 0.0)

    def test_quadrature_current(self):
        v = dov_feedforward(DqPair(0.0, -1.0), 1.0, WITNESS)
        assert (v.d, v.q) == pytest.approx((1.15, -0.01), abs=1e-15)

    def test_witness(self):
        v = dov_feedforward(DqPair(0.2, -0.8), 1.0, WITNESS)
        assert (v.d, v.q) == pytest.approx((1.122, 0.022), abs=1e-15)


class TestProposed:
    def test_reduces_to_dov_when_steady(self):
        ac, dc = PiBlock(3, 600, -0.4, -3, 3), PiBlock(0.5, 20, 0.1, -1, 1)
        inp = inputs(v=1.0)
        est = DerivEstimator(prev=DqPair(0.1, -0.4), filtered=DqPair(0, 0))
        *_, cmd_p = proposed_step(ac, dc, est, inp, WITNESS)
        *_, cmd_d = dov_step(ac, dc, inp, WITNESS)
        assert cmd_p.v_conv_ref == cmd_d.v_conv_ref

    def test_reference_step_sign(self):
        # drive the q reference from 0 to -1 in one sample
        ac, dc = PiBlock(10.0, 0.0, 0.0, -3, 3), PiBlock(0.0, 0.0, 0.0, -1, 1)
        inp = inputs(v=0.9)
        est = DerivEstimator(tau_f=2e-3)
        *_, cmd_p = proposed_step(ac, dc, est, inp, WITNESS)
        *_, cmd_d = dov_step(ac, dc, inp, WITNESS)
        assert cmd_p.i_ref.q == pytest.approx(-1.0)
        slope = (DT / (2e-3 + DT)) * (-1.0 / DT)
        gap = cmd_p.v_conv_ref.q - cmd_d.v_conv_ref.q
        assert gap < 0.0
        assert gap == pytest.approx(WITNESS.l_s * slope, rel=1e-12)

    def test_at_references(self):
        ac, dc = PiBlock(3, 600, 0, -3, 3), PiBlock(0.5, 20, 0, -1, 1)
        *_, cmd = proposed_step(ac, dc, DerivEstimator(), inputs(v=1.0), WITNESS)
        assert cmd.v_conv_ref == DqPair(1.0, 0.0)

    def test_reduction_over_random_states(self, rng):
        for _ in range(1000):
            ac = PiBlock(rng.uniform(0, 10), rng.uniform(0, 1e3), rng.uniform(-2, 2), -3, 3)
            dc = PiBlock(rng.uniform(0, 2), rng.uniform(0, 50), rng.uniform(-.5, .5), -1, 1)
            inp = inputs(v=rng.uniform(0.5, 1.5), v_dc=rng.uniform(2.5, 3.5),
                         i=DqPair(*rng.uniform(-2, 2, 2)))
            # a previous sample equal to the coming reference gives a zero estimate
            _, _, i_ref = outer_loops_step(ac, dc, inp)
            est = DerivEstimator(prev=i_ref, filtered=DqPair(0.0, 0.0))
            *_, cp = proposed_step(ac, dc, est, inp, WITNESS)
            *_, cd = dov_step(ac, dc, inp, WITNESS)
            assert abs(cp.v_conv_ref.d - cd.v_conv_ref.d) <= 1e-15
            assert abs(cp.v_conv_ref.q - cd.v_conv_ref.q) <= 1e-15


class TestDoubleLoop:
    def test_zero_inner_error(self):
        ac, dc = PiBlock(0, 0, -0.5, -3, 3), PiBlock(0, 0, 0.1, -1, 1)
        i = DqPair(0.1, -0.5)
        idp, iqp = PiBlock(0.3, 60, 0, -.5, .5), PiBlock(0.3, 60, 0, -.5, .5)
        *_, cmd = double_loop_step(ac, dc, idp, iqp, inputs(i=i), WITNESS)
        assert (cmd.v_conv_ref.d, cmd.v_conv_ref.q) == pytest.approx(
            (-0.15 * -0.5 + 1.0, 0.15 * 0.1), abs=1e-15)

    def test_inner_hand_arithmetic(self):
        ac, dc = PiBlock(0, 0, 0, -3, 3), PiBlock(0, 0, 0.1, -1, 1)
        idp, iqp = PiBlock(0.5, 0.0, 0, -1, 1), PiBlock(0.5, 0.0, 0, -1, 1)
        *_, cmd = double_loop_step(ac, dc, idp, iqp, inputs(v=1.0), WITNESS)
        assert cmd.v_conv_ref.d == pytest.approx(1.05, abs=1e-15)

    def test_idle(self):
        ac, dc = PiBlock(3, 600, 0, -3, 3), PiBlock(0.5, 20, 0, -1, 1)
        idp, iqp = PiBlock(0.3, 60, 0, -.5, .5), PiBlock(0.3, 60, 0, -.5, .5)
        *_, cmd = double_loop_step(ac, dc, idp, iqp, inputs(), WITNESS)
        assert cmd.v_conv_ref == DqPair(1.0, 0.0)


class TestSaturate:
    def test_under_limit(self):
        assert saturate_command(DqPair(0.3, 0.4), 3.0, 1.0) == DqPair(0.3, 0.4)

    def test_scaled(self):
        v = saturate_command(DqPair(3.0, 4.0), 5.0, 1.0)
        assert (v.d, v.q) == pytest.approx((1.5, 2.0), abs=1e-15)

    def test_zero(self):
        assert saturate_command(DqPair(0.0, 0.0), 3.0, 1.0) == DqPair(0.0, 0.0)

    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.1, 5), st.floats(0.05, 1.2))
    def test_angle_and_bound(self, d, q, v_dc, m):
        v = saturate_command(DqPair(d, q), v_dc, m)
        assert v.magnitude() <= m * v_dc / 2 * (1 + 1e-15) or v == DqPair(d, q)
        if math.hypot(d, q) > 1e-9:
            assert math.atan2(v.q, v.d) == pytest.approx(math.atan2(q, d), abs=1e-12)

    @pytest.mark.parametrize("v_dc,m", [(0.0, 1.0), (3.0, 0.0), (3.0, 1.3)])
    def test_preconditions(self, v_dc, m):
        with pytest.raises(ValueError):
            saturate_command(DqPair(1, 0), v_dc, m)


class TestStrategyStates:
    @pytest.mark.parametrize("kind,count,cls", [(ControllerKind.DOUBLE_LOOP, 4, DoubleLoopState),
                                                (ControllerKind.DOV, 2, DovState),
                                                (ControllerKind.PROPOSED, 2, ProposedState)])
    def test_pi_count(self, kind, count, cls):
        s = initial_controller_state(ControllerConfig(), kind)
        assert isinstance(s, cls)
        assert len(s.pi_blocks()) == count

    @pytest.mark.parametrize("kind", list(ControllerKind))
    def test_deterministic(self, kind, rng):
        seq = [inputs(v=v, v_dc=vd, i=DqPair(a, b))
               for v, vd, a, b in rng.uniform([0.8, 2.8, -1, -1], [1.2, 3.2, 1, 1], (50, 4))]

        def trace():
            s = initial_controller_state(ControllerConfig(), kind)
            out = []
            for inp in seq:
                s, cmd = controller_step(s, inp, WITNESS)
                out.append((cmd.v_conv_ref.d, cmd.v_conv_ref.q))
            return np.array(out)

        assert np.array_equal(trace(), trace())

    def test_config_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            ControllerConfig(kind="pid")

    def test_default_gains(self):
        g = ControllerConfig().gains
        assert (g.ac.kp, g.ac.ki, g.dc.kp, g.dc.ki) == (3.0, 600.0, 0.5, 20.0)
        assert (g.id.kp, g.id.ki, g.iq.kp, g.iq.ki) == (0.3, 60.0, 0.3, 60.0)
