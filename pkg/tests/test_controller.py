import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hydrohybrid.controller import (
    NEVER,
    ControllerConfig,
    ControllerState,
    ForceSegment,
    HysteresisConfig,
    PositionSegment,
    ReferenceSpec,
    ReturnRule,
    SwitchContext,
    control_law,
    controller_step,
    dz_compensator,
    hysteresis_update,
    integrator_step,
    lpf_state_space,
    lpf_step,
    reference_value,
)
from hydrohybrid.errors import ValidationError
from hydrohybrid.linear_system import NOMINAL_GAINS_FORCE, NOMINAL_GAINS_POSITION
from hydrohybrid.numerics import frequency_response
from hydrohybrid.plant import FORCE, POSITION, PlantState, dead_zone
from hydrohybrid.simulation import scenario_a, scenario_b

GAINS = {POSITION: NOMINAL_GAINS_POSITION, FORCE: NOMINAL_GAINS_FORCE}
HYST = HysteresisConfig()


class TestControlLaw:
    def test_position_at_reference(self):
        assert control_law(0.05, [0.05, 0, 0, 0, 0], NOMINAL_GAINS_POSITION, POSITION) == 0.0

    def test_position_feedforward(self):
        assert control_law(0.1, [0, 0, 0, 0, 0], NOMINAL_GAINS_POSITION, POSITION) == pytest.approx(19.0)

    def test_force_at_reference(self):
        assert control_law(3500.0, [0, 0, 0, 3500.0, 0], NOMINAL_GAINS_FORCE, FORCE) == 0.0

    def test_integral_sign(self):
        # positive accumulated error (reference ahead of output) pushes u up
        assert control_law(0.0, [0, 0, 0, 0, 1.0], NOMINAL_GAINS_POSITION, POSITION) == NOMINAL_GAINS_POSITION.Ki

    def test_rejects_wrong_mode_gains(self):
        with pytest.raises(ValidationError):
            control_law(0.0, [0] * 5, NOMINAL_GAINS_FORCE, POSITION)


class TestIntegrator:
    def test_no_error(self):
        assert integrator_step(0.3, 1.0, 1.0, 1e-5) == 0.3

    def test_rectangle_rule(self):
        e = 0.0
        for _ in range(100_000):
            e = integrator_step(e, 0.01, 0.0, 1e-5)
        assert e == pytest.approx(0.01, rel=1e-9)

    def test_anti_windup_freezes(self):
        assert integrator_step(0.2, 1.0, 0.0, 1e-3, saturated=1) == 0.2

    def test_unwinds_when_saturated(self):
        assert integrator_step(0.2, 0.0, 1.0, 1e-3, saturated=1) == pytest.approx(0.199)

    def test_clamp(self):
        assert integrator_step(0.99, 100.0, 0.0, 1.0, e_max=1.0) == 1.0

    def test_bad_step(self):
        with pytest.raises(ValidationError):
            integrator_step(0.0, 1.0, 0.0, 0.0)


class TestDeadZoneCompensator:
    def test_zero(self):
        assert dz_compensator(0.0) == 0.0

    def test_example(self):
        assert dz_compensator(0.25, 0.05) == pytest.approx(0.30)
        assert dead_zone(dz_compensator(0.25, 0.05), 0.05) == 0.25

    def test_saturation_edge(self):
        assert dz_compensator(0.99, 0.05, 1.0) == 1.0
        assert dead_zone(dz_compensator(0.99, 0.05, 1.0), 0.05, 1.0) == pytest.approx(0.95)

    @given(st.floats(-0.95, 0.95))
    def test_inverse_within_one_ulp(self, u):
        # only the rounding of u + delta is lost
        got = dead_zone(dz_compensator(u, 0.05, 1.0), 0.05, 1.0)
        assert abs(got - u) <= np.spacing(abs(u) + 0.05)

    def test_odd(self):
        assert dz_compensator(-0.4) == -dz_compensator(0.4)


class TestLowPass:
    def test_zero(self):
        assert lpf_step((0.0, 0.0), 0.0, 1e-5, 50.0) == ((0.0, 0.0), 0.0)

    def test_unity_dc(self):
        s = (0.0, 0.0)
        for _ in range(20_000):
            s, y = lpf_step(s, 0.7, 1e-5, 50.0)
        assert y == pytest.approx(0.7, abs=1e-6)

    def test_magnitude_at_cutoff_matches_frequency_response(self):
        f_c, dt = 50.0, 1e-5
        A, b, c = lpf_state_space(f_c)
        expect = abs(frequency_response(A, b, c, 2 * math.pi * f_c))
        assert expect == pytest.approx(0.5, rel=1e-12)  # critically damped: -6 dB
        s, out = (0.0, 0.0), []
        n = int(round(0.4 / dt))
        for k in range(n):
            s, y = lpf_step(s, math.sin(2 * math.pi * f_c * k * dt), dt, f_c)
            if k * dt >= 0.2:
                out.append(y)
        assert max(np.abs(out)) == pytest.approx(expect, rel=2e-3)

    def test_discretization_guard(self):
        with pytest.raises(ValidationError):
            lpf_step((0.0, 0.0), 1.0, 2e-3, 50.0)


class TestHysteresis:
    def test_upper_boundary_inclusive(self):
        h, ctrl = hysteresis_update(POSITION, HYST.T_hi, 1.0, HYST, ControllerState(e=0.4))
        assert h == FORCE and ctrl.e == 0.0 and ctrl.last_switch_time == 1.0

    def test_band_holds(self):
        h, _ = hysteresis_update(FORCE, 0.5 * (HYST.T_hi + HYST.T_lo), 1.0, HYST,
                                 ControllerState(h=FORCE))
        assert h == FORCE

    def test_lower_boundary(self):
        h, _ = hysteresis_update(FORCE, HYST.T_lo, 1.0, HYST, ControllerState(h=FORCE))
        assert h == POSITION

    def test_dwell_guard(self):
        ctrl = ControllerState(last_switch_time=0.98)
        h, out = hysteresis_update(POSITION, HYST.T_hi, 1.0, HYST, ctrl)
        assert h == POSITION and out == ctrl

    def test_never_switched(self):
        assert ControllerState().last_switch_time == NEVER

    def test_invalid_config(self):
        with pytest.raises(ValidationError):
            HysteresisConfig(T_hi=100.0, T_lo=200.0)


class TestReference:
    def test_scenario_a_ramp(self):
        assert reference_value(1.0, POSITION, scenario_a().reference) == pytest.approx(0.03)

    def test_scenario_a_force_start(self):
        ctx = SwitchContext(t_switch=1.7, x_switch=0.051)
        assert reference_value(1.7, FORCE, scenario_a().reference, ctx) == 3500.0

    def test_scenario_a_release_is_monotone(self):
        spec = scenario_a().reference
        ctx = SwitchContext(t_switch=1.7)
        vals = [reference_value(1.7 + tau, FORCE, spec, ctx) for tau in np.linspace(0, 8, 81)]
        assert np.all(np.diff(vals) <= 0) and vals[-1] == 0.0

    def test_scenario_b_steps(self):
        spec = scenario_b().reference
        ctx = SwitchContext(t_switch=4.0)
        got = [reference_value(4.0 + tau, FORCE, spec, ctx) for tau in (0.5, 3.0, 5.0)]
        assert got == [3375.0, 4500.0, 3150.0]

    def test_return_ramp_is_continuous(self):
        spec = ReferenceSpec(position_return=ReturnRule("ramp", slope=0.03, target=0.0))
        ctx = SwitchContext(t_switch=6.0, x_switch=0.052, returned=True)
        assert reference_value(6.0, POSITION, spec, ctx) == pytest.approx(0.052)
        assert reference_value(7.0, POSITION, spec, ctx) == pytest.approx(0.022)
        assert reference_value(9.0, POSITION, spec, ctx) == 0.0

    def test_return_offset_is_continuous(self):
        spec = ReferenceSpec(position=(PositionSegment("sine", amplitude=0.02, frequency=0.1),),
                             position_return=ReturnRule("offset"))
        ctx = SwitchContext(t_switch=3.0, x_switch=0.01, returned=True)
        assert reference_value(3.0, POSITION, spec, ctx) == pytest.approx(0.01)

    def test_segment_validation(self):
        with pytest.raises(ValidationError):
            ForceSegment("square")
        with pytest.raises(ValidationError):
            PositionSegment("ramp", duration=0.0)


class TestControllerStep:
    def test_equilibrium(self):
        spec = ReferenceSpec(position=(PositionSegment("hold"),))
        u, ctrl, out = controller_step(PlantState(), 0.0, 1e-5, GAINS, ControllerConfig(),
                                       ControllerState(), spec, HYST)
        assert u == 0.0 and ctrl.e == 0.0 and out.u_raw == 0.0

    def test_step_reference_bounded(self):
        spec = ReferenceSpec(position=(PositionSegment("hold"),), position_start=0.5)
        cfg = ControllerConfig(f_c=0.0)
        u, _, out = controller_step(PlantState(), 0.0, 1e-5, GAINS, cfg, ControllerState(), spec, HYST)
        assert out.u_raw == pytest.approx(95.0) and u == 1.0

    def test_switch_tick_resets_integral(self):
        ctrl = ControllerState(e=0.7)
        _, ctrl2, out = controller_step(PlantState(x=0.05, F_L=3400.0), 1.0, 1e-5, GAINS,
                                        ControllerConfig(), ctrl, ReferenceSpec(), HYST)
        assert out.switched and ctrl2.h == FORCE and ctrl2.switches == 1
        # the tick integrates r - y from the reset value
        assert ctrl2.e == pytest.approx((3500.0 - 3400.0) * 1e-5)

    def test_deterministic(self):
        args = (PlantState(x=0.01, v=0.02, P_L=1e5), 0.3, 1e-5, GAINS, ControllerConfig(),
                ControllerState(e=1e-4), ReferenceSpec(), HYST)
        assert controller_step(*args) == controller_step(*args)

    def test_step_size_guard(self):
        with pytest.raises(ValidationError):
            controller_step(PlantState(), 0.0, 2e-3, GAINS, ControllerConfig(), ControllerState(),
                            ReferenceSpec(), HYST)
