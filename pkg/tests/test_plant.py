import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from hydrohybrid.errors import PressureLimitError, ValidationError
from hydrohybrid.plant import (
    FORCE,
    POSITION,
    DynamicLoad,
    FrictionModel,
    HardStop,
    PlantParams,
    PlantState,
    dead_zone,
    external_force,
    friction_force,
    linearize_at,
    load_force,
    orifice_flow,
    plant_derivative,
)

P = PlantParams()
AFFINE = FrictionModel()
FREE = HardStop(x_c=0.2)


class TestParams:
    def test_pressure_gain(self):
        assert P.pressure_gain == pytest.approx(2.857142857e12)

    @pytest.mark.parametrize("kw", [{"m": 0.0}, {"A_bar": -1.0}, {"delta": -0.1}, {"u_max": 0.05}])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            PlantParams(**kw)

    def test_friction_invariants(self):
        with pytest.raises(ValidationError):
            FrictionModel(F_c=50.0, F_s=40.0)
        with pytest.raises(ValidationError):
            FrictionModel(v_s=0.0)

    def test_environment_invariants(self):
        with pytest.raises(ValidationError):
            HardStop(c=0.0)
        with pytest.raises(ValidationError):
            DynamicLoad(duty=1.5)


class TestDeadZone:
    def test_inside_band(self):
        assert dead_zone(0.0, 0.05) == 0.0
        assert dead_zone(0.05, 0.05) == 0.0

    def test_unit_slope(self):
        assert dead_zone(0.30, 0.05) == pytest.approx(0.25)

    def test_saturation(self):
        assert dead_zone(5.0, 0.05, 1.0) == pytest.approx(0.95)

    @given(st.floats(-10, 10))
    def test_odd(self, z):
        assert dead_zone(-z) == -dead_zone(z)


class TestOrifice:
    def test_closed(self):
        assert orifice_flow(0.0, 3e6, P) == 0.0

    def test_zero_load(self):
        assert orifice_flow(1.0, 0.0, P) == pytest.approx(0.252e-6 * math.sqrt(0.5e7), rel=1e-12)
        assert orifice_flow(1.0, 0.0, P) == pytest.approx(5.635e-4, rel=1e-3)

    def test_operating_point_consistent_with_omega(self):
        omega = 2.23e3
        P_L = P.P_S - 2 * omega**2
        assert orifice_flow(1.0, P_L, P) == pytest.approx(P.K * omega, rel=1e-12)
        assert P.K * omega == pytest.approx(5.6196e-4, rel=1e-4)

    def test_pressure_limit(self):
        with pytest.raises(PressureLimitError):
            orifice_flow(0.5, P.P_S, P)

    @given(st.floats(-0.95, 0.95), st.floats(-0.95, 0.95), st.floats(-9e6, 9e6))
    def test_monotone_in_opening(self, z1, z2, P_L):
        lo, hi = sorted((z1, z2))
        assert orifice_flow(lo, P_L, P) <= orifice_flow(hi, P_L, P)

    @given(st.floats(0.01, 0.95), st.floats(-9e6, 9e6), st.floats(-9e6, 9e6))
    def test_monotone_in_pressure(self, z, p1, p2):
        lo, hi = sorted((p1, p2))
        assert orifice_flow(z, hi, P) <= orifice_flow(z, lo, P)


class TestFriction:
    def test_zero_velocity(self):
        assert friction_force(0.0, AFFINE, POSITION) == 0.0

    def test_position_mode_affine(self):
        assert friction_force(0.03, AFFINE, POSITION) == pytest.approx(1015.1 * 0.03 + 30.755)
        assert friction_force(0.03, AFFINE, POSITION) == pytest.approx(61.21, abs=0.01)

    def test_force_mode_coefficients(self):
        assert friction_force(0.01, AFFINE, FORCE) == pytest.approx(62.499)

    def test_stribeck_asymptote(self):
        st_ = FrictionModel(variant="stribeck")
        v = 1.0
        assert friction_force(v, st_, POSITION) == pytest.approx(st_.sigma * v + st_.F_c, rel=1e-12)

    def test_stribeck_defaults_fit_affine_within_20_percent(self):
        s0 = PlantState(v=0.03)
        lm = linearize_at(s0, 0.0, P, FrictionModel(variant="stribeck"), POSITION, steady_tol=math.inf)
        assert lm.coefficients["k_w"] == pytest.approx(1015.1, rel=0.2)
        assert lm.coefficients["d_w"] == pytest.approx(30.755, rel=0.2)


class TestEnvironment:
    def test_contact_law(self):
        s = PlantState(x=0.05 + 1e-5)
        assert load_force(s, HardStop(x_c=0.05)) == pytest.approx(1200.0)

    def test_no_contact(self):
        assert load_force(PlantState(x=0.049), HardStop(x_c=0.05)) == 0.0

    def test_drag_opposes_motion(self):
        assert load_force(PlantState(x=0.0, v=0.1), HardStop(x_c=0.05, drag=10.0)) == 10.0

    def test_pulse_profile(self):
        env = DynamicLoad(low=500, high=3675, period=10, duty=0.6, t_high=4.0, rise_time=0.05)
        assert external_force(0.0, env) == 500
        assert external_force(3.99, env) == 500
        assert external_force(4.025, env) == pytest.approx(500 + 0.5 * 3175)
        assert external_force(7.0, env) == 3675
        assert external_force(9.99, env) == pytest.approx(3675)
        assert external_force(10.1, env) == 500
        assert external_force(14.5, env) == 3675


class TestDerivative:
    def test_equilibrium(self):
        d = plant_derivative(PlantState(), 0.0, FREE, P, AFFINE, POSITION)
        assert_allclose(d, 0.0)

    def test_force_balance(self):
        v = 0.03
        F = 100.0
        P_L = (friction_force(v, AFFINE, POSITION) + F) / P.A_bar
        env = DynamicLoad()
        d = plant_derivative(PlantState(v=v, P_L=P_L, F_L=F), 0.0, env, P, AFFINE, POSITION)
        assert d[1] == pytest.approx(0.0, abs=1e-9)

    def test_pressure_row_by_hand(self):
        s = PlantState(v=0.01, P_L=1e6)
        u = 0.3
        d = plant_derivative(s, u, FREE, P, AFFINE, POSITION)
        q = 0.25 * P.K * math.sqrt(0.5 * (P.P_S - 1e6))
        expect = 4 * P.E / P.V_t * (q - P.A_bar * 0.01 - P.leakage * 1e6)
        assert d[2] == pytest.approx(expect, rel=1e-12)

    def test_contact_force_rate(self):
        s = PlantState(x=0.05 + 1e-5, v=0.02, F_L=1200.0)
        d = plant_derivative(s, 0.0, HardStop(x_c=0.05), P, AFFINE, FORCE)
        assert d[3] == pytest.approx(1.2e8 * 0.02)

    def test_pressure_limit(self):
        with pytest.raises(PressureLimitError):
            plant_derivative(PlantState(P_L=2e7), 0.0, FREE, P, AFFINE, POSITION)

    def test_energy_nonincreasing_with_valve_closed(self):
        from hydrohybrid.numerics import integrate_rk4

        def f(y, t):
            return plant_derivative(PlantState(*y), 0.0, FREE, P, AFFINE, POSITION)

        def energy(y):
            return 0.5 * P.m * y[1] ** 2 + P.V_t * y[2] ** 2 / (8 * P.E)

        y = np.array([0.0, 0.05, 2e5, 0.0])
        e0 = energy(y)
        for k in range(2000):
            y = integrate_rk4(f, y, k * 1e-5, 1e-5)
            e1 = energy(y)
            assert e1 <= e0 * (1 + 1e-12)
            e0 = e1


class TestLinearize:
    def test_matrix_entries(self):
        lm = linearize_at(PlantState(), 0.0, P, AFFINE, POSITION, steady_tol=math.inf)
        assert lm.A[1, 1] == pytest.approx(-596.2, rel=1e-4)
        assert lm.A[1, 2] == pytest.approx(5.8734e-4, rel=1e-4)
        assert lm.A[2, 1] == pytest.approx(-P.pressure_gain * P.A_bar)
        assert_allclose(lm.c, [1, 0, 0, 0])

    def test_affine_offset(self):
        lm = linearize_at(PlantState(v=0.03), 0.0, P, AFFINE, POSITION, steady_tol=math.inf)
        assert lm.f[1] == pytest.approx(-18.064, rel=1e-4)

    def test_overrides(self):
        p = PlantParams(Cq_hat=1e-4, Cqp_hat=-2e-11, k_g=0.8, d_g=0.01)
        lm = linearize_at(PlantState(), 0.1, p, AFFINE, POSITION, steady_tol=math.inf)
        g = p.pressure_gain
        assert lm.b[2] == pytest.approx(g * 1e-4 * 0.8)
        assert lm.f[2] == pytest.approx(g * 1e-4 * 0.01)
        assert lm.A[2, 2] == pytest.approx(g * -2e-11)

    def test_warns_away_from_steady_state(self, caplog):
        linearize_at(PlantState(v=0.5), 0.0, P, AFFINE, POSITION)
        assert "not steady" in caplog.text

    @pytest.mark.parametrize("u0", [0.2, -0.3])
    def test_jacobian_matches_finite_differences(self, u0):
        # uncompensated input so b/f refer to the raw valve signal
        s0 = PlantState(x=0.01, v=0.02, P_L=1.5e6, F_L=0.0)
        lm = linearize_at(s0, u0, P, AFFINE, POSITION, compensated=False, steady_tol=math.inf)
        x0 = s0.as_array()
        J = np.zeros((4, 4))
        for j in range(3):
            eps = 1e-6 * max(1.0, abs(x0[j]))
            xp, xm = x0.copy(), x0.copy()
            xp[j] += eps
            xm[j] -= eps
            fp = plant_derivative(PlantState(*xp), u0, FREE, P, AFFINE, POSITION)
            fm = plant_derivative(PlantState(*xm), u0, FREE, P, AFFINE, POSITION)
            J[:, j] = (fp - fm) / (2 * eps)
        assert_allclose(J[:3, :3], lm.A[:3, :3], rtol=1e-3, atol=1e-6)
        du = 1e-6
        fu = (plant_derivative(s0, u0 + du, FREE, P, AFFINE, POSITION)
              - plant_derivative(s0, u0 - du, FREE, P, AFFINE, POSITION)) / (2 * du)
        assert fu[2] == pytest.approx(lm.b[2], rel=1e-3)
