import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from hydrohybrid import numerics
from hydrohybrid.errors import (
    IntegrationError,
    NoCrossingError,
    SingularityError,
    UncontrollableError,
    ValidationError,
)


class TestIntegrateRK4:
    def test_zero_derivative_keeps_state(self):
        assert numerics.integrate_rk4(lambda y, t: np.zeros_like(y), [5.0], 0.0, 0.1)[0] == 5.0

    def test_decay_matches_exponential(self):
        y = numerics.integrate_rk4(lambda y, t: -y, [1.0], 0.0, 0.1)
        assert abs(y[0] - math.exp(-0.1)) < 1e-7

    def test_constant_derivative(self):
        y = numerics.integrate_rk4(lambda y, t: np.ones_like(y), [0.0], 0.0, 0.01)
        assert_allclose(y, [0.01], rtol=1e-15)

    def test_time_argument_reaches_stages(self):
        # y' = t integrates exactly under RK4 (Simpson weights)
        y = numerics.integrate_rk4(lambda y, t: np.array([t]), [0.0], 1.0, 0.5)
        assert_allclose(y, [0.5 * (1.5**2 - 1.0)], rtol=1e-14)

    def test_linear_system_against_matrix_exponential(self):
        import scipy.linalg

        A = np.array([[0.0, 1.0], [-4.0, -0.4]])
        y = np.array([1.0, 0.0])
        dt = 1e-3
        for k in range(1000):
            y = numerics.integrate_rk4(lambda s, t: A @ s, y, k * dt, dt)
        assert_allclose(y, scipy.linalg.expm(A) @ [1.0, 0.0], atol=1e-11)

    def test_nonfinite_derivative_names_component(self):
        def bad(y, t):
            return np.array([0.0, np.nan if t > 0 else 1.0])

        with pytest.raises(IntegrationError) as info:
            numerics.integrate_rk4(bad, [0.0, 0.0], 0.0, 0.1)
        assert info.value.index == 1
        assert info.value.t == pytest.approx(0.05)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValidationError):
            numerics.integrate_rk4(lambda y, t: y, [1.0], 0.0, 0.0)

    def test_error_ratio_on_halving(self):
        def err(dt):
            y = np.array([1.0])
            n = int(round(1.0 / dt))
            for k in range(n):
                y = numerics.integrate_rk4(lambda s, t: -s, y, k * dt, dt)
            return abs(y[0] - math.exp(-1.0))

        ratio = err(0.02) / err(0.01)
        assert 14.0 <= ratio <= 18.0


class TestEigenvalues:
    def test_nilpotent(self):
        assert_allclose(numerics.eigenvalues([[0, 1], [0, 0]]), [0, 0], atol=1e-12)

    def test_companion(self):
        lam = np.sort_complex(numerics.eigenvalues([[0, 1], [-2, -3]]))
        assert_allclose(lam, [-2, -1], rtol=1e-12)

    def test_diagonal(self):
        lam = np.sort(numerics.eigenvalues(np.diag([-1.0, -5.0, 3.0])).real)
        assert_allclose(lam, [-5, -1, 3])

    def test_dimension_cap(self):
        with pytest.raises(ValidationError):
            numerics.eigenvalues(np.eye(13))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 8))
    def test_residual_small(self, seed, n):
        A = np.random.default_rng(seed).normal(size=(n, n))
        for lam in numerics.eigenvalues(A):
            smin = np.linalg.svd(A - lam * np.eye(n), compute_uv=False)[-1]
            assert smin < 1e-6 * np.linalg.norm(A)

    def test_conjugate_pairs(self):
        lam = numerics.eigenvalues([[0.0, 1.0], [-1.0, 0.0]])
        assert_allclose(np.sort(lam.imag), [-1.0, 1.0])


class TestPlacePoles:
    def test_double_integrator_unit(self):
        assert_allclose(numerics.place_poles([[0, 1], [0, 0]], [0, 1], [-1, -1]), [1, 2], rtol=1e-12)

    def test_double_integrator_coefficients(self):
        assert_allclose(numerics.place_poles([[0, 1], [0, 0]], [0, 1], [-2, -3]), [6, 5], rtol=1e-12)

    def test_scalar(self):
        assert_allclose(numerics.place_poles([[1.0]], [1.0], [-1.0]), [2.0])

    def test_uncontrollable(self):
        with pytest.raises(UncontrollableError) as info:
            numerics.place_poles(np.diag([-1.0, -2.0]), [1.0, 0.0], [-3, -4])
        assert info.value.rank == 1

    def test_not_conjugate_closed(self):
        with pytest.raises(ValidationError):
            numerics.place_poles([[0, 1], [0, 0]], [0, 1], [-1 + 1j, -1 + 2j])

    def test_matches_scipy_on_random_system(self):
        import scipy.signal

        rng = np.random.default_rng(3)
        A = rng.normal(size=(4, 4))
        b = rng.normal(size=4)
        p = [-1.0, -2.0, -3.0 + 1j, -3.0 - 1j]
        k = numerics.place_poles(A, b, p)
        ref = scipy.signal.place_poles(A, b[:, None], p).gain_matrix[0]
        assert_allclose(k, ref, rtol=1e-8)

    def test_badly_scaled_hydraulic_like(self):
        # entries spanning ~15 decades, like the hydraulic closed loop
        A = np.array([[0, 1, 0, 0], [0, -596.2, 5.87e-4, 0], [0, -2.857e9, 0, 0], [-1.0, 0, 0, 0]])
        b = np.array([0.0, 0.0, 1.6e9, 0.0])
        p = np.array([-50.0, -60.0, -270 + 1250j, -270 - 1250j])
        k = numerics.place_poles(A, b, p)
        lam = np.sort_complex(np.linalg.eigvals(A - np.outer(b, k)))
        assert_allclose(lam, np.sort_complex(p), rtol=1e-6)


class TestFrequencyResponse:
    def test_dc(self):
        assert numerics.frequency_response([[-1.0]], [1.0], [1.0], 0.0) == pytest.approx(1.0)

    def test_corner(self):
        H = numerics.frequency_response([[-1.0]], [1.0], [1.0], 1.0)
        assert H == pytest.approx(0.5 - 0.5j)

    def test_rolloff(self):
        assert abs(numerics.frequency_response([[-1.0]], [1.0], [1.0], 1e8)) < 1e-7

    def test_conjugate_symmetry(self):
        A = np.array([[0.0, 1.0], [-4.0, -1.0]])
        Hp = numerics.frequency_response(A, [0, 1], [1, 0], 1.7)
        Hm = numerics.frequency_response(A, [0, 1], [1, 0], -1.7)
        assert Hm == pytest.approx(np.conj(Hp))

    def test_singular_on_axis_pole(self):
        with pytest.raises(SingularityError):
            numerics.frequency_response([[0.0, 1.0], [-1.0, 0.0]], [0, 1], [1, 0], 1.0)

    def test_second_order_analytic(self):
        wn, z = 10.0, 0.3
        A = np.array([[0, 1], [-wn**2, -2 * z * wn]])
        w = 7.0
        H = numerics.frequency_response(A, [0, wn**2], [1, 0], w)
        assert H == pytest.approx(wn**2 / (wn**2 - w**2 + 2j * z * wn * w))


class TestBandwidth:
    def test_first_order_one_hertz(self):
        bw = numerics.bandwidth_hz([[-2 * math.pi]], [2 * math.pi], [1.0])
        assert bw == pytest.approx(1.0, rel=1e-6)

    def test_second_order_analytic(self):
        # critically damped: |H| = 1/(1 + (w/wn)^2); -3 dB at w = wn sqrt(sqrt(2) - 1)
        wn = 2 * math.pi * 5.0
        A = np.array([[0, 1], [-wn**2, -2 * wn]])
        bw = numerics.bandwidth_hz(A, [0, wn**2], [1, 0])
        assert bw == pytest.approx(5.0 * math.sqrt(math.sqrt(2) - 1), rel=1e-5)

    def test_no_crossing(self):
        with pytest.raises(NoCrossingError):
            numerics.bandwidth_hz([[-2 * math.pi * 1e5]], [2 * math.pi * 1e5], [1.0])

    def test_requires_hurwitz(self):
        with pytest.raises(ValidationError):
            numerics.bandwidth_hz([[1.0]], [1.0], [1.0])
