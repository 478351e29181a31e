"""Reduced nonlinear hydraulic cylinder plant and its environments.

State is ``(x, v, P_L, F_L)``: rod position, velocity, load pressure and
external load force. The valve is static (unity gain), flow follows the
orifice law behind a dead-zone/saturation, and friction is either the
mode-wise affine fit or a Stribeck curve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from ._jit import njit
from .errors import PressureLimitError, ValidationError

log = logging.getLogger(__name__)

POSITION = -1
FORCE = 1


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the actuator.

    ``Cq_hat``, ``Cqp_hat``, ``k_g`` and ``d_g`` override the coefficients that
    :func:`linearize_at` otherwise derives at the operating point.
    ``leakage`` is a laminar cross-port leakage [m^3/(s Pa)] that the
    nonlinear plant carries; it is what makes the open-loop pressure pole
    stable when the valve is closed.
    """

    A_bar: float = 1e-3
    m: float = 1.7026
    E: float = 1e9
    V_t: float = 1.4e-3
    K: float = 0.252e-6
    P_S: float = 100e5
    stroke: float = 0.2
    delta: float = 0.05
    u_max: float = 1.0
    leakage: float = 1e-11
    pressure_clamp: float = 0.999
    Cq_hat: float | None = None
    Cqp_hat: float | None = None
    k_g: float | None = None
    d_g: float | None = None

    def __post_init__(self):
        for name in ("A_bar", "m", "E", "V_t", "K", "P_S", "stroke"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"must be finite and > 0, got {v}", f"plant.{name}")
        if not self.delta >= 0:
            raise ValidationError(f"must be >= 0, got {self.delta}", "plant.delta")
        if not self.u_max > self.delta:
            raise ValidationError(f"u_max ({self.u_max}) must exceed delta ({self.delta})", "plant.u_max")
        if not self.leakage >= 0:
            raise ValidationError("must be >= 0", "plant.leakage")
        if not 0 < self.pressure_clamp < 1:
            raise ValidationError("must lie in (0, 1)", "plant.pressure_clamp")

    @property
    def pressure_gain(self) -> float:
        """``4E/V_t`` [Pa/m^3]."""
        return 4.0 * self.E / self.V_t

    def as_array(self) -> np.ndarray:
        return np.array([self.A_bar, self.m, self.E, self.V_t, self.K, self.P_S,
                         self.delta, self.u_max, self.leakage, self.pressure_clamp])


@dataclass(frozen=True)
class FrictionModel:
    """Friction law. The affine variant carries one (k_w, d_w) pair per mode."""

    variant: Literal["affine", "stribeck"] = "affine"
    k_w_position: float = 1.0151e3
    d_w_position: float = 30.755
    k_w_force: float = 6.2499e3
    d_w_force: float = 0.0
    F_c: float = 25.0
    F_s: float = 40.0
    v_s: float = 0.01
    sigma: float = 900.0

    def __post_init__(self):
        if self.variant not in ("affine", "stribeck"):
            raise ValidationError(f"unknown variant {self.variant!r}", "friction.variant")
        if self.k_w_position < 0 or self.k_w_force < 0:
            raise ValidationError("k_w must be >= 0", "friction.k_w")
        if not self.F_s >= self.F_c >= 0:
            raise ValidationError("need F_s >= F_c >= 0", "friction.F_c")
        if not self.v_s > 0:
            raise ValidationError("must be > 0", "friction.v_s")
        if self.sigma < 0:
            raise ValidationError("must be >= 0", "friction.sigma")

    def coefficients(self, h: int) -> tuple[float, float]:
        h = check_mode(h)
        if h == POSITION:
            return self.k_w_position, self.d_w_position
        return self.k_w_force, self.d_w_force

    def as_array(self) -> np.ndarray:
        return np.array([0.0 if self.variant == "affine" else 1.0,
                         self.k_w_position, self.d_w_position, self.k_w_force, self.d_w_force,
                         self.F_c, self.F_s, self.v_s, self.sigma])


@dataclass(frozen=True)
class HardStop:
    """One-sided linear spring at ``x_c``; ``drag`` is an optional passive load
    opposing motion (tank-vented counter cylinder)."""

    x_c: float = 0.2
    c: float = 1.2e8
    drag: float = 0.0
    kind: Literal["hard_stop"] = field(default="hard_stop", init=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValidationError("must be > 0", "environment.c")
        if not self.x_c > 0:
            raise ValidationError("must be > 0", "environment.x_c")
        if self.drag < 0:
            raise ValidationError("must be >= 0", "environment.drag")


@dataclass(frozen=True)
class DynamicLoad:
    """Pressure-limited counter cylinder coupled through stiffness ``c``.

    The counter rod yields with viscous coefficient ``yield_damping`` whenever
    the interface force differs from the pulsed set force ``F_ext(t)``, so
    ``dF_L/dt = c (v - (F_L - F_ext)/yield_damping)``. ``F_ext`` toggles
    between ``low`` and ``high``; the high phase starts at ``t_high`` and lasts
    ``duty * period`` within each ``period``, with linear edges of
    ``rise_time``.
    """

    c: float = 1.2e8
    yield_damping: float = 2e4
    low: float = 500.0
    high: float = 3675.0
    period: float = 10.0
    duty: float = 0.6
    t_high: float = 4.0
    rise_time: float = 0.05
    kind: Literal["dynamic_load"] = field(default="dynamic_load", init=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValidationError("must be > 0", "environment.c")
        if not self.yield_damping > 0:
            raise ValidationError("must be > 0", "environment.yield_damping")
        if not self.period > 0:
            raise ValidationError("must be > 0", "environment.period")
        if not 0 < self.duty < 1:
            raise ValidationError("must lie in (0, 1)", "environment.duty")
        if not 0 <= self.rise_time < min(self.duty, 1 - self.duty) * self.period:
            raise ValidationError("edge time too long for the pulse", "environment.rise_time")


Environment = Union[HardStop, DynamicLoad]


def env_arrays(env: Environment) -> tuple[int, np.ndarray]:
    if isinstance(env, HardStop):
        return 0, np.array([env.x_c, env.c, env.drag, 1.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.0])
    return 1, np.array([0.0, env.c, 0.0, env.yield_damping, env.low, env.high,
                        env.period, env.duty, env.t_high, env.rise_time])


@dataclass(frozen=True)
class PlantState:
    x: float = 0.0
    v: float = 0.0
    P_L: float = 0.0
    F_L: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.v, self.P_L, self.F_L])


def check_mode(h) -> int:
    if h not in (-1, 1):
        raise ValidationError(f"mode must be -1 (position) or +1 (force), got {h!r}", "h")
    return int(h)


# --- scalar kernels (shared with the simulation loop) -----------------------

@njit(cache=True)
def _sign(v):
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


@njit(cache=True)
def _dead_zone(z, delta, u_max):
    a = abs(z)
    if a <= delta:
        return 0.0
    a = min(a, u_max)
    return _sign(z) * (a - delta)


@njit(cache=True)
def _orifice(z_eff, P_L, K, P_S):
    if z_eff == 0.0:
        return 0.0
    rad = 0.5 * (P_S - _sign(z_eff) * P_L)
    if rad <= 0.0:
        return 0.0
    return z_eff * K * math.sqrt(rad)


@njit(cache=True)
def _friction(v, h, fp):
    if fp[0] == 0.0:
        if h < 0:
            return fp[1] * v + fp[2] * _sign(v)
        return fp[3] * v + fp[4] * _sign(v)
    Fc, Fs, vs, sigma = fp[5], fp[6], fp[7], fp[8]
    return sigma * v + _sign(v) * (Fc + (Fs - Fc) * math.exp(-(v / vs) ** 2))


@njit(cache=True)
def _f_ext(t, ep):
    low, high, period, duty, t_high, rise = ep[4], ep[5], ep[6], ep[7], ep[8], ep[9]
    phase = (t - t_high) % period
    width = duty * period
    if rise > 0.0:
        if phase < rise:
            frac = phase / rise
        elif phase < width:
            frac = 1.0
        elif phase < width + rise:
            frac = 1.0 - (phase - width) / rise
        else:
            frac = 0.0
    else:
        frac = 1.0 if phase < width else 0.0
    if t < t_high:
        frac = 0.0
    return low + (high - low) * frac


@njit(cache=True)
def _load_force(x, v, F_state, env_kind, ep):
    if env_kind == 0:
        pen = x - ep[0]
        F = ep[1] * pen if pen > 0.0 else 0.0
        return F + ep[2] * _sign(v)
    return F_state


@njit(cache=True)
def _plant_rhs(x, v, P, F, u_valve, t, h, pp, fp, env_kind, ep):
    A, m, E, Vt, K, Ps = pp[0], pp[1], pp[2], pp[3], pp[4], pp[5]
    delta, u_max, leak, clamp = pp[6], pp[7], pp[8], pp[9]
    F_L = _load_force(x, v, F, env_kind, ep)
    dv = (A * P - _friction(v, h, fp) - F_L) / m
    lim = clamp * Ps
    Pc = min(max(P, -lim), lim)
    Q = _orifice(_dead_zone(u_valve, delta, u_max), Pc, K, Ps)
    dP = 4.0 * E / Vt * (Q - A * v - leak * P)
    if env_kind == 0:
        dF = ep[1] * v if x > ep[0] else 0.0
    else:
        dF = ep[1] * (v - (F - _f_ext(t, ep)) / ep[3])
    return v, dv, dP, dF


# --- public API -------------------------------------------------------------

def dead_zone(z: float, delta: float = 0.05, u_max: float = 1.0) -> float:
    """Valve dead band with saturation: zero inside ``(-delta, delta)``, unit
    slope outside, output clamped at ``+-(u_max - delta)``."""
    return float(_dead_zone(float(z), float(delta), float(u_max)))


def orifice_flow(z_eff: float, P_L: float, params: PlantParams) -> float:
    """Load flow ``z K sqrt(0.5 (P_S - sign(z) P_L))`` [m^3/s]."""
    if abs(P_L) >= params.P_S:
        raise PressureLimitError(f"|P_L| = {abs(P_L):.6g} Pa reaches supply pressure {params.P_S:.6g} Pa")
    return float(_orifice(float(z_eff), float(P_L), params.K, params.P_S))


def friction_force(v: float, model: FrictionModel, h: int) -> float:
    h = check_mode(h)
    return float(_friction(float(v), h, model.as_array()))


def external_force(t: float, env: DynamicLoad) -> float:
    """Set force of the pulsed counter cylinder at time ``t``."""
    _, ep = env_arrays(env)
    return float(_f_ext(float(t), ep))


def load_force(s: PlantState, env: Environment) -> float:
    kind, ep = env_arrays(env)
    return float(_load_force(s.x, s.v, s.F_L, kind, ep))


def plant_derivative(
    s: PlantState,
    u_valve: float,
    env: Environment,
    params: PlantParams,
    fric: FrictionModel,
    h: int,
    t: float = 0.0,
) -> np.ndarray:
    """Time derivative of ``(x, v, P_L, F_L)``.

    For the hard stop, ``F_L`` is algebraic in ``x``; the returned fourth
    component is the matching rate ``c v`` in contact so an integrator can
    carry it, and callers overwrite the stored value with :func:`load_force`
    after each step.
    """
    h = check_mode(h)
    if abs(s.P_L) >= params.P_S:
        raise PressureLimitError(f"|P_L| = {abs(s.P_L):.6g} Pa reaches supply pressure")
    kind, ep = env_arrays(env)
    d = _plant_rhs(s.x, s.v, s.P_L, s.F_L, float(u_valve), float(t), h,
                   params.as_array(), fric.as_array(), kind, ep)
    return np.array(d, dtype=float)


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    b: np.ndarray
    f: np.ndarray
    c: np.ndarray
    coefficients: dict


def linearize_at(
    s0: PlantState,
    u0: float,
    params: PlantParams,
    fric: FrictionModel,
    h: int,
    compensated: bool = True,
    steady_tol: float = 1e-3,
) -> LinearModel:
    """Piecewise-affine model ``dx = A x + b u + f`` around ``(s0, u0)``.

    The load force is treated as exogenous (zero row). With
    ``compensated=True`` the input is the control value ahead of the
    dead-zone compensator, so the dead-zone/saturation combination is the
    identity (``k_g = 1``, ``d_g = 0``); otherwise ``u0`` is the raw valve
    input and its local slope/offset are used. Orifice coefficients come from
    the local orifice slope minus leakage unless overridden in ``params``.
    The constant ``-Cqp * P_0`` of the orifice expansion is not part of ``f``.
    """
    h = check_mode(h)
    if abs(s0.P_L) >= params.P_S:
        raise PressureLimitError("operating point exceeds supply pressure")
    A_bar, m, g = params.A_bar, params.m, params.pressure_gain

    if compensated:
        k_g, d_g = 1.0, 0.0
        z0 = u0
    else:
        a = abs(u0)
        if a <= params.delta:
            k_g, d_g = 0.0, 0.0
        elif a >= params.u_max:
            k_g, d_g = 0.0, math.copysign(params.u_max - params.delta, u0)
        else:
            k_g, d_g = 1.0, -math.copysign(params.delta, u0)
        z0 = k_g * u0 + d_g
    if params.k_g is not None:
        k_g = params.k_g
    if params.d_g is not None:
        d_g = params.d_g

    sz = 1.0 if z0 >= 0 else -1.0
    omega = math.sqrt(max(0.5 * (params.P_S - sz * s0.P_L), 0.0))
    Cq = params.K * omega if params.Cq_hat is None else params.Cq_hat
    if params.Cqp_hat is None:
        d_orifice = -z0 * params.K * sz / (4.0 * omega) if omega > 0 else 0.0
        Cqp = d_orifice - params.leakage
    else:
        Cqp = params.Cqp_hat

    if fric.variant == "affine":
        k_w, d_w = fric.coefficients(h)
        d_w = d_w * (1.0 if s0.v > 0 else -1.0 if s0.v < 0 else 0.0)
    else:
        eps = max(1e-9, 1e-6 * abs(s0.v))
        k_w = (friction_force(s0.v + eps, fric, h) - friction_force(s0.v - eps, fric, h)) / (2 * eps)
        d_w = friction_force(s0.v, fric, h) - k_w * s0.v

    A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -k_w / m, A_bar / m, -1.0 / m],
        [0.0, -g * A_bar, g * Cqp, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    b = np.array([0.0, 0.0, g * Cq * k_g, 0.0])
    f = np.array([0.0, -d_w / m, g * Cq * d_g, 0.0])
    c = np.array([1.0, 0.0, 0.0, 0.0])

    # steadiness of the velocity and pressure rows
    u_valve = u0
    if compensated and u0 != 0.0:
        u_valve = u0 + math.copysign(params.delta, u0)
    fp = fric.as_array()
    dv = (A_bar * s0.P_L - _friction(s0.v, h, fp) - s0.F_L) / m
    z_eff = _dead_zone(u_valve, params.delta, params.u_max)
    dP = g * (_orifice(z_eff, s0.P_L, params.K, params.P_S) - A_bar * s0.v - params.leakage * s0.P_L)
    resid = max(abs(dv) * m / max(1.0, abs(A_bar * s0.P_L)),
                abs(dP) / max(1.0, abs(g * A_bar * s0.v), abs(g * params.leakage * s0.P_L)))
    if resid > steady_tol:
        log.warning("linearize_at: operating point is not steady (relative residual %.3g)", resid)

    coefficients = {"k_w": k_w, "d_w": d_w, "Cq_hat": Cq, "Cqp_hat": Cqp,
                    "k_g": k_g, "d_g": d_g, "Omega": omega}
    return LinearModel(A=A, b=b, f=f, c=c, coefficients=coefficients)
