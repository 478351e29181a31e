"""Hybrid position/force controller.

One tick runs hysteresis switching, reference generation, the state-feedback
law with integral action, dead-zone pre-compensation, a critically damped
second-order low-pass and the output clamp. The scalar cores are JIT
compiled and shared with the simulation loop; the Python functions below
are thin value-in/value-out wrappers around them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from ._jit import njit
from .errors import ValidationError
from .linear_system import NOMINAL_GAINS_FORCE, NOMINAL_GAINS_POSITION, GainVector
from .plant import FORCE, POSITION, PlantState, _sign, check_mode

NEVER = -1e300

# controller-state array layout
CS_E, CS_Y, CS_YD, CS_H, CS_LAST, CS_TSW, CS_XSW, CS_NSW, CS_OFF, CS_NRET = range(10)
CS_SIZE = 10

# controller-parameter array layout
CP_DELTA, CP_UMAX, CP_FC, CP_EMAX, CP_THI, CP_TLO, CP_DWELL, CP_AW, CP_X0 = range(9)
CP_SIZE = 9

_POS_KINDS = {"ramp": 0, "hold": 1, "sine": 2}
_FORCE_KINDS = {"const": 0, "cosine": 1}
_RETURN_KINDS = {"ramp": 0, "offset": 1, "resume": 2}


# --- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class HysteresisConfig:
    T_hi: float = 3300.0
    T_lo: float = 500.0
    min_dwell: float = 0.05

    def __post_init__(self):
        if not (math.isfinite(self.T_hi) and math.isfinite(self.T_lo)):
            raise ValidationError("thresholds must be finite", "hysteresis.T_hi")
        if not self.T_hi > self.T_lo >= 0:
            raise ValidationError(f"need T_hi > T_lo >= 0, got {self.T_hi}, {self.T_lo}", "hysteresis.T_lo")
        if not self.min_dwell >= 0:
            raise ValidationError("must be >= 0", "hysteresis.min_dwell")


@dataclass(frozen=True)
class ControllerConfig:
    """Runtime options.

    ``delta`` is the dead band the compensator assumes; ``None`` means "same
    as the plant". ``f_c = 0`` bypasses the low-pass. ``e_max`` bounds the
    integral state (``inf`` disables the bound); ``anti_windup`` freezes the
    integrator while the filtered output saturates and the error pushes
    further. ``control_decimation`` runs the controller every n-th step.
    """

    f_c: float = 50.0
    delta: float | None = None
    u_max: float | None = None
    e_max: float = math.inf
    anti_windup: bool = True
    control_decimation: int = 1

    def __post_init__(self):
        if not self.f_c >= 0:
            raise ValidationError("must be >= 0", "controller.f_c")
        if self.delta is not None and not self.delta >= 0:
            raise ValidationError("must be >= 0", "controller.delta")
        if self.u_max is not None and not self.u_max > 0:
            raise ValidationError("must be > 0", "controller.u_max")
        if not self.e_max > 0:
            raise ValidationError("must be > 0", "controller.e_max")
        if not (isinstance(self.control_decimation, int) and self.control_decimation >= 1):
            raise ValidationError("must be an integer >= 1", "controller.control_decimation")

    def check_step(self, dt: float) -> None:
        dt_c = dt * self.control_decimation
        if self.f_c > 0 and not dt_c * 2 * math.pi * self.f_c < 0.5:
            raise ValidationError(
                f"control step {dt_c:g} s too large for f_c = {self.f_c:g} Hz "
                f"(need dt*2*pi*f_c < 0.5)", "scenario.dt")


@dataclass(frozen=True)
class PositionSegment:
    """``ramp`` adds ``slope * tau``, ``hold`` keeps the value, ``sine`` adds
    ``amplitude * sin(2 pi frequency tau)``. The last segment never ends."""

    kind: Literal["ramp", "hold", "sine"] = "ramp"
    duration: float = math.inf
    slope: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in _POS_KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}", "reference.position.kind")
        if not self.duration > 0:
            raise ValidationError("must be > 0", "reference.position.duration")


@dataclass(frozen=True)
class ForceSegment:
    """``const`` holds ``value``; ``cosine`` moves from the previous value to
    ``value`` along a half cosine over ``duration``."""

    kind: Literal["const", "cosine"] = "const"
    duration: float = math.inf
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in _FORCE_KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}", "reference.force.kind")
        if not self.duration > 0:
            raise ValidationError("must be > 0", "reference.force.duration")


@dataclass(frozen=True)
class ReturnRule:
    """Position reference after a force phase.

    ``ramp``: move from the switch-back position toward ``target`` at
    ``|slope|``, then hold. ``offset``: the stored profile shifted so that it
    starts at the switch-back position. ``resume``: the stored profile as is.
    """

    kind: Literal["ramp", "offset", "resume"] = "ramp"
    slope: float = 0.03
    target: float = 0.0

    def __post_init__(self):
        if self.kind not in _RETURN_KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}", "reference.return.kind")


@dataclass(frozen=True)
class ReferenceSpec:
    position: tuple[PositionSegment, ...] = (PositionSegment("ramp", math.inf, slope=0.03),)
    force: tuple[ForceSegment, ...] = (ForceSegment("const", math.inf, 3500.0),)
    position_return: ReturnRule = field(default_factory=ReturnRule)
    position_start: float = 0.0

    def __post_init__(self):
        if not self.position or not self.force:
            raise ValidationError("need at least one segment per mode", "reference")
        object.__setattr__(self, "position", tuple(self.position))
        object.__setattr__(self, "force", tuple(self.force))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = np.array([[_POS_KINDS[s.kind], s.duration,
                         s.slope if s.kind == "ramp" else s.amplitude, s.frequency]
                        for s in self.position], dtype=float)
        frc = np.array([[_FORCE_KINDS[s.kind], s.duration, s.value] for s in self.force], dtype=float)
        r = self.position_return
        ret = np.array([_RETURN_KINDS[r.kind], abs(r.slope), r.target], dtype=float)
        return pos, frc, ret


@dataclass(frozen=True)
class ControllerState:
    """Value threaded through controller ticks.

    ``t_switch``/``x_switch`` describe the latest mode entry and feed the
    reference re-seeding; ``returns`` counts entries into position mode.
    """

    e: float = 0.0
    lpf_state: tuple[float, float] = (0.0, 0.0)
    h: int = POSITION
    last_switch_time: float = NEVER
    t_switch: float = 0.0
    x_switch: float = 0.0
    switches: int = 0
    offset: float = 0.0
    returns: int = 0

    def __post_init__(self):
        check_mode(self.h)
        if not math.isfinite(self.e):
            raise ValidationError("integral state must be finite", "ctrl.e")

    def as_array(self) -> np.ndarray:
        cs = np.zeros(CS_SIZE)
        cs[CS_E] = self.e
        cs[CS_Y], cs[CS_YD] = self.lpf_state
        cs[CS_H] = self.h
        cs[CS_LAST] = self.last_switch_time
        cs[CS_TSW] = self.t_switch
        cs[CS_XSW] = self.x_switch
        cs[CS_NSW] = self.switches
        cs[CS_OFF] = self.offset
        cs[CS_NRET] = self.returns
        return cs

    @classmethod
    def from_array(cls, cs) -> "ControllerState":
        return cls(e=float(cs[CS_E]), lpf_state=(float(cs[CS_Y]), float(cs[CS_YD])),
                   h=int(cs[CS_H]), last_switch_time=float(cs[CS_LAST]),
                   t_switch=float(cs[CS_TSW]), x_switch=float(cs[CS_XSW]),
                   switches=int(cs[CS_NSW]), offset=float(cs[CS_OFF]), returns=int(cs[CS_NRET]))


DEFAULT_GAINS = {POSITION: NOMINAL_GAINS_POSITION, FORCE: NOMINAL_GAINS_FORCE}


def gain_matrix(gains: dict) -> np.ndarray:
    """Rows ``[K1, K2, K3, K4, Ki]`` for position (row 0) and force (row 1)."""
    G = np.zeros((2, 5))
    for row, h in ((0, POSITION), (1, FORCE)):
        g = gains[h].check_mode(h)
        G[row] = g.as_array()
    return G


def param_array(cfg: ControllerConfig, hyst: HysteresisConfig, delta: float, u_max: float,
                position_start: float = 0.0) -> np.ndarray:
    cp = np.zeros(CP_SIZE)
    cp[CP_DELTA] = delta if cfg.delta is None else cfg.delta
    cp[CP_UMAX] = u_max if cfg.u_max is None else cfg.u_max
    cp[CP_FC] = cfg.f_c
    cp[CP_EMAX] = cfg.e_max
    cp[CP_THI] = hyst.T_hi
    cp[CP_TLO] = hyst.T_lo
    cp[CP_DWELL] = hyst.min_dwell
    cp[CP_AW] = 1.0 if cfg.anti_windup else 0.0
    cp[CP_X0] = position_start
    return cp


# --- scalar cores ---------------------------------------------------------------

@njit(cache=True)
def _control_law(r, x, v, P, F, e, K1, K2, K3, K4, Ki, h):
    ff = K1 if h < 0 else K4
    return ff * r - (K1 * x + K2 * v + K3 * P + K4 * F) + Ki * e


@njit(cache=True)
def _dz_comp(u, delta, u_max):
    if u > 0.0:
        w = u + delta
    elif u < 0.0:
        w = u - delta
    else:
        return 0.0
    return min(max(w, -u_max), u_max)


@njit(cache=True)
def _lpf_rk4(y, yd, u, dt, wc):
    # y'' = wc^2 (u - y) - 2 wc y', input held over the step
    w2 = wc * wc
    k1y, k1d = yd, w2 * (u - y) - 2.0 * wc * yd
    y2, d2 = y + 0.5 * dt * k1y, yd + 0.5 * dt * k1d
    k2y, k2d = d2, w2 * (u - y2) - 2.0 * wc * d2
    y3, d3 = y + 0.5 * dt * k2y, yd + 0.5 * dt * k2d
    k3y, k3d = d3, w2 * (u - y3) - 2.0 * wc * d3
    y4, d4 = y + dt * k3y, yd + dt * k3d
    k4y, k4d = d4, w2 * (u - y4) - 2.0 * wc * d4
    y_new = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    yd_new = yd + dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
    return y_new, yd_new


@njit(cache=True)
def _integrate_error(e, err, dt, saturated_sign, Ki, e_max, anti_windup):
    if anti_windup and saturated_sign != 0.0 and _sign(Ki * err) == saturated_sign:
        return e
    e = e + err * dt
    if e > e_max:
        e = e_max
    elif e < -e_max:
        e = -e_max
    return e


@njit(cache=True)
def _pos_profile(tau, seg):
    r = 0.0
    n = seg.shape[0]
    for i in range(n):
        kind, d, a, f = seg[i, 0], seg[i, 1], seg[i, 2], seg[i, 3]
        s = tau if (tau <= d or i == n - 1) else d
        if kind == 0.0:
            val = a * s
        elif kind == 1.0:
            val = 0.0
        else:
            val = a * math.sin(2.0 * math.pi * f * s)
        if s == tau:
            return r + val
        r += val
        tau -= d
    return r


@njit(cache=True)
def _force_profile(tau, seg):
    n = seg.shape[0]
    prev = seg[0, 2]
    for i in range(n):
        kind, d, val = seg[i, 0], seg[i, 1], seg[i, 2]
        if tau <= d or i == n - 1:
            if kind == 0.0:
                return val
            frac = min(max(tau / d, 0.0), 1.0)
            return prev + (val - prev) * 0.5 * (1.0 - math.cos(math.pi * frac))
        prev = val
        tau -= d
    return prev


@njit(cache=True)
def _reference(t, h, cs, cp, pos_seg, ret, force_seg):
    if h > 0:
        return _force_profile(t - cs[CS_TSW], force_seg)
    base = cp[CP_X0] + _pos_profile(t, pos_seg)
    if cs[CS_NRET] == 0.0 or ret[0] == 2.0:
        return base
    if ret[0] == 1.0:
        return base + cs[CS_OFF]
    d = ret[2] - cs[CS_XSW]
    step = ret[1] * (t - cs[CS_TSW])
    if step >= abs(d):
        return ret[2]
    return cs[CS_XSW] + _sign(d) * step


@njit(cache=True)
def _hysteresis(h, F, t, T_hi, T_lo, dwell, last):
    if t - last < dwell:
        return h
    if h < 0 and F >= T_hi:
        return 1
    if h > 0 and F <= T_lo:
        return -1
    return h


@njit(cache=True)
def _controller_core(x, v, P, F, t, dt, cs, cp, G, pos_seg, ret, force_seg):
    """One tick; mutates ``cs``. Returns (u_raw, u_valve, r, y, e_used, switched)."""
    h_old = int(cs[CS_H])
    h = _hysteresis(h_old, F, t, cp[CP_THI], cp[CP_TLO], cp[CP_DWELL], cs[CS_LAST])
    switched = h != h_old
    if switched:
        cs[CS_E] = 0.0
        cs[CS_H] = h
        cs[CS_LAST] = t
        cs[CS_TSW] = t
        cs[CS_XSW] = x
        cs[CS_NSW] += 1.0
        if h < 0:
            cs[CS_NRET] += 1.0
            cs[CS_OFF] = x - (cp[CP_X0] + _pos_profile(t, pos_seg))

    r = _reference(t, h, cs, cp, pos_seg, ret, force_seg)
    row = 0 if h < 0 else 1
    K1, K2, K3, K4, Ki = G[row, 0], G[row, 1], G[row, 2], G[row, 3], G[row, 4]
    e = cs[CS_E]
    u_raw = _control_law(r, x, v, P, F, e, K1, K2, K3, K4, Ki, h)

    u_max = cp[CP_UMAX]
    u_c = _dz_comp(u_raw, cp[CP_DELTA], u_max)
    if cp[CP_FC] > 0.0:
        yf, ydf = _lpf_rk4(cs[CS_Y], cs[CS_YD], u_c, dt, 2.0 * math.pi * cp[CP_FC])
        cs[CS_Y] = yf
        cs[CS_YD] = ydf
        u_f = yf
    else:
        u_f = u_c
    u_valve = min(max(u_f, -u_max), u_max)

    y = x if h < 0 else F
    sat = 0.0
    if u_f >= u_max:
        sat = 1.0
    elif u_f <= -u_max:
        sat = -1.0
    cs[CS_E] = _integrate_error(e, r - y, dt, sat, Ki, cp[CP_EMAX], cp[CP_AW] != 0.0)
    return u_raw, u_valve, r, y, e, switched


# --- public API -------------------------------------------------------------------

def control_law(r: float, x_e: Sequence[float], gains: GainVector, h: int) -> float:
    """``FF r - (K1 x + K2 v + K3 P_L + K4 F_L) + Ki e`` for ``x_e = (x, v, P_L, F_L, e)``."""
    h = check_mode(h)
    gains.check_mode(h)
    x, v, P, F, e = (float(c) for c in x_e)
    return float(_control_law(float(r), x, v, P, F, e,
                              gains.K1, gains.K2, gains.K3, gains.K4, gains.Ki, h))


def integrator_step(e: float, r: float, y: float, dt: float, *, saturated: int = 0,
                    Ki: float = 1.0, e_max: float = math.inf) -> float:
    """Rectangle-rule update ``e + (r - y) dt``.

    ``saturated`` is the sign of a clamped controller output (0 when not
    clamped); the update is skipped when the error would drive the output
    further into that limit.
    """
    if not dt > 0:
        raise ValidationError("must be > 0", "dt")
    return float(_integrate_error(float(e), float(r) - float(y), float(dt), float(np.sign(saturated)),
                                  float(Ki), float(e_max), True))


def dz_compensator(u: float, delta: float = 0.05, u_max: float = 1.0) -> float:
    """``u + delta sign(u)``, clamped to ``[-u_max, u_max]``.

    Followed by the valve dead zone this is the identity for
    ``|u| <= u_max - delta`` in exact arithmetic. In floating point the add
    and subtract round, so the round trip is exact only where no bits are
    lost (for example when ``u`` and ``delta`` share a binary exponent
    range); elsewhere it is off by at most one unit in the last place.
    """
    return float(_dz_comp(float(u), float(delta), float(u_max)))


def lpf_step(state: Sequence[float], u_in: float, dt: float, f_c: float) -> tuple[tuple[float, float], float]:
    """Advance ``wc^2 / (s + wc)^2`` by one RK4 step; returns ``(state, output)``."""
    if not f_c > 0:
        raise ValidationError("must be > 0", "f_c")
    if not dt > 0:
        raise ValidationError("must be > 0", "dt")
    if not dt * 2 * math.pi * f_c < 0.5:
        raise ValidationError("need dt*2*pi*f_c < 0.5", "dt")
    y, yd = _lpf_rk4(float(state[0]), float(state[1]), float(u_in), float(dt), 2 * math.pi * f_c)
    return (float(y), float(yd)), float(y)


def lpf_state_space(f_c: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    wc = 2 * math.pi * f_c
    return np.array([[0.0, 1.0], [-wc * wc, -2.0 * wc]]), np.array([0.0, wc * wc]), np.array([1.0, 0.0])


def hysteresis_update(h: int, F_L: float, t: float, cfg: HysteresisConfig,
                      ctrl: ControllerState) -> tuple[int, ControllerState]:
    """Relay with dwell guard. Returns the new mode and the state after it;
    a switch zeroes the integral state and records the switch instant."""
    h = check_mode(h)
    h_new = int(_hysteresis(h, float(F_L), float(t), cfg.T_hi, cfg.T_lo, cfg.min_dwell,
                            ctrl.last_switch_time))
    if h_new == h:
        return h, replace(ctrl, h=h)
    return h_new, replace(ctrl, h=h_new, e=0.0, last_switch_time=float(t), t_switch=float(t),
                          switches=ctrl.switches + 1)


@dataclass(frozen=True)
class SwitchContext:
    """Latest mode entry as seen by the reference generator."""

    t_switch: float = 0.0
    x_switch: float = 0.0
    returned: bool = False


def reference_value(t: float, h: int, spec: ReferenceSpec, ctx: SwitchContext | None = None) -> float:
    """Reference for mode ``h`` at time ``t``.

    Force profiles run on time since the latest force entry. Position
    profiles run on absolute time until the first switch-back, after which
    the return rule applies from ``ctx.x_switch``.
    """
    h = check_mode(h)
    ctx = ctx or SwitchContext()
    pos, frc, ret = spec.arrays()
    cs = ControllerState(h=h, t_switch=ctx.t_switch, x_switch=ctx.x_switch,
                         returns=int(ctx.returned)).as_array()
    if ctx.returned:
        cs[CS_OFF] = ctx.x_switch - (spec.position_start + float(_pos_profile(ctx.t_switch, pos)))
    cp = np.zeros(CP_SIZE)
    cp[CP_X0] = spec.position_start
    return float(_reference(float(t), h, cs, cp, pos, ret, frc))


@dataclass(frozen=True)
class StepOutput:
    u_valve: float
    u_raw: float
    r: float
    y: float
    switched: bool


def controller_step(
    meas: PlantState,
    t: float,
    dt: float,
    gains: dict,
    cfg: ControllerConfig,
    ctrl: ControllerState,
    reference: ReferenceSpec,
    hysteresis: HysteresisConfig,
    delta: float = 0.05,
    u_max: float = 1.0,
) -> tuple[float, ControllerState, StepOutput]:
    """Full tick: hysteresis, reference, law, compensator, low-pass, clamp.

    ``delta``/``u_max`` are the plant values, used unless ``cfg`` overrides
    them. Returns ``(u_valve, ctrl', details)``.
    """
    if not dt > 0:
        raise ValidationError("must be > 0", "dt")
    cfg.check_step(dt / cfg.control_decimation)
    cs = ctrl.as_array()
    cp = param_array(cfg, hysteresis, delta, u_max, reference.position_start)
    pos, frc, ret = reference.arrays()
    u_raw, u_valve, r, y, _, sw = _controller_core(
        meas.x, meas.v, meas.P_L, meas.F_L, float(t), float(dt), cs, cp, gain_matrix(gains), pos, ret, frc)
    out = StepOutput(float(u_valve), float(u_raw), float(r), float(y), bool(sw))
    return float(u_valve), ControllerState.from_array(cs), out
