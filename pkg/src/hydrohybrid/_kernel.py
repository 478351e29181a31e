"""Compiled closed-loop simulation loop."""

from __future__ import annotations

import math

import numpy as np

from ._jit import njit
from .controller import CS_E, _controller_core
from .plant import _load_force, _plant_rhs

N_COLS = 11  # t, x, v, P_L, F_L, e, h, r, u_raw, u_valve, L
N_EV_COLS = 10  # t, from, to, x, v, P_L, F_L, r, e, L
MAX_EVENTS = 4096

OK, NONFINITE, TOO_MANY_SWITCHES = 0, 1, 2


@njit(cache=True)
def _level(v, P, r, y, W):
    d = r - y
    return W[0] * v * v + W[1] * P * P + W[2] * d * d


@njit(cache=True)
def simulate(y0, n_steps, dt, pp, fp, env_kind, ep, G, cp, cs, pos_seg, ret, force_seg,
             n_ctrl, decim, noise, noise_std, W):
    """Lockstep RK4 plant / controller loop.

    Returns ``(rows, n_rows, steps, events, n_events, status, fail_step, n_clamped)``.
    ``noise`` holds standard normals per controller tick (empty when off).
    """
    max_rows = n_steps // decim + 2 + MAX_EVENTS
    rows = np.empty((max_rows, 11))
    steps = np.empty(max_rows, dtype=np.int64)
    events = np.empty((MAX_EVENTS, 10))
    n_rows = 0
    n_ev = 0
    status = 0
    fail_step = -1
    n_clamped = 0
    lim = pp[9] * pp[5]
    use_noise = noise.shape[0] > 0

    x, v, P, F = y0[0], y0[1], y0[2], y0[3]
    if env_kind == 0:
        F = _load_force(x, v, F, env_kind, ep)
    u_raw = 0.0
    u_valve = 0.0
    r = 0.0
    y = 0.0
    e_used = 0.0
    tick = 0
    dt_c = dt * n_ctrl

    for k in range(n_steps + 1):
        t = k * dt
        switched = False
        if k % n_ctrl == 0:
            xm, Pm, Fm = x, P, F
            if use_noise:
                xm += noise_std[0] * noise[tick, 0]
                Pm += noise_std[1] * noise[tick, 1]
                Fm += noise_std[2] * noise[tick, 2]
            h_before = cs[3]
            u_raw, u_valve, r, ym, e_used, switched = _controller_core(
                xm, v, Pm, Fm, t, dt_c, cs, cp, G, pos_seg, ret, force_seg)
            tick += 1
            if switched:
                h_now = cs[3]
                yt = x if h_now < 0 else F
                if n_ev >= MAX_EVENTS:
                    status = 2
                    fail_step = k
                    break
                wrow = 0 if h_now < 0 else 1
                events[n_ev, 0] = t
                events[n_ev, 1] = h_before
                events[n_ev, 2] = h_now
                events[n_ev, 3] = x
                events[n_ev, 4] = v
                events[n_ev, 5] = P
                events[n_ev, 6] = F
                events[n_ev, 7] = r
                events[n_ev, 8] = e_used
                events[n_ev, 9] = _level(v, P, r, yt, W[wrow])
                n_ev += 1

        if k % decim == 0 or switched or k == n_steps:
            h_now = cs[3]
            yt = x if h_now < 0 else F
            wrow = 0 if h_now < 0 else 1
            rows[n_rows, 0] = t
            rows[n_rows, 1] = x
            rows[n_rows, 2] = v
            rows[n_rows, 3] = P
            rows[n_rows, 4] = F
            rows[n_rows, 5] = e_used
            rows[n_rows, 6] = h_now
            rows[n_rows, 7] = r
            rows[n_rows, 8] = u_raw
            rows[n_rows, 9] = u_valve
            rows[n_rows, 10] = _level(v, P, r, yt, W[wrow])
            steps[n_rows] = k
            n_rows += 1
        if k == n_steps:
            break

        h = int(cs[3])
        k1 = _plant_rhs(x, v, P, F, u_valve, t, h, pp, fp, env_kind, ep)
        k2 = _plant_rhs(x + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1], P + 0.5 * dt * k1[2],
                        F + 0.5 * dt * k1[3], u_valve, t + 0.5 * dt, h, pp, fp, env_kind, ep)
        k3 = _plant_rhs(x + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1], P + 0.5 * dt * k2[2],
                        F + 0.5 * dt * k2[3], u_valve, t + 0.5 * dt, h, pp, fp, env_kind, ep)
        k4 = _plant_rhs(x + dt * k3[0], v + dt * k3[1], P + dt * k3[2],
                        F + dt * k3[3], u_valve, t + dt, h, pp, fp, env_kind, ep)
        c = dt / 6.0
        x = x + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        v = v + c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        P = P + c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        F = F + c * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        if env_kind == 0:
            F = _load_force(x, v, F, env_kind, ep)
        if P > lim:
            P = lim
            n_clamped += 1
        elif P < -lim:
            P = -lim
            n_clamped += 1
        if not (math.isfinite(x) and math.isfinite(v) and math.isfinite(P)
                and math.isfinite(F) and math.isfinite(cs[CS_E])):
            status = 1
            fail_step = k + 1
            break

    return rows, n_rows, steps, events, n_ev, status, fail_step, n_clamped
