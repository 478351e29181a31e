"""Gain synthesis by pole placement and closed-loop verification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import HydroHybridError, UncontrollableError, ValidationError
from .linear_system import (
    ACTIVE_STATES,
    FROZEN_STATE,
    DESIGN_OPERATING_POINTS,
    STATE_NAMES,
    NOMINAL_GAINS_FORCE,
    NOMINAL_GAINS_POSITION,
    GainVector,
    OperatingPoint,
    build_closed_loop,
)
from .plant import FORCE, POSITION, PlantParams, check_mode


def _reduce_desired(desired, n_active: int) -> np.ndarray:
    p = np.asarray(desired, dtype=complex).reshape(-1)
    if p.size == n_active:
        return p
    if p.size == n_active + 1:
        # one entry stands for the frozen state and must sit at the origin
        scale = max(1.0, float(np.max(np.abs(p))))
        i = int(np.argmin(np.abs(p)))
        if abs(p[i]) > 1e-9 * scale:
            raise ValidationError(
                "5 poles given but none is the structural zero of the frozen state", "desired")
        return np.delete(p, i)
    raise ValidationError(f"expected {n_active} or {n_active + 1} poles, got {p.size}", "desired")


def _uncontrollable_state(A: np.ndarray, b: np.ndarray, names) -> str:
    # PBH test: left eigenvectors orthogonal to b mark uncontrollable modes
    lam, W = np.linalg.eig(A.T)
    score = np.abs(W.T @ b) / (np.linalg.norm(W, axis=0) * max(np.linalg.norm(b), 1e-300))
    w = W[:, int(np.argmin(score))]
    return names[int(np.argmax(np.abs(w)))]


def synthesize_gains(A_e, b_e, desired, h: int) -> GainVector:
    """Place the closed-loop poles of one mode.

    Placement runs on the four mode-relevant states (the frozen state, F_L in
    position mode or x in force mode, is structurally uncontrollable and is
    removed first), so the irrelevant gain comes back exactly zero.
    """
    h = check_mode(h)
    A_e = np.asarray(A_e, dtype=float)
    b_e = np.asarray(b_e, dtype=float).reshape(-1)
    if A_e.shape != (5, 5) or b_e.size != 5:
        raise ValidationError("expected a 5x5 augmented open loop and a 5-vector input", "A_e")
    idx = list(ACTIVE_STATES[h])
    A_r = A_e[np.ix_(idx, idx)]
    b_r = b_e[idx]
    p = _reduce_desired(desired, len(idx))
    names = [STATE_NAMES[i] for i in idx]
    try:
        k = numerics.place_poles(A_r, b_r, p)
    except UncontrollableError as exc:
        state = _uncontrollable_state(A_r, b_r, names)
        raise UncontrollableError(
            f"{exc}; uncontrollable direction dominated by state {state!r}",
            rank=exc.rank, n=exc.n, deficient_state=state) from exc
    k = [float(v) for v in k]
    if h == POSITION:
        return GainVector(K1=k[0], K2=k[1], K3=k[2], K4=0.0, Ki=-k[3])
    return GainVector(K1=0.0, K2=k[0], K3=k[1], K4=k[2], Ki=-k[3])


@dataclass
class GainReport:
    h: int
    gains: GainVector
    poles: list[complex]
    structural_poles: list[complex]
    all_stable: bool
    bandwidth_hz: float | None
    dc_gain: float | None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": "position" if self.h == POSITION else "force",
            "h": self.h,
            "gains": self.gains.__dict__.copy(),
            "poles": [[p.real, p.imag] for p in self.poles],
            "structural_poles": [[p.real, p.imag] for p in self.structural_poles],
            "all_stable": self.all_stable,
            "bandwidth_hz": self.bandwidth_hz,
            "dc_gain": self.dc_gain,
            "flags": list(self.flags),
        }


def verify_gains(
    gains: GainVector,
    h: int,
    params: PlantParams | None = None,
    op: OperatingPoint | None = None,
) -> GainReport:
    """Poles, stability, bandwidth and DC gain of one closed loop.

    ``poles`` are those of the mode-relevant states; the frozen state adds
    one exact zero eigenvalue to the 5x5 block, reported separately as
    ``structural_poles``. Failures land in ``flags`` rather than raising.
    """
    h = check_mode(h)
    params = params or PlantParams()
    op = op or DESIGN_OPERATING_POINTS[h]
    cl = build_closed_loop(params, gains, h, op)
    A, b, c = cl.active()
    poles = numerics.eigenvalues(A)
    order = np.argsort(-poles.real, kind="stable")
    poles = poles[order]
    frozen = FROZEN_STATE[h]
    structural = [complex(cl.block[frozen, frozen])]
    all_stable = bool(np.all(poles.real < 0))
    flags: list[str] = []

    dc = None
    try:
        dc = float(abs(-c @ np.linalg.solve(A, b)))
    except np.linalg.LinAlgError:
        flags.append("dc_gain: closed loop singular at s = 0")

    bw = None
    if all_stable:
        try:
            bw = numerics.bandwidth_hz(A, b, c)
        except HydroHybridError as exc:
            flags.append(f"bandwidth: {exc}")
    else:
        flags.append("unstable: bandwidth not evaluated")

    slow = poles[np.argsort(np.abs(poles.real))][:2]
    for p in slow:
        if abs(p.imag) > 1e-12 and p.real != 0 and abs(p.imag / p.real) > 1:
            flags.append(f"complex pole pair near origin: {p.real:.4g}{p.imag:+.4g}j")
            break

    return GainReport(h=h, gains=gains, poles=[complex(p) for p in poles],
                      structural_poles=structural, all_stable=all_stable,
                      bandwidth_hz=bw, dc_gain=dc, flags=flags)


def default_poles(h: int, params: PlantParams | None = None) -> np.ndarray:
    """Closed-loop poles realized by the published gains; the default targets."""
    h = check_mode(h)
    gains = NOMINAL_GAINS_POSITION if h == POSITION else NOMINAL_GAINS_FORCE
    cl = build_closed_loop(params or PlantParams(), gains, h)
    return numerics.eigenvalues(cl.active()[0])
