"""Augmented, switched, linearized closed-loop systems.

State layout is shared by both modes: ``(x, v, P_L, F_L, e, 1)`` where ``e``
integrates ``r - y`` and the trailing constant carries the affine terms.
Position mode (h = -1) controls ``x``; force mode (h = +1) controls ``F_L``
against an environment of stiffness ``c``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ValidationError
from .plant import FORCE, POSITION, PlantParams, check_mode

STATE_NAMES = ("x", "v", "P_L", "F_L", "e", "1")

# state kept frozen (structurally decoupled) in each mode
FROZEN_STATE = {POSITION: 3, FORCE: 0}
ACTIVE_STATES = {POSITION: (0, 1, 2, 4), FORCE: (1, 2, 3, 4)}
OUTPUT_STATE = {POSITION: 0, FORCE: 3}


@dataclass(frozen=True)
class GainVector:
    K1: float = 0.0
    K2: float = 0.0
    K3: float = 0.0
    K4: float = 0.0
    Ki: float = 0.0

    def check_mode(self, h: int) -> "GainVector":
        h = check_mode(h)
        for name, val in asdict(self).items():
            if not np.isfinite(val):
                raise ValidationError(f"gain must be finite, got {val}", name)
        if h == POSITION and self.K4 != 0.0:
            raise ValidationError("position mode requires K4 = 0", "K4")
        if h == FORCE and self.K1 != 0.0:
            raise ValidationError("force mode requires K1 = 0", "K1")
        return self

    def feedforward(self, h: int) -> float:
        return self.K1 if check_mode(h) == POSITION else self.K4

    def feedback_row(self) -> np.ndarray:
        """Row ``k`` such that the control is ``FF r - k x_e`` with ``de/dt = r - y``."""
        return np.array([self.K1, self.K2, self.K3, self.K4, -self.Ki])

    def as_array(self) -> np.ndarray:
        return np.array([self.K1, self.K2, self.K3, self.K4, self.Ki])


NOMINAL_GAINS_POSITION = GainVector(K1=190.0, K2=9.019e-4, K3=30.539e-9, K4=0.0, Ki=5000.0)
NOMINAL_GAINS_FORCE = GainVector(K1=0.0, K2=2.5e-4, K3=5.9e-8, K4=5e-5, Ki=1.2e-3)


@dataclass(frozen=True)
class OperatingPoint:
    """Mode-wise linearization constants.

    ``Cqp`` is the open-loop pressure coefficient kept in the design model;
    the published closed-loop matrices omit it, hence the default 0.
    """

    Omega: float
    k_w: float
    d_w: float
    c: float = 1.2e8
    Cqp: float = 0.0

    def __post_init__(self):
        if not self.Omega > 0:
            raise ValidationError("must be > 0", "Omega")
        if self.k_w < 0:
            raise ValidationError("must be >= 0", "k_w")
        if not self.c > 0:
            raise ValidationError("must be > 0", "c")


DESIGN_OPERATING_POINTS = {
    POSITION: OperatingPoint(Omega=2.23e3, k_w=1.0151e3, d_w=30.755),
    FORCE: OperatingPoint(Omega=2.0125e3, k_w=6.2499e3, d_w=0.0),
}


@dataclass(frozen=True)
class ClosedLoop:
    """One mode of the switched linear system."""

    h: int
    A_bar: np.ndarray
    b_bar: np.ndarray
    c_bar: np.ndarray
    op: OperatingPoint
    gains: GainVector = field(default_factory=GainVector)

    @property
    def block(self) -> np.ndarray:
        """Top-left 5x5 block (augmentation state removed)."""
        return self.A_bar[:5, :5]

    def active(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closed loop restricted to the four states that matter in this mode."""
        idx = list(ACTIVE_STATES[self.h])
        return (self.A_bar[np.ix_(idx, idx)], self.b_bar[idx], self.c_bar[idx])

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "states": list(STATE_NAMES),
            "A_bar": self.A_bar.tolist(),
            "b_bar": self.b_bar.tolist(),
            "c_bar": self.c_bar.tolist(),
            "operating_point": asdict(self.op),
            "gains": asdict(self.gains),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _plant_rows(params: PlantParams, op: OperatingPoint, h: int) -> np.ndarray:
    """6x6 open-loop matrix (zero gains) in the shared state layout."""
    m, A_bar, g = params.m, params.A_bar, params.pressure_gain
    M = np.zeros((6, 6))
    M[0, 1] = 1.0
    M[1, 1] = -op.k_w / m
    M[1, 2] = A_bar / m
    M[1, 5] = -op.d_w / m
    M[2, 1] = -g * A_bar
    M[2, 2] = g * op.Cqp
    if h == POSITION:
        M[4, 0] = -1.0
    else:
        M[1, 3] = -1.0 / m
        M[3, 1] = op.c
        M[4, 3] = -1.0
    return M


def open_loop_augmented(params: PlantParams, op: OperatingPoint, h: int):
    """Open-loop model extended by the integral-error state.

    Returns ``(A_e, b_e, f_e, c_e)``: 5x5 matrix, control input vector, affine
    term and output row. Reference enters the error row with +1.
    """
    h = check_mode(h)
    M = _plant_rows(params, op, h)
    A_e = M[:5, :5].copy()
    f_e = M[:5, 5].copy()
    b_e = np.zeros(5)
    b_e[2] = params.pressure_gain * params.K * op.Omega
    c_e = np.zeros(5)
    c_e[OUTPUT_STATE[h]] = 1.0
    return A_e, b_e, f_e, c_e


def build_closed_loop(
    params: PlantParams,
    gains: GainVector,
    h: int,
    op: OperatingPoint | None = None,
) -> ClosedLoop:
    """Closed-loop ``(A_bar, b_bar, c_bar)`` for mode ``h`` under ``gains``."""
    h = check_mode(h)
    gains.check_mode(h)
    op = DESIGN_OPERATING_POINTS[h] if op is None else op
    g_KO = params.pressure_gain * params.K * op.Omega

    A_bar = _plant_rows(params, op, h)
    A_bar[2, 0] = -g_KO * gains.K1
    A_bar[2, 1] = -params.pressure_gain * (params.K * op.Omega * gains.K2 + params.A_bar)
    A_bar[2, 2] = -g_KO * gains.K3 + params.pressure_gain * op.Cqp
    A_bar[2, 3] = -g_KO * gains.K4
    A_bar[2, 4] = g_KO * gains.Ki

    b_bar = np.zeros(6)
    b_bar[2] = g_KO * gains.feedforward(h)
    b_bar[4] = 1.0
    c_bar = np.zeros(6)
    c_bar[OUTPUT_STATE[h]] = 1.0
    return ClosedLoop(h=h, A_bar=A_bar, b_bar=b_bar, c_bar=c_bar, op=op, gains=gains)


def switched_system(params: PlantParams, gains: dict, ops: dict | None = None) -> dict:
    """Both modes at once: ``{-1: ClosedLoop, +1: ClosedLoop}``."""
    ops = ops or DESIGN_OPERATING_POINTS
    return {h: build_closed_loop(params, gains[h], h, ops[h]) for h in (POSITION, FORCE)}
