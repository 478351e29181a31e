"""Multiple-Lyapunov-function checks for the switched closed loop.

Two separate things live here. The trajectory criterion compares entry
levels of consecutive activations of the same mode. The sampled-derivative
search evaluates ``dL/dt`` of the diagonal quadratic form on the linearized
closed loop; it can falsify, never prove.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ValidationError
from .linear_system import FROZEN_STATE, OUTPUT_STATE
from .plant import FORCE, POSITION, PlantState, check_mode

DEFAULT_SAMPLES = 2000
REL_TOL = 1e-9
# round-off guard: dL/dt <= tol * (|x|^T |Q| |x|) counts as non-increasing
_DERIV_TOL = 1e-12


@dataclass(frozen=True)
class LyapunovWeights:
    """``L = W1 v^2 + W2 P_L^2 + W3 (r - y)^2``."""

    W1: float = 1.0
    W2: float = 1.0
    W3: float = 1.0

    def __post_init__(self):
        for name in ("W1", "W2", "W3"):
            w = getattr(self, name)
            if not (math.isfinite(w) and w > 0):
                raise ValidationError(f"must be finite and > 0, got {w}", f"lyapunov.{name}")

    def as_array(self) -> np.ndarray:
        return np.array([self.W1, self.W2, self.W3])

    @classmethod
    def parse(cls, text: str) -> "LyapunovWeights":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValidationError(f"expected 'w1,w2,w3', got {text!r}", "weights")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError as exc:
            raise ValidationError(str(exc), "weights") from exc


def weights_for(weights, h: int) -> LyapunovWeights:
    """Accept one weight set or a per-mode mapping ``{h: LyapunovWeights}``."""
    if isinstance(weights, LyapunovWeights):
        return weights
    return weights[check_mode(h)]


@dataclass(frozen=True)
class SwitchEvent:
    t: float
    from_mode: int
    to_mode: int
    L_value: float
    activation_index: int = 0
    state: PlantState = field(default_factory=PlantState)
    r: float = 0.0

    def __post_init__(self):
        check_mode(self.from_mode)
        check_mode(self.to_mode)
        if self.from_mode == self.to_mode:
            raise ValidationError("switch event must change mode", "event.to_mode")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["state"] = asdict(self.state)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchEvent":
        d = dict(d)
        d["state"] = PlantState(**d.get("state", {}))
        return cls(**d)


def lyapunov_value(s: PlantState, r: float, y: float, w: LyapunovWeights, h: int) -> float:
    """Quadratic level of the state; ``y`` is the mode's controlled output."""
    check_mode(h)
    d = r - y
    return w.W1 * s.v ** 2 + w.W2 * s.P_L ** 2 + w.W3 * d * d


def rescore_events(events: list[SwitchEvent], weights) -> list[SwitchEvent]:
    """Recompute entry levels from the stored states under new weights."""
    out = []
    for ev in events:
        y = ev.state.x if ev.to_mode == POSITION else ev.state.F_L
        L = lyapunov_value(ev.state, ev.r, y, weights_for(weights, ev.to_mode), ev.to_mode)
        out.append(SwitchEvent(ev.t, ev.from_mode, ev.to_mode, L, ev.activation_index, ev.state, ev.r))
    return out


def index_activations(events: list[SwitchEvent]) -> list[SwitchEvent]:
    count = {POSITION: 0, FORCE: 0}
    out = []
    for ev in events:
        out.append(SwitchEvent(ev.t, ev.from_mode, ev.to_mode, ev.L_value, count[ev.to_mode],
                               ev.state, ev.r))
        count[ev.to_mode] += 1
    return out


@dataclass(frozen=True)
class SequenceVerdict:
    levels: dict
    nonincreasing: bool
    first_violation: dict | None = None

    def to_dict(self) -> dict:
        return {"levels": {("position" if h == POSITION else "force"): v for h, v in self.levels.items()},
                "nonincreasing": self.nonincreasing, "first_violation": self.first_violation}


def check_mode_sequence(events: list[SwitchEvent], rel_tol: float = REL_TOL) -> SequenceVerdict:
    """Entry levels grouped by mode; non-increasing within ``rel_tol``.

    Equal consecutive levels are allowed.
    """
    levels: dict[int, list[float]] = {POSITION: [], FORCE: []}
    times: dict[int, list[float]] = {POSITION: [], FORCE: []}
    prev_t = -math.inf
    for ev in events:
        if not ev.t > prev_t:
            raise ValidationError("events must be strictly time-ordered", "events")
        prev_t = ev.t
        levels[ev.to_mode].append(float(ev.L_value))
        times[ev.to_mode].append(float(ev.t))
    violation = None
    for h in (POSITION, FORCE):
        seq = levels[h]
        for i in range(1, len(seq)):
            if seq[i] > seq[i - 1] + rel_tol * max(abs(seq[i - 1]), abs(seq[i])):
                cand = {"mode": h, "index": i, "t": times[h][i],
                        "previous": seq[i - 1], "level": seq[i]}
                if violation is None or cand["t"] < violation["t"]:
                    violation = cand
                break
    return SequenceVerdict(levels=levels, nonincreasing=violation is None, first_violation=violation)


@dataclass(frozen=True)
class DecreaseReport:
    fraction_decreasing: float
    worst: float
    samples: int
    targeted: int

    def to_dict(self) -> dict:
        return asdict(self)


def _block(A_bar) -> np.ndarray:
    A = np.asarray(A_bar, dtype=float)
    if A.shape == (6, 6):
        A = A[:5, :5]
    if A.shape != (5, 5):
        raise ValidationError(f"expected a 5x5 block or 6x6 augmented matrix, got {A.shape}", "A_bar")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix entries must be finite", "A_bar")
    return A


def _weight_matrix(w: LyapunovWeights, h: int) -> np.ndarray:
    d = np.zeros(5)
    d[1] = w.W1
    d[2] = w.W2
    # at the regulation point r = 0 the tracking error is -y
    d[OUTPUT_STATE[h]] = w.W3
    return np.diag(d)


def _derivative_form(A: np.ndarray, w: LyapunovWeights, h: int) -> np.ndarray:
    DA = _weight_matrix(w, h) @ A
    return DA + DA.T


def unit_ball(n_samples: int, rng: np.random.Generator, dim: int = 5) -> np.ndarray:
    z = rng.standard_normal((n_samples, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * rng.random((n_samples, 1)) ** (1.0 / dim)


def _fraction(Q: np.ndarray, X: np.ndarray) -> tuple[float, float]:
    d = np.einsum("ij,jk,ik->i", X, Q, X)
    aX = np.abs(X)
    tol = _DERIV_TOL * np.einsum("ij,jk,ik->i", aX, np.abs(Q), aX)
    return float(np.mean(d <= tol)), float(np.max(d))


def verify_decrease(
    w: LyapunovWeights,
    A_bar,
    h: int,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> DecreaseReport:
    """Fraction of sampled states where ``dL/dt`` along ``A_bar x`` is <= 0.

    Samples are drawn uniformly in the unit ball of the 5-state block. The
    eigenvectors of the symmetric derivative form are appended as targeted
    candidates: a random sample almost never lands on the worst direction
    when the state scales span many decades, the top eigenvector is that
    direction.
    """
    h = check_mode(h)
    if samples < 100:
        raise ValidationError("need at least 100 samples", "samples")
    A = _block(A_bar)
    Q = 0.5 * _derivative_form(A, w, h)
    X = unit_ball(samples, np.random.default_rng(seed))
    _, V = np.linalg.eigh(Q)
    X = np.vstack([X, V.T])
    frac, worst = _fraction(Q, X)
    return DecreaseReport(fraction_decreasing=frac, worst=2.0 * worst, samples=X.shape[0],
                          targeted=V.shape[1])


@dataclass(frozen=True)
class WeightSearchResult:
    weights: LyapunovWeights
    fraction: float
    success: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {"weights": asdict(self.weights), "fraction": self.fraction,
                "success": self.success, "reason": self.reason}


def _relevant_block(A: np.ndarray, h: int) -> np.ndarray:
    i = FROZEN_STATE[h]
    # a zero row or a zero column isolates one exact zero eigenvalue
    if A[i, i] == 0 and (np.all(A[i] == 0) or np.all(A[:, i] == 0)):
        keep = [j for j in range(5) if j != i]
        return A[np.ix_(keep, keep)]
    return A


def search_weights(
    A_bar,
    h: int,
    seed: int = 0,
    candidates: int = 400,
    samples: int = DEFAULT_SAMPLES,
    threshold: float = 0.99,
) -> WeightSearchResult:
    """Log-uniform random search over ``(W1, W2, W3)`` in ``[1e-12, 1e12]^3``.

    Every candidate is scored on the same sample set, so the result is a
    deterministic function of ``seed``. A structurally decoupled frozen
    state (exact zero row or column) is ignored in the stability precheck.
    """
    h = check_mode(h)
    A = _block(A_bar)
    lam = np.linalg.eigvals(_relevant_block(A, h))
    rng = np.random.default_rng(seed)
    X = unit_ball(samples, rng)
    if np.any(lam.real >= 0):
        return WeightSearchResult(LyapunovWeights(), 0.0, False,
                                  "closed loop is not Hurwitz; no weights can succeed")

    logw = rng.uniform(-12.0, 12.0, size=(candidates, 3))
    logw[0] = 0.0  # always try the unit weights
    best_w, best_f, best_worst = None, -1.0, math.inf
    for lw in logw:
        w = LyapunovWeights(*(float(10.0 ** v) for v in lw))
        Q = 0.5 * _derivative_form(A, w, h)
        _, V = np.linalg.eigh(Q)
        frac, worst = _fraction(Q, np.vstack([X, V.T]))
        worst_rel = worst / max(np.max(np.abs(Q)), 1e-300)
        if frac > best_f or (frac == best_f and worst_rel < best_worst):
            best_w, best_f, best_worst = w, frac, worst_rel
    ok = best_f >= threshold
    return WeightSearchResult(best_w, best_f, ok,
                              "" if ok else f"best fraction {best_f:.4f} below {threshold}")
