"""Small dense numerical kernels: RK4 stepping, eigenvalues, SISO pole
placement, and frequency response of state-space models.

All functions are pure and operate on value inputs.
"""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    IntegrationError,
    NoCrossingError,
    NumericError,
    SingularityError,
    UncontrollableError,
    ValidationError,
)

log = logging.getLogger(__name__)

MAX_EIG_DIM = 12
_CONJ_TOL = 1e-9
_RANK_TOL = 1e-10
_COND_WARN = 1e12


def _as_matrix(A, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a non-empty square matrix, got shape {A.shape}", name)
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix entries must be finite", name)
    return A


def _as_vector(v, n: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != n:
        raise ValidationError(f"expected {n} entries, got {v.size}", name)
    if not np.all(np.isfinite(v)):
        raise ValidationError("entries must be finite", name)
    return v


def integrate_rk4(
    derivative: Callable[[np.ndarray, float], np.ndarray],
    state,
    t: float,
    dt: float,
) -> np.ndarray:
    """Advance ``state`` by one classical fourth-order Runge-Kutta step.

    ``derivative(y, t)`` must return an array shaped like ``y``. Raises
    :class:`IntegrationError` naming the first non-finite component.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}", "dt")
    y = np.asarray(state, dtype=float)

    def f(yy, tt):
        d = np.asarray(derivative(yy, tt), dtype=float)
        if d.shape != y.shape:
            raise ValidationError(f"derivative returned shape {d.shape}, expected {y.shape}")
        bad = np.flatnonzero(~np.isfinite(d))
        if bad.size:
            raise IntegrationError("non-finite derivative", tt, int(bad[0]))
        return d

    k1 = f(y, t)
    k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(y + dt * k3, t + dt)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def eigenvalues(A) -> np.ndarray:
    """All eigenvalues of a real square matrix (dimension <= 12).

    Backed by LAPACK's balanced Hessenberg QR iteration.
    """
    A = _as_matrix(A)
    if A.shape[0] > MAX_EIG_DIM:
        raise ValidationError(f"dimension {A.shape[0]} exceeds cap {MAX_EIG_DIM}", "A")
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue iteration did not converge: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise NumericError("eigenvalue iteration returned non-finite values")
    return lam.astype(complex)


def _check_conjugate_closed(p: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(p)))) if p.size else 1.0
    remaining = list(p[np.abs(p.imag) > _CONJ_TOL * scale])
    while remaining:
        z = remaining.pop()
        dist = [abs(w - np.conj(z)) for w in remaining]
        if not dist or min(dist) > _CONJ_TOL * scale:
            raise ValidationError(f"pole {z} has no conjugate partner", "desired")
        remaining.pop(int(np.argmin(dist)))


def controllability_matrix(A, b) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = A.shape[0]
    cols = [b]
    for _ in range(n - 1):
        cols.append(A @ cols[-1])
    return np.column_stack(cols)


def place_poles(A, b, desired: Sequence[complex]) -> np.ndarray:
    """State-feedback row ``k`` placing the eigenvalues of ``A - b k``.

    Ackermann's formula, evaluated on a diagonally balanced realization so
    that systems whose entries span many decades (hydraulics) stay well
    conditioned. Raises :class:`UncontrollableError` when the controllability
    matrix is rank deficient.
    """
    A = _as_matrix(A)
    n = A.shape[0]
    b = _as_vector(b, n, "b")
    p = np.asarray(desired, dtype=complex).reshape(-1)
    if p.size != n:
        raise ValidationError(f"need {n} desired poles, got {p.size}", "desired")
    if not np.all(np.isfinite(p)):
        raise ValidationError("desired poles must be finite", "desired")
    _check_conjugate_closed(p)

    # x = T x', T = diag(s)
    Ab, (s, _) = scipy.linalg.matrix_balance(A, permute=False, separate=True)
    bb = b / s
    bnorm = np.max(np.abs(bb))
    if bnorm == 0.0:
        raise UncontrollableError("input vector is zero", rank=0, n=n)
    bb = bb / bnorm

    C = controllability_matrix(Ab, bb)
    # normalise columns before the rank test so it measures direction, not size
    col = np.linalg.norm(C, axis=0)
    col[col == 0] = 1.0
    sv = np.linalg.svd(C / col, compute_uv=False)
    rank = int(np.sum(sv > _RANK_TOL * sv[0]))
    if rank < n:
        raise UncontrollableError(
            f"(A, b) is not controllable: controllability rank {rank} < {n}", rank=rank, n=n
        )
    cond = sv[0] / sv[-1]
    if cond > _COND_WARN:
        log.warning("controllability matrix condition number %.3g exceeds %.0e", cond, _COND_WARN)

    coeffs = np.real_if_close(np.poly(p), tol=1e6).real
    phi = np.zeros_like(Ab)
    for c in coeffs:
        phi = phi @ Ab + c * np.eye(n)
    en = np.zeros(n)
    en[-1] = 1.0
    y = np.linalg.solve(C.T, en)
    k_bal = y @ phi
    return k_bal / (s * bnorm)


def _prepare_siso(A, b, c):
    A = _as_matrix(A)
    n = A.shape[0]
    return A, _as_vector(b, n, "b"), _as_vector(c, n, "c")


def _freqresp_many(A: np.ndarray, b: np.ndarray, c: np.ndarray, omega: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    M = 1j * omega[:, None, None] * np.eye(n)[None] - A[None]
    try:
        x = np.linalg.solve(M, np.broadcast_to(b.astype(complex), (omega.size, n))[..., None])
    except np.linalg.LinAlgError as exc:
        raise SingularityError("(jwI - A) is singular") from exc
    H = np.einsum("j,kj->k", c, x[..., 0])
    if not np.all(np.isfinite(H)):
        raise SingularityError("(jwI - A) is numerically singular")
    return H


def frequency_response(A, b, c, omega: float) -> complex:
    """``c (jw I - A)^-1 b`` for a SISO state-space model."""
    A, b, c = _prepare_siso(A, b, c)
    omega = float(omega)
    lam = eigenvalues(A)
    scale = max(1.0, abs(omega), float(np.max(np.abs(A))))
    if np.any(np.abs(lam - 1j * omega) <= 1e-12 * scale):
        raise SingularityError(f"jw = {omega}j coincides with an eigenvalue of A")
    return complex(_freqresp_many(A, b, c, np.array([omega]))[0])


def bandwidth_hz(A, b, c, f_min: float = 1e-3, f_max: float = 1e4) -> float:
    """Lowest frequency [Hz] where ``|H(jw)|`` first drops 3 dB below ``|H(0)|``.

    Scans a log grid (100 points/decade) and refines the bracket by
    bisection in log frequency.
    """
    A, b, c = _prepare_siso(A, b, c)
    lam = eigenvalues(A)
    if np.any(lam.real >= 0):
        raise ValidationError("bandwidth requires a Hurwitz closed-loop matrix", "A")
    h0 = abs(_freqresp_many(A, b, c, np.array([0.0]))[0])
    if h0 == 0.0:
        raise NumericError("DC gain is zero; bandwidth undefined")
    level = h0 / np.sqrt(2.0)  # half-power point

    n_dec = np.log10(f_max / f_min)
    f = np.logspace(np.log10(f_min), np.log10(f_max), int(round(100 * n_dec)) + 1)
    mag = np.abs(_freqresp_many(A, b, c, 2 * np.pi * f))
    below = np.flatnonzero(mag < level)
    if below.size == 0:
        raise NoCrossingError(f"|H| never falls 3 dB below DC gain under {f_max:g} Hz")
    i = int(below[0])
    if i == 0:
        lo, hi = np.log10(f_min) - 6.0, np.log10(f[0])
    else:
        lo, hi = np.log10(f[i - 1]), np.log10(f[i])
    while hi - lo > 1e-7:
        mid = 0.5 * (lo + hi)
        m = abs(_freqresp_many(A, b, c, np.array([2 * np.pi * 10.0**mid]))[0])
        if m < level:
            hi = mid
        else:
            lo = mid
    return float(10.0 ** (0.5 * (lo + hi)))
