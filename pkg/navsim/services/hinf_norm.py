"""H-infinity norm of stable continuous-time LTI systems.

The norm is bracketed by a frequency sweep and then refined by bisection on
gamma: gamma is below the norm exactly when the Hamiltonian

    H(gamma) = [[A + B R^-1 D'C,        B R^-1 B'           ],
                [-C'(I + D R^-1 D')C,  -(A + B R^-1 D'C)'   ]],   R = gamma^2 I - D'D

has an eigenvalue on the imaginary axis. Each such eigenvalue also gives a
frequency whose singular value raises the lower bound, so the bracket
shrinks quickly.

USAGE:
    from navsim.services.hinf_norm import StateSpace, hinf_norm

    gamma = hinf_norm(StateSpace(A, B, C, D), tol=1e-6)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from navsim.core.config import settings
from navsim.core.errors import Unstable

logger = logging.getLogger(__name__)

_SWEEP_POINTS = 96
_IMAG_AXIS_RTOL = 1e-10
_MAX_BISECTIONS = 200


@dataclass(frozen=True)
class StateSpace:
    """x' = A x + B w,  z = C x + D w"""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @classmethod
    def from_arrays(cls, A, B, C, D=None) -> "StateSpace":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        C = np.atleast_2d(np.asarray(C, dtype=float))
        D = np.zeros((C.shape[0], B.shape[1])) if D is None else np.atleast_2d(np.asarray(D, dtype=float))
        return cls(A, B, C, D)


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------

def spectral_abscissa(A: np.ndarray) -> float:
    """Largest real part of the eigenvalues of A."""
    return float(np.max(linalg.eigvals(A).real))


def is_hurwitz(A: np.ndarray, margin: float = settings.HURWITZ_MARGIN) -> bool:
    alpha = spectral_abscissa(A)
    return bool(np.isfinite(alpha) and alpha < -margin)


# ---------------------------------------------------------------------------
# Frequency response
# ---------------------------------------------------------------------------

def frequency_response(sys, omegas: Sequence[float]) -> np.ndarray:
    """G(j w) = C (j w I - A)^-1 B + D for every w, shape (len(omegas), p, m)."""
    w = np.asarray(omegas, dtype=float).reshape(-1)
    n = sys.A.shape[0]
    M = 1j * w[:, None, None] * np.eye(n)[None, :, :] - sys.A[None, :, :]
    X = np.linalg.solve(M, np.broadcast_to(sys.B, (len(w),) + sys.B.shape))
    return sys.C[None, :, :] @ X + sys.D[None, :, :]


def frequency_response_peak(sys, omegas: Sequence[float]) -> Tuple[float, float]:
    """(largest singular value over the given frequencies, frequency where it occurs)"""
    w = np.asarray(omegas, dtype=float).reshape(-1)
    sigma = np.linalg.svd(frequency_response(sys, w), compute_uv=False)[:, 0]
    k = int(np.argmax(sigma))
    return float(sigma[k]), float(w[k])


def sweep_frequencies(A: np.ndarray, points: int = _SWEEP_POINTS) -> np.ndarray:
    """DC, a log grid spanning the modal frequencies, and the modes themselves."""
    poles = linalg.eigvals(A)
    mags = np.abs(poles)
    mags = mags[mags > 0.0]
    lo = max(float(mags.min()) if mags.size else 1.0, 1e-12) * 1e-2
    hi = (float(mags.max()) if mags.size else 1.0) * 1e2
    grid = np.logspace(np.log10(lo), np.log10(hi), points)
    return np.concatenate([[0.0], grid, np.abs(poles.imag), mags])


# ---------------------------------------------------------------------------
# Hamiltonian bisection
# ---------------------------------------------------------------------------

def _hamiltonian(sys, gamma: float) -> np.ndarray:
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    m = B.shape[1]
    p = C.shape[0]
    R = gamma ** 2 * np.eye(m) - D.T @ D
    Rinv = np.linalg.inv(R)
    Ah = A + B @ Rinv @ D.T @ C
    return np.block([
        [Ah, B @ Rinv @ B.T],
        [-C.T @ (np.eye(p) + D @ Rinv @ D.T) @ C, -Ah.T],
    ])


def _imaginary_axis_frequencies(sys, gamma: float) -> np.ndarray:
    """Nonnegative frequencies of Hamiltonian eigenvalues on the imaginary axis."""
    H = _hamiltonian(sys, gamma)
    eig = linalg.eigvals(H)
    scale = max(1.0, float(np.linalg.norm(H, ord=1)))
    on_axis = np.abs(eig.real) < _IMAG_AXIS_RTOL * scale
    return np.unique(np.abs(eig[on_axis].imag))


def hinf_norm_with_frequency(
    sys,
    tol: float = 1e-6,
    stop_above: Optional[float] = None,
) -> Tuple[float, float]:
    """H-infinity norm of a stable system and the frequency of its peak.

    Args:
        sys: object with A, B, C, D arrays.
        tol: relative width of the final bracket.
        stop_above: return as soon as the lower bound exceeds this value.

    Raises:
        Unstable: if A is not Hurwitz.
    """
    if not is_hurwitz(sys.A):
        raise Unstable(f"spectral abscissa {spectral_abscissa(sys.A):.3e} is not negative")

    d_norm = float(np.linalg.norm(sys.D, 2)) if sys.D.size else 0.0
    if not np.any(sys.B) or not np.any(sys.C):
        return d_norm, 0.0

    lo, w_peak = frequency_response_peak(sys, sweep_frequencies(sys.A))
    lo = max(lo, d_norm)
    if lo == 0.0:
        return 0.0, 0.0
    if stop_above is not None and lo > stop_above:
        return lo, w_peak

    hi = 2.0 * lo
    for _ in range(_MAX_BISECTIONS):
        freqs = _imaginary_axis_frequencies(sys, hi)
        if freqs.size == 0:
            break
        sigma, w = frequency_response_peak(sys, freqs)
        if sigma > lo:
            lo, w_peak = sigma, w
        hi = 2.0 * max(hi, lo)
    else:
        raise Unstable("H-infinity upper bound did not converge")

    for _ in range(_MAX_BISECTIONS):
        if hi - lo <= tol * lo:
            break
        if stop_above is not None and lo > stop_above:
            break
        gamma = 0.5 * (lo + hi)
        freqs = _imaginary_axis_frequencies(sys, gamma)
        if freqs.size:
            sigma, w = frequency_response_peak(sys, freqs)
            if sigma >= gamma:
                w_peak = w
            lo = max(gamma, sigma)
            if lo > hi:
                hi = lo * (1.0 + tol)
        else:
            hi = gamma

    return 0.5 * (lo + hi), w_peak


def hinf_norm(sys, tol: float = 1e-6) -> float:
    """Peak L2 gain of a stable system (see hinf_norm_with_frequency)."""
    return hinf_norm_with_frequency(sys, tol)[0]
