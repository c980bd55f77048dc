"""Explicit Runge-Kutta integrators.

Two schemes are provided:
  * classical fixed-step RK4, used for the coupled truth/observer run so both
    systems share one time grid
  * Runge-Kutta-Fehlberg 4(5) with embedded error estimate and step-size
    control, used for accurate truth propagation

The right-hand side has the signature ``f(t, y, u)``. ``u`` is an exogenous
input sampled once per macro-step by ``hold(t_step_start)`` and held constant
across every stage of that step (zero-order hold), which keeps stochastic
inputs well-defined inside the solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Tuple

import numpy as np

from navsim.core.errors import StepFailure

logger = logging.getLogger(__name__)

Rhs = Callable[[float, np.ndarray, Any], np.ndarray]
Hold = Callable[[float], Any]

# ---------------------------------------------------------------------------
# Fehlberg tableau
# ---------------------------------------------------------------------------

_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
# fifth-order minus fourth-order weights
_E = (1 / 360, 0.0, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


@dataclass
class StepStats:
    """Counters reported by the adaptive driver"""
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0


def rk4_step(f: Rhs, t: float, y: np.ndarray, h: float, u: Any = None) -> np.ndarray:
    """Advance one classical RK4 step with input ``u`` held."""
    k1 = f(t, y, u)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1, u)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2, u)
    k4 = f(t + h, y + h * k3, u)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rkf45_step(f: Rhs, t: float, y: np.ndarray, h: float, u: Any = None) -> Tuple[np.ndarray, np.ndarray]:
    """One Fehlberg step. Returns the 4th-order solution and the local error estimate."""
    k: List[np.ndarray] = []
    for stage in range(6):
        yi = y.copy()
        for j, a in enumerate(_A[stage]):
            yi = yi + h * a * k[j]
        k.append(f(t + _C[stage] * h, yi, u))
    y4 = y + h * sum(b * ki for b, ki in zip(_B4, k) if b != 0.0)
    err = h * sum(e * ki for e, ki in zip(_E, k) if e != 0.0)
    return y4, err


def integrate_fixed(
    f: Rhs,
    t0: float,
    t1: float,
    y0: np.ndarray,
    step: float,
    hold: Optional[Hold] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 from t0 to t1.

    The grid is t0 + k*step; a shorter final step lands exactly on t1.
    """
    y0 = np.asarray(y0, dtype=float)
    if t1 == t0:
        return np.array([t0]), y0[None, :].copy()

    n_full = int(np.floor((t1 - t0) / step + 1e-9))
    times = [t0 + k * step for k in range(n_full + 1)]
    if t1 - times[-1] > 1e-12 * max(1.0, abs(t1)):
        times.append(t1)
    else:
        times[-1] = t1

    ys = [y0]
    y = y0
    for k in range(len(times) - 1):
        t = times[k]
        h = times[k + 1] - t
        u = hold(t) if hold is not None else None
        y = rk4_step(f, t, y, h, u)
        ys.append(y)
    return np.asarray(times), np.vstack(ys)


def integrate_adaptive(
    f: Rhs,
    t0: float,
    t1: float,
    y0: np.ndarray,
    abs_tol: float,
    rel_tol: float,
    first_step: float,
    max_step: float,
    hold: Optional[Hold] = None,
    stats: Optional[StepStats] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Adaptive RKF45 from t0 to t1, returning every accepted sample.

    Raises:
        StepFailure: if the controller shrinks the step below the floating-point
            resolution of t without meeting tolerance.
    """
    y = np.asarray(y0, dtype=float)
    stats = stats if stats is not None else StepStats()
    times = [t0]
    ys = [y.copy()]
    if t1 == t0:
        return np.asarray(times), np.vstack(ys)

    t = t0
    h = min(first_step, max_step, t1 - t0)
    while t < t1:
        h_min = 16.0 * np.finfo(float).eps * max(1.0, abs(t))
        last = t + h >= t1
        if last:
            h = t1 - t
        u = hold(t) if hold is not None else None
        y_new, err = rkf45_step(f, t, y, h, u)
        stats.evaluations += 6

        scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale))
        if not np.isfinite(err_norm):
            err_norm = np.inf

        if err_norm <= 1.0:
            t = t1 if last else t + h
            y = y_new
            times.append(t)
            ys.append(y.copy())
            stats.accepted += 1
            factor = _MAX_FACTOR if err_norm == 0.0 else min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
        else:
            stats.rejected += 1
            factor = max(_MIN_FACTOR, _SAFETY * err_norm ** -0.25) if np.isfinite(err_norm) else _MIN_FACTOR

        h = min(max_step, h * factor)
        if h < h_min and t < t1:
            logger.error(f"RKF45 step collapsed to {h:.3e} at t={t:.9f}")
            raise StepFailure(f"step size {h:.3e} below minimum {h_min:.3e} at t={t:.9f}")

    logger.debug(
        f"RKF45 finished: {stats.accepted} accepted, {stats.rejected} rejected steps"
    )
    return np.asarray(times), np.vstack(ys)
