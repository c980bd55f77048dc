"""Normalized Earth-Moon CR3BP dynamics.

Rotating frame with the barycenter at the origin, Earth at (-mu, 0, 0) and
Moon at (1 - mu, 0, 0). Units: DU = Earth-Moon distance, TU such that the
primaries' period is 2*pi.

State ordering is (x, y, z, vx, vy, vz) everywhere in navsim.

USAGE:
    from navsim.services.cr3bp import cr3bp_derivative, jacobi_constant, propagate

    traj = propagate(s0, (0.0, 3.0), IntegratorConfig(method="rkf45"))
    drift = jacobi_drift(traj, mu)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from navsim.core.config import settings
from navsim.core.errors import DegenerateDistance
from navsim.schemas.scenario import IntegratorConfig, ParamBox
from navsim.services.integrators import StepStats, integrate_adaptive, integrate_fixed

logger = logging.getLogger(__name__)

DEFAULT_MU = settings.EARTH_MOON_MU

DisturbanceFn = Callable[[float], np.ndarray]


class PrimaryDistances(NamedTuple):
    """Distances from the spacecraft to Earth (r1) and Moon (r2), DU"""
    r1: float
    r2: float


@dataclass
class Trajectory:
    """Time-ordered samples of a propagated state"""
    times: np.ndarray   # (N,)
    states: np.ndarray  # (N, 6)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal lengths")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


# ---------------------------------------------------------------------------
# Geometry and potential
# ---------------------------------------------------------------------------

def primary_distances(s: Sequence[float], mu: float = DEFAULT_MU) -> PrimaryDistances:
    """r1 = |S - E|, r2 = |S - M|. Zero distances are returned, not rejected."""
    x, y, z = float(s[0]), float(s[1]), float(s[2])
    yz2 = y * y + z * z
    return PrimaryDistances(
        math.sqrt((x + mu) ** 2 + yz2),
        math.sqrt((x - (1.0 - mu)) ** 2 + yz2),
    )


def checked_distances(s: Sequence[float], mu: float, guard: Optional[float] = None) -> PrimaryDistances:
    """Distances, raising DegenerateDistance at or inside guard DU of a primary."""
    guard = settings.DEGENERATE_DISTANCE_DU if guard is None else guard
    d = primary_distances(s, mu)
    if d.r1 <= guard or d.r2 <= guard:
        raise DegenerateDistance(
            f"state within {guard:.1e} DU of a primary (r1={d.r1:.3e}, r2={d.r2:.3e})"
        )
    return d


def effective_potential(s: Sequence[float], mu: float = DEFAULT_MU) -> float:
    """U = (x^2 + y^2)/2 + (1 - mu)/r1 + mu/r2"""
    r1, r2 = checked_distances(s, mu)
    x, y = float(s[0]), float(s[1])
    return 0.5 * (x * x + y * y) + (1.0 - mu) / r1 + mu / r2


def potential_gradient(s: Sequence[float], mu: float = DEFAULT_MU) -> np.ndarray:
    """(dU/dx, dU/dy, dU/dz)"""
    r1, r2 = checked_distances(s, mu)
    x, y, z = float(s[0]), float(s[1]), float(s[2])
    k1 = (1.0 - mu) / r1 ** 3
    k2 = mu / r2 ** 3
    return np.array([
        x - k1 * (x + mu) - k2 * (x - (1.0 - mu)),
        y - k1 * y - k2 * y,
        -k1 * z - k2 * z,
    ])


def cr3bp_derivative(
    s: Sequence[float],
    mu: float = DEFAULT_MU,
    d: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Equations of motion with an additive acceleration disturbance d."""
    gx, gy, gz = potential_gradient(s, mu)
    vx, vy, vz = float(s[3]), float(s[4]), float(s[5])
    dx, dy, dz = (0.0, 0.0, 0.0) if d is None else (float(d[0]), float(d[1]), float(d[2]))
    return np.array([
        vx,
        vy,
        vz,
        2.0 * vy + gx + dx,
        -2.0 * vx + gy + dy,
        gz + dz,
    ])


def jacobi_constant(s: Sequence[float], mu: float = DEFAULT_MU) -> float:
    """C = 2U - |v|^2"""
    v2 = float(s[3]) ** 2 + float(s[4]) ** 2 + float(s[5]) ** 2
    return 2.0 * effective_potential(s, mu) - v2


def jacobi_drift(traj: Trajectory, mu: float = DEFAULT_MU) -> float:
    """Largest relative Jacobi-constant departure from the first sample."""
    c0 = jacobi_constant(traj.states[0], mu)
    drift = max(abs(jacobi_constant(s, mu) - c0) for s in traj.states)
    return drift / abs(c0)


def libration_points(mu: float = DEFAULT_MU) -> Tuple[float, float, float]:
    """x-coordinates of the collinear points L1, L2, L3.

    Each root of dU/dx on the x-axis is bracketed between the primaries'
    singularities.
    """
    def gx(x: float) -> float:
        return float(potential_gradient((x, 0.0, 0.0, 0.0, 0.0, 0.0), mu)[0])

    eps = 1e-9
    moon, earth = 1.0 - mu, -mu
    l1 = brentq(gx, earth + eps, moon - eps, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    l2 = brentq(gx, moon + eps, 2.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    l3 = brentq(gx, -2.0, earth - eps, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return l1, l2, l3


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

def propagate(
    s0: Sequence[float],
    t_span: Tuple[float, float],
    cfg: Optional[IntegratorConfig] = None,
    disturbance: Optional[DisturbanceFn] = None,
    mu: float = DEFAULT_MU,
) -> Trajectory:
    """Integrate the CR3BP from s0 over t_span.

    The disturbance source is sampled at the start of each macro-step and held
    (zero-order hold). States closer than PROXIMITY_GUARD_DU to a primary abort
    the run with DegenerateDistance.
    """
    cfg = cfg or IntegratorConfig(method="rkf45")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 < t0:
        raise ValueError(f"t_span must be increasing, got {t_span}")

    guard = settings.PROXIMITY_GUARD_DU

    def rhs(t: float, y: np.ndarray, d) -> np.ndarray:
        checked_distances(y, mu, guard)
        return cr3bp_derivative(y, mu, d)

    y0 = np.asarray(s0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be finite")

    if cfg.method == "rk4":
        times, states = integrate_fixed(rhs, t0, t1, y0, cfg.step, hold=disturbance)
    else:
        stats = StepStats()
        times, states = integrate_adaptive(
            rhs, t0, t1, y0,
            abs_tol=cfg.abs_tol,
            rel_tol=cfg.rel_tol,
            first_step=min(cfg.step, cfg.max_step),
            max_step=cfg.max_step,
            hold=disturbance,
            stats=stats,
        )
        logger.info(
            f"Propagated {t1 - t0:.3f} TU with RKF45: {stats.accepted} steps "
            f"({stats.rejected} rejected)"
        )
    return Trajectory(times=times, states=states)


def param_envelope(traj: Trajectory, mu: float = DEFAULT_MU, margin: float = 0.0) -> ParamBox:
    """Smallest ParamBox covering r1, r2 along a trajectory, widened by a relative margin."""
    dist = np.array([primary_distances(s, mu) for s in traj.states])
    r1_lo, r2_lo = dist.min(axis=0)
    r1_hi, r2_hi = dist.max(axis=0)
    return ParamBox(
        r1_min=float(r1_lo * (1.0 - margin)),
        r1_max=float(r1_hi * (1.0 + margin)),
        r2_min=float(r2_lo * (1.0 - margin)),
        r2_max=float(r2_hi * (1.0 + margin)),
    )
