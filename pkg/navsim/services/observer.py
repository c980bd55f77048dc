"""Closed-loop LPV observer runtime.

    x_hat' = (A(rho) + L C_y(rho)) x_hat - L (y_m - d(rho)) + b(rho)

rho = (r1, r2) is scheduled from the measured bearings when the geometry
allows it and from the current estimate otherwise, then clamped into the
certified box.

Truth and estimate are advanced together as one 12-state RK4 system. The
bearing measurement and the rho schedule are re-evaluated at every RK stage
from the stage truth state, while the noise and disturbance samples stay
held for the whole step. rho is therefore not frozen at its step-start value
the way exogenous inputs are; a run scheduled that way differs at O(dt) in
the error transient. With w = 0 and x_hat = x the observer derivative
equals the truth derivative at every stage, so the noiseless closed loop
keeps a zero error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Tuple

import numpy as np

from navsim.core.config import settings
from navsim.core.errors import NearCollinear, NonPositiveRange
from navsim.schemas.scenario import ParamBox, ParamSchedulePolicy, Scenario
from navsim.services.cr3bp import checked_distances, cr3bp_derivative, primary_distances
from navsim.services.integrators import rk4_step
from navsim.services.lft_model import (
    ParamPoint,
    clamp_to_box,
    measurement_C,
    measurement_d,
    plant_A,
    plant_b,
)
from navsim.services.sensing import BearingMeasurement, los_geometry, measure, reconstruct_ranges

logger = logging.getLogger(__name__)

RhoSource = Literal["measured", "estimate-fallback", "clamped"]


@dataclass(frozen=True)
class ScheduledRho:
    """Scheduling parameter actually fed to the observer, with its provenance"""
    rho: ParamPoint
    source: RhoSource
    residual: float          # closure residual, NaN on fallback
    conditioning: float      # 1 - c^2 of the renormalized bearings
    fallback: bool = False
    clamped: bool = False


@dataclass(frozen=True)
class ObserverState:
    x_hat: np.ndarray
    rho_used: ParamPoint
    rho_source: RhoSource
    residual: float


@dataclass(frozen=True)
class StepDiagnostics:
    """Everything recorded for one sample instant"""
    t: float
    truth: np.ndarray
    x_hat: np.ndarray
    y_m: np.ndarray
    schedule: ScheduledRho

    @property
    def error(self) -> np.ndarray:
        return self.truth - self.x_hat

    @property
    def observer_state(self) -> ObserverState:
        return ObserverState(self.x_hat, self.schedule.rho, self.schedule.source, self.schedule.residual)


class ExogenousSources:
    """Noise and disturbance sources sampled once per step."""

    def __init__(self, noise, disturbance: Optional[Callable[[float], np.ndarray]] = None):
        self.noise = noise
        self.disturbance = disturbance

    def at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        d = self.disturbance(t) if self.disturbance is not None else np.zeros(3)
        return np.asarray(self.noise.sample(t), dtype=float), np.asarray(d, dtype=float)


# ---------------------------------------------------------------------------
# Scheduling
# ---------------------------------------------------------------------------

def schedule_rho(
    y_m: BearingMeasurement,
    x_hat: np.ndarray,
    policy: ParamSchedulePolicy,
    box: ParamBox,
    mu: float = settings.EARTH_MOON_MU,
) -> ScheduledRho:
    """rho from measured bearings, falling back to the estimate's ranges.

    Never raises for geometry problems: collinear or inconsistent bearings
    resolve to the estimate-derived ranges.
    """
    e1, e2 = y_m.e1_meas, y_m.e2_meas
    n1, n2 = float(np.linalg.norm(e1)), float(np.linalg.norm(e2))
    conditioning = (
        los_geometry(e1 / n1, e2 / n2).conditioning if n1 > 0.0 and n2 > 0.0 else math.nan
    )

    fallback = False
    try:
        fix = reconstruct_ranges(e1, e2, policy.collinearity_threshold)
        rho = ParamPoint(fix.r1, fix.r2)
        residual = fix.geom.residual
    except (NearCollinear, NonPositiveRange):
        rho = ParamPoint(*primary_distances(x_hat, mu))
        residual = math.nan
        fallback = True

    clamped = False
    if policy.clamp:
        rho, clamped = clamp_to_box(rho, box)

    if clamped:
        source: RhoSource = "clamped"
    elif fallback:
        source = "estimate-fallback"
    else:
        source = "measured"
    return ScheduledRho(rho, source, residual, conditioning, fallback, clamped)


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

def observer_derivative(
    x_hat: np.ndarray,
    y_m: np.ndarray,
    rho: ParamPoint,
    L: np.ndarray,
    mu: float = settings.EARTH_MOON_MU,
) -> np.ndarray:
    x_hat = np.asarray(x_hat, dtype=float)
    A = plant_A(rho, mu)
    C = measurement_C(rho)
    innovation = np.asarray(y_m, dtype=float) - measurement_d(rho, mu)
    return (A + L @ C) @ x_hat - L @ innovation + plant_b(rho, mu)


def evaluate_stage(
    truth: np.ndarray,
    x_hat: np.ndarray,
    noise: np.ndarray,
    d: np.ndarray,
    L: np.ndarray,
    sc: Scenario,
) -> Tuple[np.ndarray, np.ndarray, BearingMeasurement, ScheduledRho]:
    """Truth derivative, observer derivative, measurement and schedule at one state pair."""
    checked_distances(truth, sc.mu, settings.PROXIMITY_GUARD_DU)
    meas = measure(truth, noise, sc.noise, sc.param_box, sc.mu)
    sched = schedule_rho(meas, x_hat, sc.schedule_policy, sc.param_box, sc.mu)
    dx = cr3bp_derivative(truth, sc.mu, d)
    dxh = observer_derivative(x_hat, meas.y_m, sched.rho, L, sc.mu)
    return dx, dxh, meas, sched


def diagnose(
    t: float,
    truth: np.ndarray,
    x_hat: np.ndarray,
    u: Tuple[np.ndarray, np.ndarray],
    L: np.ndarray,
    sc: Scenario,
) -> StepDiagnostics:
    _, _, meas, sched = evaluate_stage(truth, x_hat, u[0], u[1], L, sc)
    return StepDiagnostics(t, np.array(truth), np.array(x_hat), meas.y_m, sched)


def step_closed_loop(
    truth: np.ndarray,
    x_hat: np.ndarray,
    t: float,
    dt: float,
    L: np.ndarray,
    sources: ExogenousSources,
    sc: Scenario,
) -> Tuple[np.ndarray, np.ndarray, StepDiagnostics]:
    """Advance truth and estimate by one shared RK4 step.

    The returned diagnostics describe the step start (time t).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u = sources.at(t)

    def rhs(_t: float, z: np.ndarray, held) -> np.ndarray:
        dx, dxh, _, _ = evaluate_stage(z[:6], z[6:], held[0], held[1], L, sc)
        return np.concatenate([dx, dxh])

    diag = diagnose(t, truth, x_hat, u, L, sc)
    z = rk4_step(rhs, t, np.concatenate([truth, x_hat]), dt, u)
    return z[:6], z[6:], diag
