"""Pydantic schemas for scenario configuration files"""

import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from navsim.core.config import settings

ARCSEC_TO_RAD = math.radians(1.0 / 3600.0)


class _Strict(BaseModel):
    """Base for every config block: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


# Sub-schemas

class ParamBox(_Strict):
    """Operating bounds of the scheduling parameters rho = (r1, r2) in DU"""

    r1_min: float = Field(default=0.9495, gt=0.0)
    r1_max: float = Field(default=1.1112, gt=0.0)
    r2_min: float = Field(default=0.0111, gt=0.0)
    r2_max: float = Field(default=0.2010, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "ParamBox":
        if self.r1_min >= self.r1_max:
            raise ValueError(f"ParamBox r1_min ({self.r1_min}) must be < r1_max ({self.r1_max})")
        if self.r2_min >= self.r2_max:
            raise ValueError(f"ParamBox r2_min ({self.r2_min}) must be < r2_max ({self.r2_max})")
        return self

    @property
    def r1_bounds(self) -> Tuple[float, float]:
        return self.r1_min, self.r1_max

    @property
    def r2_bounds(self) -> Tuple[float, float]:
        return self.r2_min, self.r2_max

    def contains_box(self, other: "ParamBox") -> bool:
        """True if `other` lies inside this box (edges included)."""
        return (
            self.r1_min <= other.r1_min and other.r1_max <= self.r1_max
            and self.r2_min <= other.r2_min and other.r2_max <= self.r2_max
        )


class IntegratorConfig(_Strict):
    """Numerical integration settings"""

    method: Literal["rk4", "rkf45"] = "rk4"
    step: float = Field(default=1e-3, gt=0.0, description="Fixed RK4 step / initial RKF45 step (TU)")
    abs_tol: float = Field(default=1e-12, gt=0.0)
    rel_tol: float = Field(default=1e-12, gt=0.0)
    max_step: float = Field(default=0.05, gt=0.0, description="Largest RKF45 step (TU)")


class NoiseModelConfig(_Strict):
    """Bearing noise: range-weighted, band-limited white noise"""

    eta_min_arcsec: float = Field(default=50.0, gt=0.0)
    eta_max_arcsec: float = Field(default=500.0, gt=0.0)
    weighting: Literal["linear", "proportional"] = "linear"
    cutoff_hz: float = Field(default=0.1, gt=0.0, description="Shaping filter cutoff, physical Hz")
    sample_rate: Optional[float] = Field(
        default=None, gt=0.0, description="Samples per TU; defaults to the integrator grid"
    )
    sampling: Literal["interval-average", "point"] = Field(
        default="interval-average",
        description="Held sample is the average of the band-limited noise over its hold interval, or a point value",
    )
    seed: int = Field(default=1, ge=0)
    enabled: bool = True

    @model_validator(mode="after")
    def _ordered(self) -> "NoiseModelConfig":
        if self.eta_min_arcsec > self.eta_max_arcsec:
            raise ValueError("eta_min_arcsec must not exceed eta_max_arcsec")
        return self

    @property
    def eta_min_rad(self) -> float:
        return self.eta_min_arcsec * ARCSEC_TO_RAD

    @property
    def eta_max_rad(self) -> float:
        return self.eta_max_arcsec * ARCSEC_TO_RAD


class DisturbanceConfig(_Strict):
    """Process disturbance accelerations d(t) entering the velocity rows"""

    distribution: Literal["uniform", "gaussian"] = "uniform"
    amplitude: float = Field(default=0.01, ge=0.0, description="Uniform half-width or Gaussian sigma")
    seed: int = Field(default=2, ge=0)

    @property
    def sigma(self) -> float:
        """Per-draw standard deviation of each component"""
        if self.distribution == "gaussian":
            return self.amplitude
        return self.amplitude / math.sqrt(3.0)


class ParamSchedulePolicy(_Strict):
    """How rho is scheduled from bearings at runtime"""

    collinearity_threshold: float = Field(default=settings.COLLINEARITY_THRESHOLD, gt=0.0)
    clamp: bool = True


class SynthesisConfig(_Strict):
    """Observer gain synthesis settings"""

    synthesis_grid: Tuple[int, int] = (3, 3)
    validation_grid: Tuple[int, int] = (7, 7)
    gamma_tol: float = Field(default=1e-6, gt=0.0, description="Certification bisection tolerance")
    optimizer_gamma_tol: float = Field(default=1e-4, gt=0.0, description="Bisection tolerance inside the search")
    restarts: int = Field(default=5, ge=1)
    max_iterations: int = Field(default=200, ge=1, description="Pattern-search polls per restart")
    convergence_tol: float = Field(default=1e-3, gt=0.0, description="Smallest relative poll step")
    initial_step: float = Field(default=0.5, gt=0.0, description="First relative poll step")
    pole_scale: float = Field(default=3.0, gt=0.0, description="Initial observer bandwidth (rad/TU)")
    max_pole_magnitude: float = Field(default=1000.0, gt=0.0)
    max_densify: int = Field(default=2, ge=0)
    adequacy_ratio: float = Field(default=1.1, ge=1.0)
    seed: int = Field(default=0, ge=0)

    @field_validator("synthesis_grid", "validation_grid")
    @classmethod
    def _grid_dims(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        if min(v) < 2:
            raise ValueError("grid densities must be >= 2")
        return v


# Top-level scenario

NRHO_INITIAL_STATE = [1.02950089, 0.0, -0.18680810, 0.0, -0.11898000, 0.0]
NRHO_INITIAL_ERROR = [0.26e-4, -0.13e-4, 0.13e-4, 0.68e-4, -0.29e-4, 0.29e-4]


class Scenario(_Strict):
    """Complete experiment configuration"""

    mu: float = Field(default=settings.EARTH_MOON_MU, gt=0.0, lt=0.5)
    initial_state: List[float] = Field(default_factory=lambda: list(NRHO_INITIAL_STATE))
    initial_estimate_error: List[float] = Field(default_factory=lambda: list(NRHO_INITIAL_ERROR))
    duration_tu: float = Field(default=3.0, gt=0.0)
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    param_box: ParamBox = Field(default_factory=ParamBox)
    noise: NoiseModelConfig = Field(default_factory=NoiseModelConfig)
    disturbance: DisturbanceConfig = Field(default_factory=DisturbanceConfig)
    schedule_policy: ParamSchedulePolicy = Field(default_factory=ParamSchedulePolicy)
    synthesis: SynthesisConfig = Field(default_factory=SynthesisConfig)
    settle_time_tu: float = Field(default=settings.SETTLE_TIME_TU, ge=0.0)

    @field_validator("initial_state", "initial_estimate_error")
    @classmethod
    def _six_finite(cls, v: List[float]) -> List[float]:
        if len(v) != 6:
            raise ValueError(f"expected 6 components, got {len(v)}")
        if not all(math.isfinite(x) for x in v):
            raise ValueError("components must be finite")
        return v

    @property
    def noise_sample_rate(self) -> float:
        """Noise samples per TU (the integrator grid unless configured)."""
        return self.noise.sample_rate or 1.0 / self.integrator.step
