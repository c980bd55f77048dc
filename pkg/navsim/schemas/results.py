"""Pydantic schemas for run summaries"""

from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, computed_field, model_validator

from navsim.core.config import settings

ERROR_COMPONENTS = ("x", "y", "z", "vx", "vy", "vz")


class SummaryStats(BaseModel):
    """Error statistics of one closed-loop run (DU, DU/TU)"""

    samples: int = Field(ge=1)
    settle_time_tu: float = Field(ge=0.0)
    max_abs_error: List[float]
    rms_error: List[float]
    post_transient_max: List[float]
    fallback_count: int = Field(default=0, ge=0)
    clamp_count: int = Field(default=0, ge=0)
    error_trend_slope: Optional[float] = Field(
        default=None,
        description="Least-squares slope of the position error norm over the final window (DU/TU)",
    )
    error_trend_stderr: Optional[float] = Field(default=None, ge=0.0)

    @model_validator(mode="after")
    def _consistent(self) -> "SummaryStats":
        for name in ("max_abs_error", "rms_error", "post_transient_max"):
            if len(getattr(self, name)) != 6:
                raise ValueError(f"{name} must have 6 components")
        for mx, rms in zip(self.max_abs_error, self.rms_error):
            if not mx >= rms >= 0.0:
                raise ValueError(f"expected max >= rms >= 0, got {mx} and {rms}")
        return self

    @computed_field
    @property
    def max_abs_error_km(self) -> List[float]:
        return [v * settings.DU_KM for v in self.max_abs_error[:3]]

    @computed_field
    @property
    def post_transient_max_km(self) -> List[float]:
        return [v * settings.DU_KM for v in self.post_transient_max[:3]]

    @computed_field
    @property
    def largest_post_transient_axis(self) -> str:
        pos = self.post_transient_max[:3]
        return ERROR_COMPONENTS[pos.index(max(pos))]


class AggregateStats(BaseModel):
    """Per-component statistics across Monte Carlo runs"""

    max_post_transient: List[float]
    p95_post_transient: List[float]
    median_post_transient: List[float]
    max_abs_error: List[float]
    total_fallbacks: int = 0
    total_clamps: int = 0
    mean_trend_slope: Optional[float] = None
    trend_p_value: Optional[float] = Field(
        default=None,
        description="One-sided p-value for a positive mean final-window error slope across runs",
    )
    error_growth: bool = False

    @computed_field
    @property
    def max_post_transient_km(self) -> List[float]:
        return [v * settings.DU_KM for v in self.max_post_transient[:3]]


class MonteCarloSummary(BaseModel):
    n_runs: int = Field(ge=1)
    base_seed: int
    seeds: List[Tuple[int, int]]
    runs: List[SummaryStats]
    aggregate: AggregateStats
