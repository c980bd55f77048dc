"""Pydantic schema for the observer gain file"""

import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from navsim.schemas.scenario import ParamBox


class RestartRecord(BaseModel):
    """Outcome of one pattern-search start"""

    index: int
    pole_scale: float
    initial_objective: Optional[float] = None   # None when the start was not stabilizing
    final_objective: Optional[float] = None
    iterations: int = 0
    evaluations: int = 0


class SynthesisLog(BaseModel):
    """Objective trace of the winning start plus per-restart summaries"""

    restarts: List[RestartRecord] = Field(default_factory=list)
    trace: List[float] = Field(default_factory=list)
    densified_points: List[Tuple[float, float]] = Field(default_factory=list)
    iterations: int = 0
    final_objective: Optional[float] = None


class GridSpec(BaseModel):
    synthesis: Tuple[int, int]
    validation: Tuple[int, int]


class ObserverGain(BaseModel):
    """Static observer gain L with its grid certificate"""

    L: List[List[float]]
    gamma: float = Field(gt=0.0, description="Worst-case H-infinity norm over the validation grid")
    gamma_synthesis: float = Field(gt=0.0, description="Worst-case norm over the final synthesis grid")
    spectral_margin: float = Field(gt=0.0, description="-max Re(eig) over the validation grid")
    mu: float
    box: ParamBox
    grids: GridSpec
    config_hash: str
    log: SynthesisLog = Field(default_factory=SynthesisLog)

    @field_validator("L")
    @classmethod
    def _six_by_six(cls, v: List[List[float]]) -> List[List[float]]:
        if len(v) != 6 or any(len(row) != 6 for row in v):
            raise ValueError("L must be 6x6")
        if not all(math.isfinite(x) for row in v for x in row):
            raise ValueError("L entries must be finite")
        return v

    @field_validator("gamma", "gamma_synthesis")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("gamma must be finite")
        return v

    def matrix(self) -> np.ndarray:
        return np.asarray(self.L, dtype=float)
