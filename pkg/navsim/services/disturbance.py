"""Process-disturbance accelerations d(t) for the truth model.

A fresh draw is made for each integrator macro-step and held across its
stages. Draws are cached per step index so truth propagation and
diagnostics see the same value.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from navsim.schemas.scenario import DisturbanceConfig

logger = logging.getLogger(__name__)


class DisturbanceSource:
    """Uniform (+/- amplitude) or Gaussian (sigma = amplitude) white accelerations"""

    def __init__(self, cfg: DisturbanceConfig, step: float):
        if step <= 0.0:
            raise ValueError("disturbance step must be positive")
        self.cfg = cfg
        self.step = step
        self._rng = np.random.default_rng(cfg.seed)
        self._index = -1
        self._value = np.zeros(3)

    def _draw(self) -> np.ndarray:
        a = self.cfg.amplitude
        if a == 0.0:
            return np.zeros(3)
        if self.cfg.distribution == "gaussian":
            return a * self._rng.standard_normal(3)
        return self._rng.uniform(-a, a, size=3)

    def at_index(self, k: int) -> np.ndarray:
        if k < self._index:
            raise ValueError(f"disturbance step {k} already passed (source is at {self._index})")
        while self._index < k:
            self._value = self._draw()
            self._index += 1
        return self._value.copy()

    def __call__(self, t: float) -> np.ndarray:
        """Held acceleration for the step containing t."""
        return self.at_index(int(math.floor(t / self.step + 1e-9)))


def disturbance_source(cfg: DisturbanceConfig, step: float) -> DisturbanceSource:
    logger.debug(
        f"Disturbance: {cfg.distribution} amplitude {cfg.amplitude:g}, seed {cfg.seed}, step {step:g} TU"
    )
    return DisturbanceSource(cfg, step)
