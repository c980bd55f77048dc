"""Bearing-only sensing: line-of-sight measurements and range recovery.

The spacecraft observes the unit directions to Earth (e1) and Moon (e2). The
Earth-Moon baseline e_x = (1, 0, 0) closes the triangle

    r2 * e2 - r1 * e1 = e_x

so two bearings determine both ranges whenever the geometry is not collinear.

USAGE:
    from navsim.services.sensing import measure, reconstruct_ranges, shaped_noise_source

    source = shaped_noise_source(scenario.noise, scenario.noise_sample_rate)
    meas = measure(s, source.sample(t), scenario.noise, scenario.param_box, mu)
    r1, r2, geom = reconstruct_ranges(meas.e1_meas, meas.e2_meas)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from navsim.core.config import settings
from navsim.core.errors import DegenerateDistance, NearCollinear, NonPositiveRange
from navsim.schemas.scenario import NoiseModelConfig, ParamBox
from navsim.services.cr3bp import DEFAULT_MU, primary_distances
from navsim.services.lft_model import ParamPoint, noise_weights

logger = logging.getLogger(__name__)

BASELINE = np.array([1.0, 0.0, 0.0])

_NOISE_BLOCK = 4096

Sampling = Literal["interval-average", "point"]


@dataclass(frozen=True)
class BearingMeasurement:
    """Noisy line-of-sight vectors (spacecraft to Earth, spacecraft to Moon)"""
    e1_meas: np.ndarray
    e2_meas: np.ndarray

    @property
    def y_m(self) -> np.ndarray:
        return np.concatenate([self.e1_meas, self.e2_meas])

    @classmethod
    def from_vector(cls, y_m: Sequence[float]) -> "BearingMeasurement":
        y = np.asarray(y_m, dtype=float)
        return cls(e1_meas=y[0:3].copy(), e2_meas=y[3:6].copy())


@dataclass(frozen=True)
class LosGeometry:
    """Dot products of the (renormalized) bearings with each other and the baseline"""
    c: float
    alpha: float
    beta: float
    conditioning: float   # 1 - c^2
    residual: float = 0.0


class RangeFix(NamedTuple):
    r1: float
    r2: float
    geom: LosGeometry


# ---------------------------------------------------------------------------
# Measurement model
# ---------------------------------------------------------------------------

def unit_vectors(s: Sequence[float], mu: float = DEFAULT_MU) -> Tuple[np.ndarray, np.ndarray]:
    """Unit vectors from the spacecraft toward Earth and Moon.

    Raises:
        DegenerateDistance: if the spacecraft sits on a primary.
    """
    r1, r2 = primary_distances(s, mu)
    if r1 <= 0.0 or r2 <= 0.0:
        raise DegenerateDistance(f"unit vector undefined (r1={r1:.3e}, r2={r2:.3e})")
    x, y, z = float(s[0]), float(s[1]), float(s[2])
    e1 = -np.array([x + mu, y, z]) / r1
    e2 = -np.array([x - (1.0 - mu), y, z]) / r2
    return e1, e2


def measure(
    s: Sequence[float],
    noise: Optional[Sequence[float]],
    cfg: NoiseModelConfig,
    box: ParamBox,
    mu: float = DEFAULT_MU,
) -> BearingMeasurement:
    """y_m = (e1; e2) + blkdiag(W1(r1) I3, W2(r2) I3) * noise

    ``noise`` is a 6-vector of unit-variance samples; None means noiseless.
    """
    e1, e2 = unit_vectors(s, mu)
    if noise is None:
        return BearingMeasurement(e1, e2)

    n = np.asarray(noise, dtype=float)
    rho = ParamPoint(*primary_distances(s, mu))
    w1, w2 = noise_weights(rho, cfg.eta_min_rad, cfg.eta_max_rad, box, cfg.weighting)
    return BearingMeasurement(e1 + w1 * n[0:3], e2 + w2 * n[3:6])


# ---------------------------------------------------------------------------
# Shaped noise
# ---------------------------------------------------------------------------

def _decay(cutoff_hz: float, sample_rate: float) -> float:
    """Sample interval over filter correlation time"""
    return 2.0 * math.pi * cutoff_hz * settings.TU_SECONDS / sample_rate


def filter_pole(cutoff_hz: float, sample_rate: float) -> float:
    """Discrete pole of the first-order low-pass at the given physical cutoff.

    The cutoff is converted from physical Hz to cycles per TU before
    discretization at ``sample_rate`` samples per TU.
    """
    return math.exp(-_decay(cutoff_hz, sample_rate))


def hold_average_variance(cutoff_hz: float, sample_rate: float) -> float:
    """Variance of the hold-interval mean of unit-variance first-order low-pass noise.

    With correlation time tau and hold interval T, x = T / tau:

        var = (2 / x) * (1 - (1 - exp(-x)) / x)

    which is ~1 when the filter is resolved by the grid and ~2 tau / T once
    the noise decorrelates many times within one hold.
    """
    x = _decay(cutoff_hz, sample_rate)
    if x < 1e-6:
        return 1.0 - x / 3.0
    return 2.0 / x * (1.0 - (1.0 - math.exp(-x)) / x)


class ShapedNoiseSource:
    """Six channels of low-pass filtered Gaussian noise, held between samples.

    The underlying continuous noise has unit variance. With
    ``sampling="interval-average"`` each held sample is the mean of that noise
    over its hold interval, so its variance is hold_average_variance();
    ``"point"`` keeps unit-variance point samples. Samples are indexed by
    k = floor(t * sample_rate) and generated in blocks; requesting one from a
    block that has already been dropped raises ValueError.
    """

    def __init__(
        self,
        cutoff_hz: float,
        sample_rate: float,
        seed: int,
        channels: int = 6,
        sampling: Sampling = "point",
    ):
        if sample_rate <= 0.0:
            raise ValueError("sample_rate must be positive")
        self.sample_rate = sample_rate
        self.channels = channels
        self.seed = seed
        self.sampling = sampling
        self.pole = filter_pole(cutoff_hz, sample_rate)
        self.std = 1.0
        if sampling == "interval-average":
            self.std = math.sqrt(hold_average_variance(cutoff_hz, sample_rate))
        self._gain = self.std * math.sqrt(1.0 - self.pole ** 2)
        self._rng = np.random.default_rng(seed)
        # stationary start: the state before sample 0 already has the target variance
        self._zi = self.std * self.pole * self._rng.standard_normal((1, channels))
        self._block = np.empty((0, channels))
        self._block_start = 0

        if self.pole < 1e-12:
            logger.debug(
                f"Noise cutoff {cutoff_hz} Hz exceeds Nyquist at {sample_rate:.1f} samples/TU; "
                f"samples are white with std {self.std:.4g}"
            )

    def index(self, t: float) -> int:
        return int(math.floor(t * self.sample_rate + 1e-9))

    def _advance(self) -> None:
        w = self._rng.standard_normal((_NOISE_BLOCK, self.channels))
        x, self._zi = lfilter([self._gain], [1.0, -self.pole], w, axis=0, zi=self._zi)
        self._block_start += len(self._block)
        self._block = x

    def at_index(self, k: int) -> np.ndarray:
        if k < self._block_start:
            raise ValueError(f"noise sample {k} already discarded (source is at {self._block_start})")
        while k >= self._block_start + len(self._block):
            self._advance()
        return self._block[k - self._block_start].copy()

    def sample(self, t: float) -> np.ndarray:
        """Zero-order-held 6-vector at time t (TU)."""
        return self.at_index(self.index(t))

    def samples(self, n: int) -> np.ndarray:
        """The next n consecutive samples as an (n, channels) array."""
        k0 = self._block_start + len(self._block)
        return np.vstack([self.at_index(k0 + i) for i in range(n)])


class SilentNoiseSource:
    """Stand-in used when measurement noise is disabled."""

    def __init__(self, channels: int = 6):
        self.channels = channels

    def sample(self, t: float) -> np.ndarray:
        return np.zeros(self.channels)


def shaped_noise_source(cfg: NoiseModelConfig, sample_rate: Optional[float] = None):
    """Build the noise source described by ``cfg``."""
    if not cfg.enabled:
        return SilentNoiseSource()
    rate = sample_rate or cfg.sample_rate
    if rate is None:
        raise ValueError("noise sample_rate must be given when the config leaves it unset")
    return ShapedNoiseSource(cfg.cutoff_hz, rate, cfg.seed, sampling=cfg.sampling)


# ---------------------------------------------------------------------------
# Range recovery
# ---------------------------------------------------------------------------

def _unit(v: Sequence[float]) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not math.isfinite(n):
        raise NonPositiveRange(f"bearing has norm {n}")
    return v / n


def closure_residual(r1: float, r2: float, e1: Sequence[float], e2: Sequence[float]) -> float:
    """|e_x - (r2 e2 - r1 e1)|, zero for a geometrically consistent triple."""
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    return float(np.linalg.norm(BASELINE - (r2 * e2 - r1 * e1)))


def los_geometry(e1: Sequence[float], e2: Sequence[float]) -> LosGeometry:
    """Scalars c, alpha, beta of two unit bearings."""
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    c = float(e1 @ e2)
    return LosGeometry(c=c, alpha=float(e1[0]), beta=float(e2[0]), conditioning=1.0 - c * c)


def reconstruct_ranges(
    e1: Sequence[float],
    e2: Sequence[float],
    threshold: float = settings.COLLINEARITY_THRESHOLD,
) -> RangeFix:
    """Closed-form r1, r2 from two bearings.

    Bearings are renormalized first so noisy inputs are accepted.

    Raises:
        NearCollinear: if 1 - c^2 < threshold.
        NonPositiveRange: if either recovered range is not positive.
    """
    u1 = _unit(e1)
    u2 = _unit(e2)
    geom = los_geometry(u1, u2)
    if geom.conditioning < threshold:
        raise NearCollinear(geom.conditioning, threshold)

    r1 = (geom.c * geom.beta - geom.alpha) / geom.conditioning
    r2 = (geom.beta - geom.c * geom.alpha) / geom.conditioning
    if r1 <= 0.0 or r2 <= 0.0:
        raise NonPositiveRange(f"reconstructed ranges r1={r1:.6g}, r2={r2:.6g}")

    residual = closure_residual(r1, r2, u1, u2)
    return RangeFix(
        r1, r2,
        LosGeometry(geom.c, geom.alpha, geom.beta, geom.conditioning, residual),
    )
