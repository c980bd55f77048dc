"""Parameter-dependent plant and measurement matrices.

The CR3BP is exactly linear in the state once rho = (r1, r2) is frozen:

    xdot = A(rho) x + B_w w + b(rho)
    y_m  = C_y(rho) x + D_w(rho) w + d(rho)
    z    = C_z x

with w = (d_x, d_y, d_z, n_1..n_6). Everything here is a pure function of
its arguments.

The generic LFT evaluation is kept to the depth needed to express a
multiplicatively uncertain range r = rbar(1 + delta*rtilde) and check it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from navsim.core.config import settings
from navsim.core.errors import IllPosed
from navsim.schemas.scenario import NoiseModelConfig, ParamBox

logger = logging.getLogger(__name__)

N_STATE = 6
N_EXO = 9       # 3 disturbance accelerations + 6 noise channels
N_MEAS = 6
N_PERF = 3

Weighting = Literal["linear", "proportional"]


@dataclass(frozen=True)
class ParamPoint:
    """Scheduling parameter rho = (r1, r2), DU"""
    r1: float
    r2: float

    def __post_init__(self):
        if not (self.r1 > 0.0 and self.r2 > 0.0):
            raise ValueError(f"ParamPoint requires positive ranges, got ({self.r1}, {self.r2})")

    def as_tuple(self) -> Tuple[float, float]:
        return self.r1, self.r2


@dataclass(frozen=True)
class UncertainParam:
    """r = nominal * (1 + delta * spread)"""
    nominal: float
    spread: float
    delta: float
    out_of_box: bool = False


@dataclass(frozen=True)
class PlantMatrices:
    """Frozen-rho realization"""
    A: np.ndarray     # 6x6
    b: np.ndarray     # 6
    B_w: np.ndarray   # 6x9
    C_y: np.ndarray   # 6x6
    D_w: np.ndarray   # 6x9
    d: np.ndarray     # 6
    C_z: np.ndarray   # 3x6


@dataclass(frozen=True)
class LftBlock:
    """Partitioned constant matrix M closed by Delta on its upper channel"""
    M11: np.ndarray
    M12: np.ndarray
    M21: np.ndarray
    M22: np.ndarray


# ---------------------------------------------------------------------------
# Box helpers
# ---------------------------------------------------------------------------

def box_center(box: ParamBox) -> ParamPoint:
    return ParamPoint(0.5 * (box.r1_min + box.r1_max), 0.5 * (box.r2_min + box.r2_max))


def box_contains(box: ParamBox, rho: ParamPoint) -> bool:
    return box.r1_min <= rho.r1 <= box.r1_max and box.r2_min <= rho.r2 <= box.r2_max


def clamp_to_box(rho: ParamPoint, box: ParamBox) -> Tuple[ParamPoint, bool]:
    """Project rho onto the box. The flag is True when clamping changed it."""
    r1 = min(max(rho.r1, box.r1_min), box.r1_max)
    r2 = min(max(rho.r2, box.r2_min), box.r2_max)
    clamped = (r1, r2) != (rho.r1, rho.r2)
    return (ParamPoint(r1, r2) if clamped else rho), clamped


def param_grid(box: ParamBox, n1: int, n2: int) -> List[ParamPoint]:
    """Uniform n1 x n2 grid over the box, vertices included, r1-major order."""
    if n1 < 2 or n2 < 2:
        raise ValueError("grid densities must be >= 2")
    r1s = np.linspace(box.r1_min, box.r1_max, n1)
    r2s = np.linspace(box.r2_min, box.r2_max, n2)
    return [ParamPoint(float(a), float(b)) for a in r1s for b in r2s]


# ---------------------------------------------------------------------------
# Plant
# ---------------------------------------------------------------------------

def coupling_terms(rho: ParamPoint, mu: float) -> Tuple[float, float, float]:
    """(a41, a63, b4); a52 equals a41."""
    inv1 = 1.0 / rho.r1 ** 3
    inv2 = 1.0 / rho.r2 ** 3
    a63 = (mu - 1.0) * inv1 - mu * inv2
    return a63 + 1.0, a63, mu * (1.0 - mu) * (inv2 - inv1)


def plant_A(rho: ParamPoint, mu: float = settings.EARTH_MOON_MU) -> np.ndarray:
    a41, a63, _ = coupling_terms(rho, mu)
    A = np.zeros((N_STATE, N_STATE))
    A[0:3, 3:6] = np.eye(3)
    A[3, 0] = a41
    A[4, 1] = a41
    A[5, 2] = a63
    # Coriolis block A22
    A[3, 4] = 2.0
    A[4, 3] = -2.0
    return A


def plant_b(rho: ParamPoint, mu: float = settings.EARTH_MOON_MU) -> np.ndarray:
    b = np.zeros(N_STATE)
    b[3] = coupling_terms(rho, mu)[2]
    return b


def measurement_C(rho: ParamPoint) -> np.ndarray:
    C = np.zeros((N_MEAS, N_STATE))
    C[0:3, 0:3] = -np.eye(3) / rho.r1
    C[3:6, 0:3] = -np.eye(3) / rho.r2
    return C


def measurement_d(rho: ParamPoint, mu: float = settings.EARTH_MOON_MU) -> np.ndarray:
    d = np.zeros(N_MEAS)
    d[0] = -mu / rho.r1
    d[3] = (1.0 - mu) / rho.r2
    return d


def input_B_w() -> np.ndarray:
    B = np.zeros((N_STATE, N_EXO))
    B[3:6, 0:3] = np.eye(3)
    return B


def output_C_z() -> np.ndarray:
    C = np.zeros((N_PERF, N_STATE))
    C[:, 0:3] = np.eye(3)
    return C


def noise_weights(
    rho: ParamPoint,
    eta_min: float,
    eta_max: float,
    box: ParamBox,
    weighting: Weighting = "linear",
) -> Tuple[float, float]:
    """Range-dependent noise weights (W1(r1), W2(r2)) in radians.

    Ranges are clamped into the box first. ``linear`` interpolates from eta_min
    at r_min to eta_max at r_max; ``proportional`` scales W_k = eta_max * r / r_max.
    """
    rho, _ = clamp_to_box(rho, box)
    if weighting == "proportional":
        return eta_max * rho.r1 / box.r1_max, eta_max * rho.r2 / box.r2_max

    def lerp(r: float, lo: float, hi: float) -> float:
        return eta_min + (r - lo) / (hi - lo) * (eta_max - eta_min)

    return lerp(rho.r1, box.r1_min, box.r1_max), lerp(rho.r2, box.r2_min, box.r2_max)


def noise_D(
    rho: ParamPoint,
    eta_min: float,
    eta_max: float,
    box: ParamBox,
    weighting: Weighting = "linear",
) -> np.ndarray:
    """D_w = [0_6x3  blkdiag(W1 I3, W2 I3)]"""
    w1, w2 = noise_weights(rho, eta_min, eta_max, box, weighting)
    D = np.zeros((N_MEAS, N_EXO))
    D[0:3, 3:6] = w1 * np.eye(3)
    D[3:6, 6:9] = w2 * np.eye(3)
    return D


class PlantModel:
    """Everything needed to evaluate the LPV matrices at a frozen rho.

    ``input_scale`` (9 entries, default ones) is the intensity of each w
    channel as seen by the synthesis objective: w = diag(input_scale) w_bar
    with w_bar unit-intensity white noise. It does not enter B_w or D_w.
    """

    def __init__(
        self,
        mu: float,
        box: ParamBox,
        noise: NoiseModelConfig,
        input_scale: Optional[Sequence[float]] = None,
    ):
        self.mu = mu
        self.box = box
        self.eta_min = noise.eta_min_rad
        self.eta_max = noise.eta_max_rad
        self.weighting: Weighting = noise.weighting
        self.input_scale = np.ones(N_EXO) if input_scale is None else np.asarray(input_scale, dtype=float)
        if self.input_scale.shape != (N_EXO,) or np.any(self.input_scale < 0.0):
            raise ValueError(f"input_scale must hold {N_EXO} non-negative entries")
        self._B_w = input_B_w()
        self._C_z = output_C_z()

    def weights(self, rho: ParamPoint) -> Tuple[float, float]:
        return noise_weights(rho, self.eta_min, self.eta_max, self.box, self.weighting)

    def matrices(self, rho: ParamPoint) -> PlantMatrices:
        return PlantMatrices(
            A=plant_A(rho, self.mu),
            b=plant_b(rho, self.mu),
            B_w=self._B_w,
            C_y=measurement_C(rho),
            D_w=noise_D(rho, self.eta_min, self.eta_max, self.box, self.weighting),
            d=measurement_d(rho, self.mu),
            C_z=self._C_z,
        )


# ---------------------------------------------------------------------------
# Multiplicative uncertainty and LFT evaluation
# ---------------------------------------------------------------------------

def normalize_param(r: float, lo: float, hi: float) -> UncertainParam:
    """Express r in [lo, hi] as nominal*(1 + delta*spread) with delta in [-1, 1]."""
    if not lo < hi:
        raise ValueError(f"normalize_param requires lo < hi, got [{lo}, {hi}]")
    nominal = 0.5 * (lo + hi)
    spread = (hi - lo) / (hi + lo)
    delta = (r - nominal) / (nominal * spread)
    return UncertainParam(nominal, spread, delta, out_of_box=abs(delta) > 1.0)


def denormalize(p: UncertainParam) -> float:
    return p.nominal * (1.0 + p.delta * p.spread)


def multiplicative_block(nominal: float, spread: float) -> LftBlock:
    """Scalar LFT whose upper closure with delta gives nominal*(1 + delta*spread)."""
    return LftBlock(
        M11=np.zeros((1, 1)),
        M12=np.ones((1, 1)),
        M21=np.array([[nominal * spread]]),
        M22=np.array([[nominal]]),
    )


def lft_eval(M: LftBlock, Delta: np.ndarray) -> np.ndarray:
    """M22 + M21 Delta (I - M11 Delta)^-1 M12

    Raises:
        IllPosed: if I - M11 Delta is singular (condition number above
            settings.ILL_POSED_CONDITION).
    """
    M11 = np.atleast_2d(np.asarray(M.M11, dtype=float))
    M12 = np.atleast_2d(np.asarray(M.M12, dtype=float))
    M21 = np.atleast_2d(np.asarray(M.M21, dtype=float))
    M22 = np.atleast_2d(np.asarray(M.M22, dtype=float))
    Delta = np.atleast_2d(np.asarray(Delta, dtype=float))
    if M11.shape[1] != Delta.shape[0] or Delta.shape[1] != M11.shape[0]:
        raise ValueError(f"Delta shape {Delta.shape} incompatible with M11 shape {M11.shape}")

    F = np.eye(M11.shape[0]) - M11 @ Delta
    cond = np.linalg.cond(F)
    if not np.isfinite(cond) or cond > settings.ILL_POSED_CONDITION:
        raise IllPosed(f"I - M11*Delta is singular (cond = {cond:.3e})")
    return M22 + M21 @ Delta @ np.linalg.solve(F, M12)


def lpv_residual(s: Sequence[float], rho: ParamPoint, mu: float) -> np.ndarray:
    """A(rho) s + b(rho); equals the CR3BP vector field when rho = rho(s)."""
    s = np.asarray(s, dtype=float)
    return plant_A(rho, mu) @ s + plant_b(rho, mu)


LPV_ROUNDING_ULPS = 16


def lpv_tolerance(s: Sequence[float], rho: ParamPoint, mu: float, rel: float = 1e-12) -> np.ndarray:
    """Per-row bound on |f(s) - (A(rho) s + b(rho))| at rho = rho(s).

    Near the Moon a41*x and b4 are each ~1e4 and cancel to a value near
    zero, so the achievable accuracy scales with |A| |s| + |b|, not with |f|.
    """
    s = np.asarray(s, dtype=float)
    A, b = plant_A(rho, mu), plant_b(rho, mu)
    f = A @ s + b
    terms = np.abs(A) @ np.abs(s) + np.abs(b)
    return rel * np.maximum(1.0, np.abs(f)) + LPV_ROUNDING_ULPS * np.finfo(float).eps * terms
