"""Robust observer gain synthesis over a gridded parameter box.

The observer error e = x - x_hat obeys, at every frozen rho,

    e' = (A(rho) + L C_y(rho)) e + (B_w + L D_w(rho)) w
    z  = C_z e

with w = diag(input_scale) w_bar, where w_bar has unit intensity on every
channel and input_scale carries each channel's continuous-equivalent
intensity (see PlantModel). The gain L is chosen to minimize the worst
H-infinity norm of w_bar -> z over a synthesis grid. The result is
certified on a denser validation grid; if the two disagree by more than
``adequacy_ratio`` the worst validation point is added to the synthesis grid
and the search resumes.

The search itself is a derivative-free compass (pattern) search over the 36
entries of L, started from pole-placement designs at the box center.
Non-stabilizing gains score +inf, so the search never leaves the stable set
once inside it.

USAGE:
    from navsim.services.synthesis import synthesize_gain

    model = plant_model(scenario)      # navsim.services.simulation
    gain = synthesize_gain(scenario.synthesis, scenario.param_box, model)
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.signal import place_poles

from navsim.core.config import settings
from navsim.core.errors import NotObservable, SynthesisFailed, Unstable
from navsim.schemas.gain import GridSpec, ObserverGain, RestartRecord, SynthesisLog
from navsim.schemas.scenario import ParamBox, SynthesisConfig
from navsim.services.hinf_norm import hinf_norm_with_frequency
from navsim.services.lft_model import (
    N_EXO,
    N_PERF,
    N_STATE,
    ParamPoint,
    PlantModel,
    box_center,
    measurement_C,
    param_grid,
    plant_A,
)

logger = logging.getLogger(__name__)

# relative pole pattern for the initial design, scaled by pole_scale
_POLE_PATTERN = (1.0, 1.2, 1.4, 1.6, 1.8, 2.0)
_RESTART_SCALES = (1.0, 0.5, 2.0, 0.25, 4.0)
_PERTURBATION = 0.2
_STEP_FLOOR = 1e-2
_STABILITY_TARGET = 1e-2   # required spectral margin before the norm search starts


@dataclass(frozen=True)
class ErrorSystem:
    """Frozen-rho estimation error dynamics"""
    A_e: np.ndarray   # 6x6
    B_e: np.ndarray   # 6x9
    C_e: np.ndarray   # 3x6
    D_e: np.ndarray   # 3x9

    # StateSpace-compatible view used by the norm evaluator
    @property
    def A(self) -> np.ndarray:
        return self.A_e

    @property
    def B(self) -> np.ndarray:
        return self.B_e

    @property
    def C(self) -> np.ndarray:
        return self.C_e

    @property
    def D(self) -> np.ndarray:
        return self.D_e


def error_system(rho: ParamPoint, L: np.ndarray, model: PlantModel) -> ErrorSystem:
    """Error dynamics at rho, driven by unit-intensity w scaled by model.input_scale."""
    m = model.matrices(rho)
    L = np.asarray(L, dtype=float)
    return ErrorSystem(
        A_e=m.A + L @ m.C_y,
        B_e=(m.B_w + L @ m.D_w) * model.input_scale,
        C_e=m.C_z,
        D_e=np.zeros((N_PERF, N_EXO)),
    )


# ---------------------------------------------------------------------------
# Grid evaluation
# ---------------------------------------------------------------------------

def closed_loop_spectrum(L: np.ndarray, grid: Sequence[ParamPoint], model: PlantModel) -> Tuple[float, float]:
    """(max spectral abscissa, max spectral radius) of A + L C_y over the grid."""
    abscissa = -math.inf
    radius = 0.0
    for rho in grid:
        eig = linalg.eigvals(error_system(rho, L, model).A_e)
        abscissa = max(abscissa, float(np.max(eig.real)))
        radius = max(radius, float(np.max(np.abs(eig))))
    return abscissa, radius


def grid_gammas(
    L: np.ndarray,
    grid: Sequence[ParamPoint],
    model: PlantModel,
    tol: float = 1e-6,
) -> np.ndarray:
    """Per-point H-infinity norm, +inf where the error dynamics are unstable."""
    out = np.empty(len(grid))
    for i, rho in enumerate(grid):
        try:
            out[i] = hinf_norm_with_frequency(error_system(rho, L, model), tol)[0]
        except Unstable:
            out[i] = math.inf
    return out


def _scan(
    L: np.ndarray,
    grid: Sequence[ParamPoint],
    model: PlantModel,
    tol: float,
    stop_above: Optional[float],
) -> Tuple[float, int]:
    """Worst gamma over the grid and the index where it occurs."""
    systems = [error_system(rho, L, model) for rho in grid]
    for i, sys in enumerate(systems):
        if float(np.max(linalg.eigvals(sys.A_e).real)) >= -settings.HURWITZ_MARGIN:
            return math.inf, i

    worst, worst_i = 0.0, 0
    for i, sys in enumerate(systems):
        try:
            g, _ = hinf_norm_with_frequency(sys, tol, stop_above=stop_above)
        except Unstable:
            return math.inf, i
        if g > worst:
            worst, worst_i = g, i
        if stop_above is not None and worst > stop_above:
            break
    return worst, worst_i


def worst_case_gamma(
    L: np.ndarray,
    grid: Sequence[ParamPoint],
    model: PlantModel,
    tol: float = 1e-6,
    stop_above: Optional[float] = None,
) -> float:
    """max over the grid of the error-system norm; +inf if any point is unstable.

    With ``stop_above`` the scan may stop early and return a lower bound once
    that bound exceeds the threshold.
    """
    return _scan(L, grid, model, tol, stop_above)[0]


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def observability_rank(A: np.ndarray, C: np.ndarray) -> int:
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return int(np.linalg.matrix_rank(np.vstack(blocks)))


def initial_gain(model: PlantModel, rho_nominal: ParamPoint, pole_scale: float) -> np.ndarray:
    """Pole-placement observer at the nominal parameter.

    The position-output design L_r (A + L_r [I 0] has poles at
    -pole_scale * (1.0 .. 2.0)) is split across the Earth and Moon bearing
    channels in inverse proportion to their noise level.

    Raises:
        NotObservable: if (A(rho), C_y(rho)) is rank deficient.
    """
    A = plant_A(rho_nominal, model.mu)
    C = measurement_C(rho_nominal)
    rank = observability_rank(A, C)
    if rank < N_STATE:
        raise NotObservable(
            f"observability rank {rank} < {N_STATE} at rho = ({rho_nominal.r1:.4f}, {rho_nominal.r2:.4f})"
        )

    Cr = np.hstack([np.eye(3), np.zeros((3, 3))])
    poles = -pole_scale * np.asarray(_POLE_PATTERN)
    K = place_poles(A.T, Cr.T, poles).gain_matrix
    L_r = -K.T

    w1, w2 = model.weights(rho_nominal)
    q1 = 1.0 / (rho_nominal.r1 * w1) ** 2
    q2 = 1.0 / (rho_nominal.r2 * w2) ** 2
    om1, om2 = q1 / (q1 + q2), q2 / (q1 + q2)
    return -np.hstack([om1 * rho_nominal.r1 * L_r, om2 * rho_nominal.r2 * L_r])


# ---------------------------------------------------------------------------
# Pattern search
# ---------------------------------------------------------------------------

Objective = Callable[[np.ndarray, Optional[float]], float]


@dataclass
class SearchResult:
    x: np.ndarray
    value: float
    iterations: int = 0
    evaluations: int = 0
    trace: List[float] = field(default_factory=list)


def pattern_search(
    f: Objective,
    x0: np.ndarray,
    initial_step: float,
    convergence_tol: float,
    max_iterations: int,
    target: Optional[float] = None,
) -> SearchResult:
    """Opportunistic compass search with relative per-coordinate steps.

    A poll tries +/- delta * (|x_i| + floor) on each coordinate in turn and
    keeps any strict improvement. A poll with no improvement halves delta.
    The search stops early once the objective drops below ``target``.
    """
    x = np.asarray(x0, dtype=float).ravel().copy()
    fx = f(x, None)
    result = SearchResult(x=x.copy(), value=fx, evaluations=1, trace=[fx])
    if not math.isfinite(fx):
        return result

    floor = _STEP_FLOOR * max(float(np.max(np.abs(x))), 1.0)
    delta = initial_step
    while result.iterations < max_iterations and delta >= convergence_tol:
        if target is not None and fx < target:
            break
        improved = False
        for i in range(x.size):
            step = delta * (abs(x[i]) + floor)
            for sign in (1.0, -1.0):
                trial = x.copy()
                trial[i] += sign * step
                ft = f(trial, fx)
                result.evaluations += 1
                if ft < fx:
                    x, fx = trial, ft
                    improved = True
                    break
        result.iterations += 1
        result.trace.append(fx)
        if not improved:
            delta *= 0.5

    result.x, result.value = x, fx
    return result


# ---------------------------------------------------------------------------
# Synthesis driver
# ---------------------------------------------------------------------------

def config_hash(cfg: SynthesisConfig, box: ParamBox, model: PlantModel) -> str:
    payload = {
        "synthesis": cfg.model_dump(mode="json"),
        "box": box.model_dump(mode="json"),
        "mu": model.mu,
        "eta": [model.eta_min, model.eta_max],
        "weighting": model.weighting,
        "input_scale": model.input_scale.tolist(),
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _make_objective(
    grid: List[ParamPoint],
    model: PlantModel,
    cfg: SynthesisConfig,
) -> Objective:
    order = list(range(len(grid)))

    def objective(x: np.ndarray, stop_above: Optional[float]) -> float:
        L = x.reshape(N_STATE, N_STATE)
        ordered = [grid[i] for i in order]
        abscissa, radius = closed_loop_spectrum(L, ordered, model)
        if abscissa >= -settings.HURWITZ_MARGIN or radius > cfg.max_pole_magnitude:
            return math.inf
        value, k = _scan(L, ordered, model, cfg.optimizer_gamma_tol, stop_above)
        # the point that last dominated is scanned first next time
        order.insert(0, order.pop(k))
        return value

    return objective


def _stabilize(
    L0: np.ndarray,
    grid: List[ParamPoint],
    model: PlantModel,
    cfg: SynthesisConfig,
) -> Optional[np.ndarray]:
    """Push the grid spectral abscissa negative before the norm search.

    Returns None if no admissible gain is reached.
    """
    cap = cfg.max_pole_magnitude

    def feasibility(x: np.ndarray, _: Optional[float]) -> float:
        abscissa, radius = closed_loop_spectrum(x.reshape(N_STATE, N_STATE), grid, model)
        return abscissa + max(0.0, radius - cap)

    res = pattern_search(
        feasibility, L0, cfg.initial_step, cfg.convergence_tol, cfg.max_iterations,
        target=-_STABILITY_TARGET,
    )
    if res.value < -_STABILITY_TARGET:
        return res.x.reshape(N_STATE, N_STATE)
    return None


def _restart_points(
    cfg: SynthesisConfig,
    model: PlantModel,
    rho_bar: ParamPoint,
) -> List[Tuple[float, np.ndarray]]:
    rng = np.random.default_rng(cfg.seed)
    starts = []
    for i in range(cfg.restarts):
        scale = cfg.pole_scale * _RESTART_SCALES[i % len(_RESTART_SCALES)]
        L0 = initial_gain(model, rho_bar, scale)
        if i >= len(_RESTART_SCALES):
            L0 = L0 * (1.0 + _PERTURBATION * rng.standard_normal(L0.shape))
        starts.append((scale, L0))
    return starts


def synthesize_gain(cfg: SynthesisConfig, box: ParamBox, model: PlantModel) -> ObserverGain:
    """Minimize the grid worst-case norm and certify the result.

    Raises:
        NotObservable: if the nominal parameter is not observable.
        SynthesisFailed: if no start yields a gain stable on the grids.
    """
    syn_grid = param_grid(box, *cfg.synthesis_grid)
    val_grid = param_grid(box, *cfg.validation_grid)
    rho_bar = box_center(box)
    log = SynthesisLog()

    logger.info(
        f"Synthesizing observer gain: {len(syn_grid)} synthesis points, "
        f"{len(val_grid)} validation points, {cfg.restarts} restarts"
    )

    objective = _make_objective(syn_grid, model, cfg)
    best: Optional[SearchResult] = None
    for i, (scale, L0) in enumerate(_restart_points(cfg, model, rho_bar)):
        if not math.isfinite(objective(L0.ravel(), None)):
            logger.info(f"Restart {i}: initial gain not admissible on the grid, stabilizing first")
            stabilized = _stabilize(L0, syn_grid, model, cfg)
            if stabilized is None:
                log.restarts.append(RestartRecord(index=i, pole_scale=scale))
                logger.warning(f"Restart {i} (pole scale {scale:g}): could not stabilize, skipped")
                continue
            L0 = stabilized

        res = pattern_search(objective, L0, cfg.initial_step, cfg.convergence_tol, cfg.max_iterations)
        finite = math.isfinite(res.value)
        log.restarts.append(RestartRecord(
            index=i,
            pole_scale=scale,
            initial_objective=res.trace[0] if math.isfinite(res.trace[0]) else None,
            final_objective=res.value if finite else None,
            iterations=res.iterations,
            evaluations=res.evaluations,
        ))
        logger.info(
            f"Restart {i} (pole scale {scale:g}): gamma {res.trace[0]:.6g} -> {res.value:.6g} "
            f"in {res.iterations} polls"
        )
        if finite and (best is None or res.value < best.value):
            best = res

    if best is None:
        raise SynthesisFailed(f"no stabilizing gain found after {cfg.restarts} restarts")

    L = best.x.reshape(N_STATE, N_STATE)
    trace = list(best.trace)
    iterations = best.iterations

    for round_ in range(cfg.max_densify + 1):
        gamma_syn = worst_case_gamma(L, syn_grid, model, cfg.gamma_tol)
        val = grid_gammas(L, val_grid, model, cfg.gamma_tol)
        gamma_val = float(np.max(val))
        if math.isfinite(gamma_val) and gamma_val <= cfg.adequacy_ratio * gamma_syn:
            break
        if round_ == cfg.max_densify:
            logger.warning(
                f"Validation gamma {gamma_val:.6g} still exceeds {cfg.adequacy_ratio:g} x "
                f"synthesis gamma {gamma_syn:.6g} after {cfg.max_densify} densifications"
            )
            break

        worst = val_grid[int(np.argmax(val))]
        logger.warning(
            f"Validation gamma {gamma_val:.6g} vs synthesis {gamma_syn:.6g}; adding "
            f"rho = ({worst.r1:.4f}, {worst.r2:.4f}) to the synthesis grid"
        )
        syn_grid.append(worst)
        log.densified_points.append(worst.as_tuple())
        objective = _make_objective(syn_grid, model, cfg)
        res = pattern_search(objective, L, cfg.initial_step, cfg.convergence_tol, cfg.max_iterations)
        if math.isfinite(res.value):
            L = res.x.reshape(N_STATE, N_STATE)
            trace.extend(res.trace)
            iterations += res.iterations

    if not math.isfinite(gamma_val):
        raise SynthesisFailed("best gain is not stabilizing on the validation grid")

    abscissa, _ = closed_loop_spectrum(L, val_grid, model)
    log.trace = trace
    log.iterations = iterations
    log.final_objective = gamma_syn

    logger.info(
        f"Certified gamma {gamma_val:.6g} on {len(val_grid)} points "
        f"(synthesis {gamma_syn:.6g}, spectral margin {-abscissa:.4g})"
    )
    return ObserverGain(
        L=L.tolist(),
        gamma=gamma_val,
        gamma_synthesis=gamma_syn,
        spectral_margin=-abscissa,
        mu=model.mu,
        box=box,
        grids=GridSpec(synthesis=cfg.synthesis_grid, validation=cfg.validation_grid),
        config_hash=config_hash(cfg, box, model),
        log=log,
    )
