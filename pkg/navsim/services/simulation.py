"""Simulation harness: scenario files, closed-loop runs, Monte Carlo and CSV I/O.

USAGE:
    from navsim.services.simulation import load_scenario, run_scenario, export_csv

    sc = load_scenario(NRHO_SCENARIO_PATH)
    result = run_scenario(sc, gain)
    export_csv(result, "run.csv")
    stats = analyze("run.csv")        # equals result.stats

Run CSV columns, in order:
    t, x..vz (truth), xh..vzh (estimate), ex..evz (truth - estimate),
    ym1..ym6, r1_used, r2_used, rho_source, one_minus_c2, closure_residual
"""

from __future__ import annotations

import json
import logging
import math
import uuid
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy import stats as sps

from navsim.core.config import settings
from navsim.core.errors import (
    BoxMismatch,
    NumericalFailure,
    ScenarioParseError,
    ScenarioValidationError,
    SchemaError,
)
from navsim.schemas.gain import ObserverGain
from navsim.schemas.results import AggregateStats, MonteCarloSummary, SummaryStats
from navsim.schemas.scenario import ParamBox, Scenario
from navsim.services.cr3bp import Trajectory, jacobi_constant
from navsim.services.disturbance import disturbance_source
from navsim.services.lft_model import PlantModel
from navsim.services.observer import ExogenousSources, StepDiagnostics, diagnose, step_closed_loop
from navsim.services.run_logger import log_event
from navsim.services.sensing import hold_average_variance, shaped_noise_source

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

NRHO_SCENARIO_PATH = Path(__file__).resolve().parent.parent / "scenarios" / "nrho.json"

STATE_COLUMNS = ["x", "y", "z", "vx", "vy", "vz"]
ESTIMATE_COLUMNS = ["xh", "yh", "zh", "vxh", "vyh", "vzh"]
ERROR_COLUMNS = ["ex", "ey", "ez", "evx", "evy", "evz"]
MEASUREMENT_COLUMNS = [f"ym{i}" for i in range(1, 7)]
RUN_COLUMNS = (
    ["t"] + STATE_COLUMNS + ESTIMATE_COLUMNS + ERROR_COLUMNS + MEASUREMENT_COLUMNS
    + ["r1_used", "r2_used", "rho_source", "one_minus_c2", "closure_residual"]
)
TRAJECTORY_COLUMNS = ["t"] + STATE_COLUMNS + ["jacobi"]

_FLOAT_FORMAT = f"%.{settings.CSV_SIGNIFICANT_DIGITS}g"


# ---------------------------------------------------------------------------
# Scenario and gain files
# ---------------------------------------------------------------------------

def load_scenario(path: PathLike) -> Scenario:
    """Parse and validate a scenario JSON file.

    Raises:
        ScenarioParseError: unreadable, empty or malformed JSON (with line/column).
        ScenarioValidationError: a field violates the schema (named in the error).
    """
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError(path, f"cannot read file: {e}") from e
    if not text.strip():
        raise ScenarioParseError(path, "file is empty", 1, 1)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(path, e.msg, e.lineno, e.colno) from e
    if not isinstance(data, dict):
        raise ScenarioParseError(path, "top level must be a JSON object", 1, 1)

    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or "scenario"
        raise ScenarioValidationError(path, field, first["msg"]) from e


def load_gain(path: PathLike) -> ObserverGain:
    path = str(path)
    try:
        return ObserverGain.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ScenarioParseError(path, f"cannot read gain file: {e}") from e
    except ValidationError as e:
        first = e.errors()[0]
        raise ScenarioValidationError(path, ".".join(str(p) for p in first["loc"]), first["msg"]) from e


def save_gain(gain: ObserverGain, path: PathLike) -> None:
    Path(path).write_text(gain.model_dump_json(indent=2), encoding="utf-8")


def exogenous_intensity(sc: Scenario) -> np.ndarray:
    """Continuous-time intensity of each w channel as the simulation generates it.

    A zero-order-held sequence with per-sample std sigma and hold T has the
    low-frequency spectrum of white noise with intensity sigma * sqrt(T).
    """
    d = sc.disturbance.sigma * math.sqrt(sc.integrator.step)
    rate = sc.noise_sample_rate
    held = 1.0
    if sc.noise.sampling == "interval-average":
        held = math.sqrt(hold_average_variance(sc.noise.cutoff_hz, rate))
    n = held / math.sqrt(rate)
    return np.array([d] * 3 + [n] * 6)


def plant_model(sc: Scenario, box: Optional[ParamBox] = None) -> PlantModel:
    """PlantModel for a scenario, weighted by the scenario's exogenous intensities."""
    return PlantModel(sc.mu, box or sc.param_box, sc.noise, input_scale=exogenous_intensity(sc))


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------

def derive_seeds(base_seed: int, n: int) -> List[Tuple[int, int]]:
    """n independent (noise_seed, disturbance_seed) pairs spawned from base_seed."""
    children = np.random.SeedSequence(base_seed).spawn(n)
    return [tuple(int(v) for v in child.generate_state(2)) for child in children]


def with_seed(sc: Scenario, seed: int) -> Scenario:
    """Copy of the scenario with noise and disturbance seeds derived from one integer."""
    noise_seed, dist_seed = derive_seeds(seed, 1)[0]
    return _with_seed_pair(sc, noise_seed, dist_seed)


def _with_seed_pair(sc: Scenario, noise_seed: int, dist_seed: int) -> Scenario:
    return sc.model_copy(update={
        "noise": sc.noise.model_copy(update={"seed": noise_seed}),
        "disturbance": sc.disturbance.model_copy(update={"seed": dist_seed}),
    })


# ---------------------------------------------------------------------------
# Closed-loop run
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    """Aligned per-sample series of one closed-loop run"""
    times: np.ndarray          # (N,)
    truth: np.ndarray          # (N, 6)
    estimate: np.ndarray       # (N, 6)
    error: np.ndarray          # (N, 6), truth - estimate
    measurements: np.ndarray   # (N, 6)
    rho: np.ndarray            # (N, 2)
    rho_source: List[str]
    conditioning: np.ndarray   # (N,)
    residual: np.ndarray       # (N,)
    stats: SummaryStats

    def __len__(self) -> int:
        return len(self.times)


class ErrorTrend(NamedTuple):
    slope: float
    stderr: float


def error_trend(
    times: np.ndarray,
    error: np.ndarray,
    window: float = settings.TREND_WINDOW_TU,
) -> Optional[ErrorTrend]:
    """Least-squares slope of |position error| over the last ``window`` TU.

    None when the window holds fewer than three samples.
    """
    times = np.asarray(times, dtype=float)
    late = times >= times[-1] - window - 1e-9
    if late.sum() < 3:
        return None
    norm = np.linalg.norm(np.asarray(error, dtype=float)[late, :3], axis=1)
    fit = sps.linregress(times[late], norm)
    return ErrorTrend(float(fit.slope), float(fit.stderr))


def summarize(
    times: np.ndarray,
    error: np.ndarray,
    rho_source: Sequence[str],
    settle_time: float = settings.SETTLE_TIME_TU,
) -> SummaryStats:
    """Per-component max |e|, RMS e and post-transient max (t > settle_time)."""
    abs_err = np.abs(np.asarray(error, dtype=float))
    max_abs = abs_err.max(axis=0)
    rms = np.minimum(np.sqrt(np.mean(abs_err ** 2, axis=0)), max_abs)

    late = np.asarray(times) > settle_time
    if late.any():
        post = abs_err[late].max(axis=0)
    else:
        logger.warning(f"No samples after settle time {settle_time} TU; post-transient stats use the full run")
        post = max_abs

    trend = error_trend(times, error)
    return SummaryStats(
        samples=len(times),
        settle_time_tu=settle_time,
        max_abs_error=max_abs.tolist(),
        rms_error=rms.tolist(),
        post_transient_max=post.tolist(),
        fallback_count=sum(1 for s in rho_source if s == "estimate-fallback"),
        clamp_count=sum(1 for s in rho_source if s == "clamped"),
        error_trend_slope=trend.slope if trend else None,
        error_trend_stderr=trend.stderr if trend else None,
    )


def run_scenario(sc: Scenario, gain: ObserverGain, run_id: Optional[str] = None) -> RunResult:
    """Co-simulate truth and observer over the scenario duration.

    Raises:
        BoxMismatch: if the gain was certified on a box not covering the scenario box.
        NumericalFailure: if the run produces non-finite values.
    """
    if not gain.box.contains_box(sc.param_box):
        raise BoxMismatch(
            f"gain certified on {gain.box.model_dump()} does not cover scenario box {sc.param_box.model_dump()}"
        )
    if abs(gain.mu - sc.mu) > 1e-12:
        logger.warning(f"Gain synthesized for mu={gain.mu} but scenario uses mu={sc.mu}")

    run_id = run_id or uuid.uuid4().hex[:8]
    dt = sc.integrator.step
    if sc.integrator.method != "rk4":
        logger.info(f"Closed-loop runs use fixed-step RK4 at {dt} TU (configured method {sc.integrator.method})")
    n_steps = int(math.floor(sc.duration_tu / dt + 1e-9))
    L = gain.matrix()

    sources = ExogenousSources(
        shaped_noise_source(sc.noise, sc.noise_sample_rate),
        disturbance_source(sc.disturbance, dt),
    )
    truth = np.asarray(sc.initial_state, dtype=float)
    x_hat = truth - np.asarray(sc.initial_estimate_error, dtype=float)

    logger.info(f"[{run_id}] Running {n_steps} steps of {dt} TU (noise seed {sc.noise.seed}, disturbance seed {sc.disturbance.seed})")

    rows: List[StepDiagnostics] = []
    last_source = None
    for k in range(n_steps):
        truth, x_hat, diag = step_closed_loop(truth, x_hat, k * dt, dt, L, sources, sc)
        rows.append(diag)
        if not (np.all(np.isfinite(truth)) and np.all(np.isfinite(x_hat))):
            logger.error(f"[{run_id}] Non-finite state at t={(k + 1) * dt:.6f}")
            raise NumericalFailure(f"non-finite state at t = {(k + 1) * dt:.6f} TU")
        if diag.schedule.source != last_source:
            if last_source is not None:
                log_event(
                    "rho_schedule",
                    f"rho source {last_source} -> {diag.schedule.source}",
                    {"t": diag.t, "rho": diag.schedule.rho.as_tuple(),
                     "one_minus_c2": diag.schedule.conditioning},
                    run_id=run_id,
                )
            last_source = diag.schedule.source

    t_end = n_steps * dt
    rows.append(diagnose(t_end, truth, x_hat, sources.at(t_end), L, sc))

    times = np.array([k * dt for k in range(n_steps + 1)])
    truth_s = np.vstack([r.truth for r in rows])
    est_s = np.vstack([r.x_hat for r in rows])
    error = truth_s - est_s
    tags = [r.schedule.source for r in rows]
    stats = summarize(times, error, tags, sc.settle_time_tu)

    if stats.fallback_count or stats.clamp_count:
        logger.warning(
            f"[{run_id}] rho fallback on {stats.fallback_count} samples, clamped on {stats.clamp_count}"
        )
    logger.info(
        f"[{run_id}] Post-transient max position error "
        f"{max(stats.post_transient_max[:3]):.3e} DU ({max(stats.post_transient_max_km):.2f} km)"
    )

    return RunResult(
        times=times,
        truth=truth_s,
        estimate=est_s,
        error=error,
        measurements=np.vstack([r.y_m for r in rows]),
        rho=np.array([r.schedule.rho.as_tuple() for r in rows]),
        rho_source=tags,
        conditioning=np.array([r.schedule.conditioning for r in rows]),
        residual=np.array([r.schedule.residual for r in rows]),
        stats=stats,
    )


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def _run_one(args) -> SummaryStats:
    sc, gain, index, out_dir = args
    result = run_scenario(sc, gain, run_id=f"mc{index:03d}")
    if out_dir is not None:
        export_csv(result, Path(out_dir) / f"run_{index:03d}.csv")
    return result.stats


def trend_significance(
    slopes: Sequence[float],
    confidence: float = settings.TREND_CONFIDENCE,
) -> Tuple[Optional[float], Optional[float], bool]:
    """(mean slope, one-sided p-value, growth flag) for per-run error slopes.

    Growth is flagged when the mean slope is positive at the given confidence
    under a one-sample t-test. Fewer than two slopes give no p-value.
    """
    s = np.asarray([v for v in slopes if v is not None], dtype=float)
    if len(s) == 0:
        return None, None, False
    mean = float(s.mean())
    if len(s) < 2:
        return mean, None, False
    if np.ptp(s) == 0.0:
        p = 0.0 if mean > 0.0 else 1.0
    else:
        p = float(sps.ttest_1samp(s, 0.0, alternative="greater").pvalue)
    return mean, p, p < 1.0 - confidence


def aggregate(runs: Sequence[SummaryStats]) -> AggregateStats:
    post = np.array([r.post_transient_max for r in runs])
    peak = np.array([r.max_abs_error for r in runs])
    mean_slope, p_value, growth = trend_significance([r.error_trend_slope for r in runs])
    if growth:
        logger.warning(f"Final-window position error grows at {mean_slope:.3e} DU/TU (p={p_value:.3g})")
    return AggregateStats(
        max_post_transient=post.max(axis=0).tolist(),
        p95_post_transient=np.percentile(post, 95, axis=0).tolist(),
        median_post_transient=np.median(post, axis=0).tolist(),
        max_abs_error=peak.max(axis=0).tolist(),
        total_fallbacks=sum(r.fallback_count for r in runs),
        total_clamps=sum(r.clamp_count for r in runs),
        mean_trend_slope=mean_slope,
        trend_p_value=p_value,
        error_growth=growth,
    )


def monte_carlo(
    sc: Scenario,
    gain: ObserverGain,
    n_runs: int,
    base_seed: int,
    workers: int = 1,
    out_dir: Optional[PathLike] = None,
) -> MonteCarloSummary:
    """Independent runs with seeds spawned from base_seed.

    Per-run CSVs go to out_dir when given; the aggregate is only written by
    the caller once every run has finished.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)

    seeds = derive_seeds(base_seed, n_runs)
    jobs = [(_with_seed_pair(sc, ns, ds), gain, i, out_dir) for i, (ns, ds) in enumerate(seeds)]

    logger.info(f"Monte Carlo: {n_runs} runs, base seed {base_seed}, {workers} worker(s)")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(job) for job in jobs]

    summary = MonteCarloSummary(
        n_runs=n_runs,
        base_seed=base_seed,
        seeds=seeds,
        runs=runs,
        aggregate=aggregate(runs),
    )
    log_event(
        "montecarlo",
        f"{n_runs} runs complete",
        {"base_seed": base_seed, "max_post_transient": summary.aggregate.max_post_transient,
         "p95_post_transient": summary.aggregate.p95_post_transient},
    )
    return summary


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def run_frame(r: RunResult) -> pd.DataFrame:
    data = {"t": r.times}
    for block, cols in (
        (r.truth, STATE_COLUMNS),
        (r.estimate, ESTIMATE_COLUMNS),
        (r.error, ERROR_COLUMNS),
        (r.measurements, MEASUREMENT_COLUMNS),
    ):
        for j, col in enumerate(cols):
            data[col] = block[:, j]
    data["r1_used"] = r.rho[:, 0]
    data["r2_used"] = r.rho[:, 1]
    data["rho_source"] = r.rho_source
    data["one_minus_c2"] = r.conditioning
    data["closure_residual"] = r.residual
    return pd.DataFrame(data, columns=RUN_COLUMNS)


def export_csv(r: RunResult, path: PathLike) -> None:
    run_frame(r).to_csv(path, index=False, float_format=_FLOAT_FORMAT, na_rep="nan")


def export_summary(summary: Union[SummaryStats, MonteCarloSummary], path: PathLike) -> None:
    Path(path).write_text(summary.model_dump_json(indent=2), encoding="utf-8")


def read_run_csv(path: PathLike) -> pd.DataFrame:
    """Load a run CSV with bit-exact floats (17 significant digits round-trip)."""
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise SchemaError(f"{path}: cannot parse run CSV: {e}") from e


def analyze(path: PathLike, settle_time: float = settings.SETTLE_TIME_TU) -> SummaryStats:
    """Recompute SummaryStats from a run CSV.

    Raises:
        SchemaError: wrong header, missing or non-numeric values, or an empty file.
    """
    df = read_run_csv(path)

    if list(df.columns) != RUN_COLUMNS:
        raise SchemaError(f"{path}: header does not match the run CSV schema")
    if df.empty:
        raise SchemaError(f"{path}: no data rows")

    numeric = ["t"] + STATE_COLUMNS + ESTIMATE_COLUMNS + ERROR_COLUMNS
    try:
        values = df[numeric].astype(float)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{path}: non-numeric values in state columns") from e
    if values.isna().any().any() or df["rho_source"].isna().any():
        raise SchemaError(f"{path}: missing values (truncated file?)")

    times = values["t"].to_numpy()
    if len(times) > 1 and np.any(np.diff(times) <= 0.0):
        raise SchemaError(f"{path}: time column is not strictly increasing")

    return summarize(times, values[ERROR_COLUMNS].to_numpy(), df["rho_source"].tolist(), settle_time)


def export_trajectory_csv(traj: Trajectory, mu: float, path: PathLike) -> None:
    df = pd.DataFrame(traj.states, columns=STATE_COLUMNS)
    df.insert(0, "t", traj.times)
    df["jacobi"] = [jacobi_constant(s, mu) for s in traj.states]
    df.to_csv(path, index=False, float_format=_FLOAT_FORMAT)


def emit_gnuplot_script(csv_path: PathLike, script_path: PathLike, image_path: Optional[PathLike] = None) -> None:
    """Write a gnuplot script plotting |position| and |velocity| errors from a run CSV."""
    csv_path = Path(csv_path)
    image_path = Path(image_path) if image_path else csv_path.with_suffix(".png")
    col = {name: i + 1 for i, name in enumerate(RUN_COLUMNS)}

    def series(names: Sequence[str]) -> str:
        return ", \\\n     ".join(
            f"'{csv_path}' using {col['t']}:(abs(${col[n]})) with lines title '|{n}|'" for n in names
        )

    script = "\n".join([
        "set datafile separator ','",
        "set terminal pngcairo size 1200,900",
        f"set output '{image_path}'",
        "set multiplot layout 2,1",
        "set logscale y",
        "set format y '%.0e'",
        "set xlabel 't [TU]'",
        "set ylabel 'position error [DU]'",
        "plot " + series(ERROR_COLUMNS[:3]),
        "set ylabel 'velocity error [DU/TU]'",
        "plot " + series(ERROR_COLUMNS[3:]),
        "unset multiplot",
        "",
    ])
    Path(script_path).write_text(script, encoding="utf-8")
