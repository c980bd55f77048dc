"""navsim command-line entry point.

    navsim synthesize --scenario S.json --out gain.json
    navsim simulate   --scenario S.json --gain gain.json --out run.csv [--seed N]
    navsim propagate  --scenario S.json --out traj.csv
    navsim montecarlo --scenario S.json --gain gain.json --runs N --out dir/
    navsim analyze    run.csv

Exit codes: 0 success, 2 configuration error, 3 synthesis failure,
4 runtime numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from navsim import __version__
from navsim.core.config import settings
from navsim.core.errors import NavsimError, NotObservable, ScenarioError, SynthesisFailed
from navsim.services.cr3bp import jacobi_drift, param_envelope, propagate
from navsim.services.run_logger import log_event
from navsim.services.simulation import (
    analyze,
    emit_gnuplot_script,
    export_csv,
    export_summary,
    export_trajectory_csv,
    load_gain,
    load_scenario,
    monte_carlo,
    plant_model,
    run_scenario,
    save_gain,
    with_seed,
)
from navsim.services.synthesis import synthesize_gain

logger = logging.getLogger("navsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SYNTHESIS = 3
EXIT_RUNTIME = 4


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synthesize(args) -> int:
    sc = load_scenario(args.scenario)
    cfg = sc.synthesis
    overrides = {k: v for k, v in (("restarts", args.restarts), ("max_iterations", args.max_iterations)) if v}
    if overrides:
        cfg = cfg.model_copy(update=overrides)

    print(f"[Synthesize] Box r1 in [{sc.param_box.r1_min}, {sc.param_box.r1_max}], "
          f"r2 in [{sc.param_box.r2_min}, {sc.param_box.r2_max}]")
    print(f"[Synthesize] Grids {cfg.synthesis_grid} / {cfg.validation_grid}, {cfg.restarts} restarts")
    start = time.time()
    gain = synthesize_gain(cfg, sc.param_box, plant_model(sc))
    save_gain(gain, args.out)

    log_event("synthesis", "gain synthesized", {
        "gamma": gain.gamma,
        "gamma_synthesis": gain.gamma_synthesis,
        "spectral_margin": gain.spectral_margin,
        "config_hash": gain.config_hash,
        "restarts": [r.model_dump() for r in gain.log.restarts],
    })
    print(f"[Synthesize] gamma = {gain.gamma:.6g} (synthesis grid {gain.gamma_synthesis:.6g}), "
          f"spectral margin {gain.spectral_margin:.4g}")
    print(f"[Synthesize] Done in {time.time() - start:.1f}s. Gain saved to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = with_seed(sc, args.seed)
    gain = load_gain(args.gain)

    result = run_scenario(sc, gain)
    export_csv(result, args.out)
    stats = result.stats
    print(f"[Simulate] {len(result)} samples written to {args.out}")
    print(f"[Simulate] Post-transient max position error (DU): "
          + ", ".join(f"{v:.3e}" for v in stats.post_transient_max[:3])
          + f"  (largest: {stats.largest_post_transient_axis})")
    print(f"[Simulate] rho fallback {stats.fallback_count}, clamped {stats.clamp_count}")

    if args.summary:
        export_summary(stats, args.summary)
        print(f"[Simulate] Summary saved to {args.summary}")
    if args.gnuplot:
        emit_gnuplot_script(args.out, args.gnuplot)
        print(f"[Simulate] gnuplot script saved to {args.gnuplot}")
    return EXIT_OK


def cmd_propagate(args) -> int:
    sc = load_scenario(args.scenario)
    cfg = sc.integrator.model_copy(update={"method": args.method})
    duration = args.duration or sc.duration_tu

    start = time.time()
    traj = propagate(sc.initial_state, (0.0, duration), cfg, disturbance=None, mu=sc.mu)
    export_trajectory_csv(traj, sc.mu, args.out)
    env = param_envelope(traj, sc.mu)

    print(f"[Propagate] {len(traj)} samples over {duration} TU ({args.method}) in {time.time() - start:.2f}s")
    print(f"[Propagate] Relative Jacobi drift: {jacobi_drift(traj, sc.mu):.3e}")
    print(f"[Propagate] r1 in [{env.r1_min:.4f}, {env.r1_max:.4f}], r2 in [{env.r2_min:.4f}, {env.r2_max:.4f}]"
          + ("" if sc.param_box.contains_box(env) else "  (outside scenario box)"))
    print(f"[Propagate] Trajectory saved to {args.out}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    sc = load_scenario(args.scenario)
    gain = load_gain(args.gain)
    out_dir = Path(args.out)

    start = time.time()
    summary = monte_carlo(sc, gain, args.runs, args.base_seed, workers=args.workers, out_dir=out_dir)
    export_summary(summary, out_dir / "summary.json")

    agg = summary.aggregate
    print(f"[MonteCarlo] {summary.n_runs} runs in {time.time() - start:.1f}s")
    print("[MonteCarlo] Post-transient position error (DU)   max / p95 / median")
    for i, axis in enumerate(("x", "y", "z")):
        print(f"  {axis}: {agg.max_post_transient[i]:.3e} / {agg.p95_post_transient[i]:.3e} / "
              f"{agg.median_post_transient[i]:.3e}")
    if agg.trend_p_value is not None:
        verdict = "growing" if agg.error_growth else "no growth"
        print(f"[MonteCarlo] Final-TU error slope {agg.mean_trend_slope:.3e} DU/TU (p={agg.trend_p_value:.3g}, {verdict})")
    print(f"[MonteCarlo] Summary saved to {out_dir / 'summary.json'}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    stats = analyze(args.csv, settle_time=args.settle_time)
    if args.json:
        print(stats.model_dump_json(indent=2))
        return EXIT_OK

    print(f"[Analyze] {stats.samples} samples, settle time {stats.settle_time_tu} TU")
    print(f"  {'':4} {'max |e|':>12} {'rms':>12} {'post max':>12}")
    for i, name in enumerate(("x", "y", "z", "vx", "vy", "vz")):
        print(f"  {name:4} {stats.max_abs_error[i]:12.4e} {stats.rms_error[i]:12.4e} "
              f"{stats.post_transient_max[i]:12.4e}")
    print("  post-transient km: " + ", ".join(f"{v:.3f}" for v in stats.post_transient_max_km))
    print(f"  rho fallback {stats.fallback_count}, clamped {stats.clamp_count}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="navsim",
        description="Bearing-only CR3BP navigation with robust H-infinity observers",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Python logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="Synthesize and certify an observer gain")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="Gain JSON output path")
    p.add_argument("--restarts", type=int, default=None, help="Override synthesis.restarts")
    p.add_argument("--max-iterations", type=int, default=None, help="Override synthesis.max_iterations")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="Closed-loop run, written as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--gain", required=True)
    p.add_argument("--out", required=True, help="Run CSV output path")
    p.add_argument("--seed", type=int, default=None, help="Derive noise and disturbance seeds from N")
    p.add_argument("--summary", default=None, help="Also write SummaryStats JSON here")
    p.add_argument("--gnuplot", default=None, help="Also write a gnuplot script here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("propagate", help="Truth-only propagation (no disturbance)")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="Trajectory CSV output path")
    p.add_argument("--method", choices=["rk4", "rkf45"], default="rkf45")
    p.add_argument("--duration", type=float, default=None, help="Override duration_tu")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("montecarlo", help="Batch of seeded runs")
    p.add_argument("--scenario", required=True)
    p.add_argument("--gain", required=True)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("analyze", help="Recompute summary statistics from a run CSV")
    p.add_argument("csv")
    p.add_argument("--settle-time", type=float, default=settings.SETTLE_TIME_TU)
    p.add_argument("--json", action="store_true", help="Print SummaryStats as JSON")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"[navsim] Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SynthesisFailed, NotObservable) as e:
        print(f"[navsim] Synthesis failed: {e}", file=sys.stderr)
        return EXIT_SYNTHESIS
    except NavsimError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"[navsim] Runtime failure ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"[navsim] I/O error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
