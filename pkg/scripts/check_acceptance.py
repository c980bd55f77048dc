#!/usr/bin/env python3
"""Acceptance checks for navsim: numerical contracts and the NRHO experiment.

Run from the repository root:
    python scripts/check_acceptance.py                  # everything, synthesizes a gain
    python scripts/check_acceptance.py --gain gain.json # reuse a gain, skip synthesis
    python scripts/check_acceptance.py --only hinf ranges
"""

import argparse
import filecmp
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy import signal

sys.path.insert(0, str(Path(__file__).parent.parent))

from navsim.core.errors import NearCollinear
from navsim.schemas.scenario import IntegratorConfig
from navsim.services.cr3bp import cr3bp_derivative, jacobi_drift, primary_distances, propagate
from navsim.services.hinf_norm import StateSpace, frequency_response_peak, hinf_norm, hinf_norm_with_frequency
from navsim.services.lft_model import (
    ParamPoint,
    lpv_residual,
    lpv_tolerance,
    measurement_C,
    measurement_d,
    param_grid,
)
from navsim.services.sensing import closure_residual, reconstruct_ranges, unit_vectors
from navsim.services.simulation import (
    NRHO_SCENARIO_PATH,
    export_csv,
    load_gain,
    load_scenario,
    monte_carlo,
    plant_model,
    run_scenario,
    save_gain,
    with_seed,
)
from navsim.services.synthesis import closed_loop_spectrum, error_system, synthesize_gain


def sample_states(box, mu, n, rng):
    """Random states whose (r1, r2) lies in the box, built around the Moon."""
    moon = np.array([1.0 - mu, 0.0, 0.0])
    earth = np.array([-mu, 0.0, 0.0])
    states = []
    while len(states) < n:
        r2 = rng.uniform(box.r2_min, box.r2_max)
        u = rng.standard_normal(3)
        p = moon + r2 * u / np.linalg.norm(u)
        r1 = np.linalg.norm(p - earth)
        if box.r1_min <= r1 <= box.r1_max:
            states.append(np.concatenate([p, rng.uniform(-1.0, 1.0, 3)]))
    return np.array(states)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def check_jacobi(sc, ctx):
    """Jacobi drift <= 1e-9 over 3 TU with RKF45"""
    print("🔍 Propagating NRHO initial state (RKF45, 1e-12)...")
    start = time.time()
    traj = propagate(sc.initial_state, (0.0, 3.0), IntegratorConfig(method="rkf45"), mu=sc.mu)
    drift = jacobi_drift(traj, sc.mu)
    print(f"   drift {drift:.3e} in {time.time() - start:.2f}s")
    return drift <= 1e-9


def check_lpv_exactness(sc, ctx):
    """A(rho)s + b(rho) and C_y(rho)s + d(rho) reproduce the nonlinear model"""
    n = ctx.samples
    print(f"🔍 LPV exactness on {n} random states...")
    rng = np.random.default_rng(1)
    worst_f = worst_y = 0.0
    for s in sample_states(sc.param_box, sc.mu, n, rng):
        rho = ParamPoint(*primary_distances(s, sc.mu))
        f = cr3bp_derivative(s, sc.mu)
        worst_f = max(worst_f, float(np.max(np.abs(f - lpv_residual(s, rho, sc.mu)) / lpv_tolerance(s, rho, sc.mu))))
        y = measurement_C(rho) @ s + measurement_d(rho, sc.mu)
        worst_y = max(worst_y, float(np.max(np.abs(y - np.concatenate(unit_vectors(s, sc.mu))))))
    print(f"   dynamics {worst_f:.2f} of rounding-scaled tolerance, outputs {worst_y:.2e}")
    return worst_f <= 1.0 and worst_y <= 1e-12


def check_ranges(sc, ctx):
    """Range round trip, collinear rejection, closure residual"""
    print("🔍 Range reconstruction...")
    rng = np.random.default_rng(2)
    worst = worst_res = 0.0
    for s in sample_states(sc.param_box, sc.mu, 1000, rng):
        e1, e2 = unit_vectors(s, sc.mu)
        r1, r2, geom = reconstruct_ranges(e1, e2)
        t1, t2 = primary_distances(s, sc.mu)
        worst = max(worst, abs(r1 - t1), abs(r2 - t2))
        worst_res = max(worst_res, closure_residual(t1, t2, e1, e2))
    try:
        e1, e2 = unit_vectors([0.5, 0, 0, 0, 0, 0], sc.mu)
        reconstruct_ranges(e1, e2)
        collinear_ok = False
    except NearCollinear:
        collinear_ok = True
    print(f"   round trip {worst:.2e}, residual {worst_res:.2e}, collinear rejected: {collinear_ok}")
    return worst <= 1e-12 and worst_res <= 1e-14 and collinear_ok


def check_hinf(sc, ctx):
    """Analytic norms and frequency-sweep agreement"""
    print("🔍 H-infinity evaluator...")
    zeta = 0.1
    cases = [
        (StateSpace.from_arrays([[-1.0]], [[1.0]], [[1.0]]), 1.0),
        (StateSpace.from_arrays([[-2.0]], [[1.0]], [[1.0]]), 0.5),
        (StateSpace.from_arrays([[0.0, 1.0], [-1.0, -2 * zeta]], [[0.0], [1.0]], [[1.0, 0.0]]),
         1.0 / (2 * zeta * math.sqrt(1 - zeta ** 2))),
    ]
    ok = True
    for sys_, expected in cases:
        g = hinf_norm(sys_, 1e-8)
        ok &= abs(g - expected) <= 1e-6 * expected
        print(f"   analytic {expected:.8f} -> {g:.8f}")

    rng = np.random.default_rng(3)
    omegas = np.logspace(-3, 3, 10_000)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 7))
        M = rng.standard_normal((n, n))
        A = M - (np.max(np.linalg.eigvals(M).real) + rng.uniform(0.2, 2.0)) * np.eye(n)
        sys_ = StateSpace.from_arrays(A, rng.standard_normal((n, 2)), rng.standard_normal((2, n)))
        g = hinf_norm(sys_, 1e-8)
        peak, _ = frequency_response_peak(sys_, omegas)
        worst = max(worst, abs(g - peak) / g)
    print(f"   random systems: worst relative gap to sweep {worst:.2e}")
    return ok and worst <= 1e-3


def check_synthesis(sc, ctx):
    """Certified gain on the 7x7 validation grid"""
    if ctx.gain is None:
        print("🔍 Synthesizing gain (this is the slow one)...")
        start = time.time()
        ctx.gain = synthesize_gain(sc.synthesis, sc.param_box, plant_model(sc))
        save_gain(ctx.gain, ctx.out / "gain.json")
        print(f"   done in {time.time() - start:.0f}s, saved to {ctx.out / 'gain.json'}")
    gain = ctx.gain
    grid = param_grid(gain.box, *gain.grids.validation)
    abscissa, _ = closed_loop_spectrum(gain.matrix(), grid, plant_model(sc, gain.box))
    ratio = gain.gamma / gain.gamma_synthesis
    print(f"   gamma {gain.gamma:.6g}, synthesis {gain.gamma_synthesis:.6g}, ratio {ratio:.4f}, abscissa {abscissa:.3e}")
    return abscissa < 0.0 and math.isfinite(gain.gamma) and ratio <= 1.1


def check_experiment(sc, ctx):
    """20-run Monte Carlo error envelope, z-dominated and without late growth"""
    if ctx.gain is None:
        print("   (no gain available)")
        return False
    print("🔍 Monte Carlo, 20 runs...")
    summary = monte_carlo(sc, ctx.gain, 20, base_seed=0, workers=ctx.workers)
    agg = summary.aggregate
    worst = max(agg.max_post_transient[:3])
    median = max(agg.median_post_transient[:3])
    largest = "xyz"[int(np.argmax(agg.max_post_transient[:3]))]
    print(f"   max {worst:.3e} DU, median {median:.3e} DU, largest component {largest}")
    print(f"   final-TU slope {agg.mean_trend_slope:.3e} DU/TU, one-sided p {agg.trend_p_value:.3g}")
    return worst < 5e-5 and median < 1e-5 and largest == "z" and not agg.error_growth


def check_noiseless(sc, ctx):
    """Error decays below 1e-8 DU with w = 0"""
    if ctx.gain is None:
        return False
    quiet = sc.model_copy(update={
        "noise": sc.noise.model_copy(update={"enabled": False}),
        "disturbance": sc.disturbance.model_copy(update={"amplitude": 0.0}),
    })
    result = run_scenario(quiet, ctx.gain)
    final = float(np.max(np.abs(result.error[-1, :3])))
    print(f"   final position error {final:.3e} DU")
    return final < 1e-8


def check_gain_bound(sc, ctx):
    """Sinusoidal excitation at the peak frequency stays within gamma"""
    if ctx.gain is None:
        return False
    model = plant_model(sc, ctx.gain.box)
    grid = param_grid(ctx.gain.box, *ctx.gain.grids.validation)
    rng = np.random.default_rng(4)
    ok = True
    for idx in rng.choice(len(grid), size=5, replace=False):
        es = error_system(grid[idx], ctx.gain.matrix(), model)
        gamma, w = hinf_norm_with_frequency(es)
        w = max(w, 1e-3)
        G = es.C_e @ np.linalg.solve(1j * w * np.eye(6) - es.A_e, es.B_e)
        v = np.linalg.svd(G)[2][0].conj()
        settle = 10.0 / max(-np.max(np.linalg.eigvals(es.A_e).real), 1e-3)
        period = 2 * np.pi / w
        t = np.arange(0.0, settle + 20 * period, period / 64)
        u = np.real(np.outer(np.exp(1j * w * t), v))
        _, y, _ = signal.lsim((es.A_e, es.B_e, es.C_e, es.D_e), u, t)
        tail = t > settle
        ratio = math.sqrt(np.mean(np.sum(y[tail] ** 2, axis=1)) / np.mean(np.sum(u[tail] ** 2, axis=1)))
        ok &= ratio <= 1.05 * gamma
        print(f"   rho=({grid[idx].r1:.3f},{grid[idx].r2:.3f}): rms gain {ratio:.4g} vs gamma {gamma:.4g}")
    return ok


def check_determinism(sc, ctx):
    """Identical seeds give byte-identical CSVs"""
    if ctx.gain is None:
        return False
    short = with_seed(sc.model_copy(update={"duration_tu": 0.2}), 7)
    a, b = ctx.out / "det_a.csv", ctx.out / "det_b.csv"
    export_csv(run_scenario(short, ctx.gain), a)
    export_csv(run_scenario(short, ctx.gain), b)
    return filecmp.cmp(a, b, shallow=False)


CHECKS = [
    ("jacobi", "Jacobi conservation", check_jacobi),
    ("lpv", "LPV exactness", check_lpv_exactness),
    ("ranges", "Range reconstruction", check_ranges),
    ("hinf", "H-infinity evaluator", check_hinf),
    ("synthesis", "Synthesis certificate", check_synthesis),
    ("experiment", "NRHO experiment", check_experiment),
    ("noiseless", "Noiseless convergence", check_noiseless),
    ("gainbound", "Frozen-parameter gain bound", check_gain_bound),
    ("determinism", "Determinism", check_determinism),
]


def main():
    parser = argparse.ArgumentParser(description="navsim acceptance checks")
    parser.add_argument("--scenario", default=str(NRHO_SCENARIO_PATH))
    parser.add_argument("--gain", default=None, help="Existing gain JSON (skips synthesis)")
    parser.add_argument("--out", default=None, help="Working directory for artifacts")
    parser.add_argument("--samples", type=int, default=100_000, help="States for the LPV check")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--only", nargs="*", default=None, help="Subset of check keys")
    args = parser.parse_args()

    sc = load_scenario(args.scenario)
    args.out = Path(args.out or tempfile.mkdtemp(prefix="navsim_accept_"))
    args.out.mkdir(parents=True, exist_ok=True)
    args.gain = load_gain(args.gain) if args.gain else None

    print("=" * 60)
    print("navsim Acceptance Suite")
    print("=" * 60)

    results = []
    for key, name, check in CHECKS:
        if args.only and key not in args.only:
            continue
        print(f"\n[{name}]")
        start = time.time()
        try:
            passed = bool(check(sc, args))
        except Exception as e:
            print(f"❌ {name} raised {type(e).__name__}: {e}")
            passed = False
        results.append((name, passed, time.time() - start))

    print("\n" + "=" * 60)
    print("Summary")
    print("=" * 60)

    for name, passed, elapsed in results:
        status = "✅ PASS" if passed else "❌ FAIL"
        print(f"{name:30s} {status}  ({elapsed:.1f}s)")

    all_passed = all(r[1] for r in results)
    print("\n" + "=" * 60)
    if all_passed:
        print("🎉 All acceptance checks passed.")
    else:
        print("⚠️  Some checks failed. See output above.")
    print("=" * 60)

    return 0 if all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
