"""End-to-end acceptance runs on the bundled NRHO scenario.

These synthesize a gain with the scenario's own synthesis settings, so they
take minutes. Deselect with -m "not slow".
"""

import math

import numpy as np
import pytest
from scipy import signal

from navsim.services.hinf_norm import hinf_norm_with_frequency
from navsim.services.lft_model import param_grid
from navsim.services.simulation import monte_carlo, run_scenario
from navsim.services.synthesis import closed_loop_spectrum, config_hash, error_system, synthesize_gain, worst_case_gamma

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def certified_gain(nrho_scenario, nrho_model):
    return synthesize_gain(nrho_scenario.synthesis, nrho_scenario.param_box, nrho_model)


def test_synthesis_certificate(nrho_scenario, nrho_model, certified_gain):
    gain = certified_gain
    grid = param_grid(gain.box, *gain.grids.validation)
    abscissa, _ = closed_loop_spectrum(gain.matrix(), grid, nrho_model)
    assert abscissa < 0.0
    assert gain.spectral_margin == pytest.approx(-abscissa, rel=1e-9)
    assert math.isfinite(gain.gamma)
    assert gain.gamma == pytest.approx(worst_case_gamma(gain.matrix(), grid, nrho_model), rel=1e-5)
    assert gain.gamma / gain.gamma_synthesis <= 1.1
    assert gain.config_hash == config_hash(nrho_scenario.synthesis, nrho_scenario.param_box, nrho_model)


def test_nrho_error_envelope(nrho_scenario, certified_gain):
    summary = monte_carlo(nrho_scenario, certified_gain, 20, base_seed=0)
    agg = summary.aggregate
    assert max(agg.max_post_transient[:3]) < 5e-5
    assert max(agg.median_post_transient[:3]) < 1e-5
    # apolune bearings leave z observed only through the Earth line of sight
    assert int(np.argmax(agg.max_post_transient[:3])) == 2
    assert not agg.error_growth


def test_noiseless_error_decays_within_three_tu(nrho_scenario, certified_gain):
    quiet = nrho_scenario.model_copy(update={
        "duration_tu": 3.0,
        "noise": nrho_scenario.noise.model_copy(update={"enabled": False}),
        "disturbance": nrho_scenario.disturbance.model_copy(update={"amplitude": 0.0}),
    })
    result = run_scenario(quiet, certified_gain)
    assert np.max(np.abs(result.error[0, :3])) > 1e-6
    assert np.max(np.abs(result.error[-1, :3])) < 1e-8


def test_sinusoidal_gain_stays_within_gamma(nrho_model, certified_gain):
    L = certified_gain.matrix()
    grid = param_grid(certified_gain.box, *certified_gain.grids.validation)
    rng = np.random.default_rng(4)
    for idx in rng.choice(len(grid), size=3, replace=False):
        es = error_system(grid[idx], L, nrho_model)
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
        assert ratio <= 1.05 * gamma
