import math

import numpy as np
import pytest

from navsim.core.errors import NotObservable, SynthesisFailed
from navsim.schemas.scenario import SynthesisConfig
from navsim.services import synthesis
from navsim.services.hinf_norm import hinf_norm, spectral_abscissa
from navsim.services.lft_model import PlantModel, box_center, param_grid, plant_A
from navsim.services.synthesis import (
    config_hash,
    error_system,
    grid_gammas,
    initial_gain,
    observability_rank,
    pattern_search,
    synthesize_gain,
    worst_case_gamma,
)


def test_open_loop_error_system(nrho_model):
    rho = box_center(nrho_model.box)
    es = error_system(rho, np.zeros((6, 6)), nrho_model)
    m = nrho_model.matrices(rho)
    assert np.array_equal(es.A_e, m.A)
    assert np.array_equal(es.B_e, m.B_w * nrho_model.input_scale)
    assert es.D_e.shape == (3, 9) and not es.D_e.any()


def test_noise_columns_are_gain_times_weights(nrho_model):
    rho = box_center(nrho_model.box)
    L = np.arange(36.0).reshape(6, 6)
    es = error_system(rho, L, nrho_model)
    w1, w2 = nrho_model.weights(rho)
    W = np.diag([w1] * 3 + [w2] * 3)
    scale = nrho_model.input_scale
    assert np.allclose(es.B_e[:, 3:], L @ W * scale[3:], rtol=1e-14)
    assert np.array_equal(es.B_e[:, :3], nrho_model.matrices(rho).B_w[:, :3] * scale[:3])


def test_unweighted_model_uses_plain_input_matrices(nrho_scenario):
    model = PlantModel(nrho_scenario.mu, nrho_scenario.param_box, nrho_scenario.noise)
    rho = box_center(model.box)
    L = np.arange(36.0).reshape(6, 6)
    m = model.matrices(rho)
    assert np.array_equal(error_system(rho, L, model).B_e, m.B_w + L @ m.D_w)


def test_gamma_scales_with_common_input_intensity(nrho_scenario, nrho_model):
    doubled = PlantModel(nrho_scenario.mu, nrho_scenario.param_box, nrho_scenario.noise,
                         input_scale=2.0 * nrho_model.input_scale)
    rho = box_center(nrho_model.box)
    L = initial_gain(nrho_model, rho, 3.0)
    g = hinf_norm(error_system(rho, L, nrho_model), 1e-9)
    assert hinf_norm(error_system(rho, L, doubled), 1e-9) == pytest.approx(2.0 * g, rel=1e-6)


def test_plant_model_rejects_bad_input_scale(nrho_scenario):
    with pytest.raises(ValueError):
        PlantModel(nrho_scenario.mu, nrho_scenario.param_box, nrho_scenario.noise, input_scale=[1.0] * 6)


def test_open_loop_is_not_stable_anywhere(nrho_model):
    grid = param_grid(nrho_model.box, 2, 2)
    assert worst_case_gamma(np.zeros((6, 6)), grid, nrho_model) == math.inf


def test_observability_at_box_center(nrho_model):
    rho = box_center(nrho_model.box)
    assert observability_rank(plant_A(rho), synthesis.measurement_C(rho)) == 6
    assert observability_rank(np.eye(2), np.array([[1.0, 0.0]])) == 1


def test_initial_gain_places_poles(nrho_model):
    rho = box_center(nrho_model.box)
    L = initial_gain(nrho_model, rho, 3.0)
    es = error_system(rho, L, nrho_model)
    eig = np.sort(np.linalg.eigvals(es.A_e).real)
    assert np.allclose(eig, np.sort(-3.0 * np.array([1.0, 1.2, 1.4, 1.6, 1.8, 2.0])), rtol=1e-5)


def test_doubling_pole_scale_moves_spectrum_left(nrho_model):
    rho = box_center(nrho_model.box)
    a1 = spectral_abscissa(error_system(rho, initial_gain(nrho_model, rho, 2.0), nrho_model).A_e)
    a2 = spectral_abscissa(error_system(rho, initial_gain(nrho_model, rho, 4.0), nrho_model).A_e)
    assert a2 < a1 < 0


def test_initial_gain_requires_observability(nrho_model, monkeypatch):
    monkeypatch.setattr(synthesis, "measurement_C", lambda rho: np.zeros((6, 6)))
    with pytest.raises(NotObservable):
        initial_gain(nrho_model, box_center(nrho_model.box), 3.0)


def test_pattern_search_minimizes_quadratic():
    target = np.array([1.0, -2.0, 0.5])
    res = pattern_search(lambda x, _: float(np.sum((x - target) ** 2)), np.zeros(3), 0.5, 1e-6, 500)
    assert np.allclose(res.x, target, atol=1e-3)
    assert res.trace == sorted(res.trace, reverse=True)


def test_pattern_search_stops_at_target():
    res = pattern_search(lambda x, _: float(np.sum(x ** 2)), np.full(2, 4.0), 0.5, 1e-9, 500, target=1.0)
    assert res.value < 1.0
    assert res.iterations < 50


def test_single_point_grid_equals_point_norm(nrho_model, quick_gain):
    rho = box_center(nrho_model.box)
    L = quick_gain.matrix()
    assert worst_case_gamma(L, [rho], nrho_model, 1e-8) == pytest.approx(
        hinf_norm(error_system(rho, L, nrho_model), 1e-8), rel=1e-7
    )


def test_denser_grid_never_lowers_gamma(nrho_model, quick_gain):
    L = quick_gain.matrix()
    coarse = worst_case_gamma(L, param_grid(nrho_model.box, 3, 3), nrho_model, 1e-8)
    fine = worst_case_gamma(L, param_grid(nrho_model.box, 7, 7), nrho_model, 1e-8)
    assert fine >= coarse * (1 - 1e-6)


def test_quick_gain_is_certified(nrho_model, quick_gain, quick_synthesis_config):
    L = quick_gain.matrix()
    grid = param_grid(quick_gain.box, *quick_synthesis_config.validation_grid)
    for rho in grid:
        assert np.max(np.linalg.eigvals(error_system(rho, L, nrho_model).A_e).real) < 0
    assert math.isfinite(quick_gain.gamma)
    assert quick_gain.spectral_margin > 0
    assert quick_gain.gamma == pytest.approx(float(np.max(grid_gammas(L, grid, nrho_model))), rel=1e-5)
    assert len(quick_gain.log.restarts) == quick_synthesis_config.restarts


@pytest.mark.slow
def test_optimizer_does_not_worsen_initial_gain(nrho_model):
    cfg = SynthesisConfig(synthesis_grid=(2, 2), validation_grid=(3, 3), restarts=1,
                          max_iterations=4, convergence_tol=0.1, max_densify=0)
    grid = param_grid(nrho_model.box, *cfg.synthesis_grid)
    gain = synthesize_gain(cfg, nrho_model.box, nrho_model)
    start = worst_case_gamma(initial_gain(nrho_model, box_center(nrho_model.box), cfg.pole_scale),
                             grid, nrho_model, cfg.gamma_tol)
    assert worst_case_gamma(gain.matrix(), grid, nrho_model, cfg.gamma_tol) <= start * (1 + 1e-3)


@pytest.mark.slow
def test_synthesis_is_deterministic(nrho_model):
    cfg = SynthesisConfig(synthesis_grid=(2, 2), validation_grid=(2, 2), restarts=1,
                          max_iterations=2, convergence_tol=0.2, max_densify=0)
    a = synthesize_gain(cfg, nrho_model.box, nrho_model)
    b = synthesize_gain(cfg, nrho_model.box, nrho_model)
    assert a.L == b.L
    assert a.config_hash == b.config_hash


def test_synthesis_fails_when_no_gain_is_admissible(nrho_model):
    cfg = SynthesisConfig(synthesis_grid=(2, 2), validation_grid=(2, 2), restarts=1,
                          max_iterations=1, convergence_tol=0.4, max_pole_magnitude=1e-3)
    with pytest.raises(SynthesisFailed):
        synthesize_gain(cfg, nrho_model.box, nrho_model)


def test_config_hash_tracks_settings(nrho_model):
    cfg = SynthesisConfig()
    assert config_hash(cfg, nrho_model.box, nrho_model) == config_hash(SynthesisConfig(), nrho_model.box, nrho_model)
    assert config_hash(cfg, nrho_model.box, nrho_model) != config_hash(
        cfg.model_copy(update={"restarts": 2}), nrho_model.box, nrho_model
    )
