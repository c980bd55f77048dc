import numpy as np
import pytest
from hypothesis import assume, example, given, strategies as st

from conftest import MU, state_at
from navsim.core.errors import IllPosed
from navsim.schemas.scenario import NoiseModelConfig, ParamBox
from navsim.services.cr3bp import cr3bp_derivative, primary_distances
from navsim.services.lft_model import (
    LftBlock,
    ParamPoint,
    PlantModel,
    box_center,
    clamp_to_box,
    denormalize,
    lft_eval,
    lpv_residual,
    lpv_tolerance,
    measurement_C,
    measurement_d,
    multiplicative_block,
    noise_D,
    noise_weights,
    normalize_param,
    param_grid,
    plant_A,
    plant_b,
)
from navsim.services.sensing import unit_vectors

BOX = ParamBox()
NOISE = NoiseModelConfig()


@st.composite
def states_in_box(draw):
    """States whose (r1, r2) falls inside the default box."""
    r2 = draw(st.floats(min_value=BOX.r2_min, max_value=BOX.r2_max))
    theta = draw(st.floats(min_value=0.0, max_value=np.pi))
    phi = draw(st.floats(min_value=0.0, max_value=2 * np.pi))
    v = draw(st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=3, max_size=3))
    p = np.array([1.0 - MU, 0.0, 0.0]) + r2 * np.array(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
    )
    s = np.concatenate([p, v])
    r1, _ = primary_distances(s)
    assume(BOX.r1_min <= r1 <= BOX.r1_max)
    return s


def test_plant_A_structure():
    rho = ParamPoint(1.0, 0.1)
    A = plant_A(rho)
    assert np.array_equal(A[0:3, 3:6], np.eye(3))
    assert np.array_equal(A[0:3, 0:3], np.zeros((3, 3)))
    assert A[3, 4] == 2.0 and A[4, 3] == -2.0
    assert A[3, 0] == A[4, 1]
    assert A[3, 0] - A[5, 2] == pytest.approx(1.0)
    a63 = (MU - 1) / 1.0 - MU / 0.1 ** 3
    assert A[5, 2] == pytest.approx(a63)
    assert plant_b(rho)[3] == pytest.approx(MU * (1 - MU) * (1 / 0.1 ** 3 - 1.0))
    assert np.count_nonzero(plant_b(rho)) == 1


@given(states_in_box())
@example(np.array([0.98784942, 0.0, 0.01171875, 0.0, 0.0, 0.0]))
def test_lpv_form_reproduces_nonlinear_dynamics(s):
    rho = ParamPoint(*primary_distances(s))
    f = cr3bp_derivative(s)
    assert np.all(np.abs(f - lpv_residual(s, rho, MU)) <= lpv_tolerance(s, rho, MU))


def test_lpv_tolerance_tracks_cancelling_terms_near_the_moon():
    s = np.array([0.98784942, 0.0, 0.01171875, 0.0, 0.0, 0.0])
    rho = ParamPoint(*primary_distances(s))
    a41 = plant_A(rho)[3, 0]
    assert abs(a41 * s[0]) > 1e3
    tol = lpv_tolerance(s, rho, MU)
    assert tol[3] > 1e-12
    assert tol[3] < 1e-9
    # rows without coupling terms keep the plain relative bound
    assert tol[0] == pytest.approx(1e-12, rel=1e-3)


@given(states_in_box())
def test_lpv_output_reproduces_unit_vectors(s):
    rho = ParamPoint(*primary_distances(s))
    y = measurement_C(rho) @ s + measurement_d(rho)
    e1, e2 = unit_vectors(s)
    assert np.max(np.abs(y - np.concatenate([e1, e2]))) <= 1e-12


def test_linear_noise_weights_hit_endpoints():
    lo = ParamPoint(BOX.r1_min, BOX.r2_min)
    hi = ParamPoint(BOX.r1_max, BOX.r2_max)
    assert noise_weights(lo, 1.0, 10.0, BOX) == pytest.approx((1.0, 1.0))
    assert noise_weights(hi, 1.0, 10.0, BOX) == pytest.approx((10.0, 10.0))
    w1, w2 = noise_weights(box_center(BOX), 1.0, 10.0, BOX)
    assert w1 == pytest.approx(5.5) and w2 == pytest.approx(5.5)


def test_noise_weights_clamp_outside_box():
    outside = ParamPoint(BOX.r1_max * 2, BOX.r2_min / 2)
    assert noise_weights(outside, 1.0, 10.0, BOX) == pytest.approx((10.0, 1.0))


def test_proportional_noise_weights_scale_with_range():
    w1, w2 = noise_weights(ParamPoint(BOX.r1_max, BOX.r2_max / 2), 1.0, 10.0, BOX, "proportional")
    assert w1 == pytest.approx(10.0)
    assert w2 == pytest.approx(5.0)


def test_noise_D_blocks():
    D = noise_D(box_center(BOX), 1.0, 10.0, BOX)
    assert D.shape == (6, 9)
    assert np.array_equal(D[:, 0:3], np.zeros((6, 3)))
    assert np.allclose(D[0:3, 3:6], 5.5 * np.eye(3))
    assert np.allclose(D[3:6, 6:9], 5.5 * np.eye(3))
    assert np.array_equal(D[0:3, 6:9], np.zeros((3, 3)))


def test_plant_model_bundles_matrices():
    model = PlantModel(MU, BOX, NOISE)
    rho = ParamPoint(1.0, 0.05)
    m = model.matrices(rho)
    assert np.array_equal(m.A, plant_A(rho, MU))
    assert np.array_equal(m.C_y, measurement_C(rho))
    assert np.array_equal(m.B_w[3:6, 0:3], np.eye(3))
    assert np.array_equal(m.C_z, np.hstack([np.eye(3), np.zeros((3, 3))]))
    assert np.allclose(m.D_w[0, 3], model.weights(rho)[0])


@given(st.floats(min_value=BOX.r2_min, max_value=BOX.r2_max))
def test_normalize_round_trip(r):
    p = normalize_param(r, BOX.r2_min, BOX.r2_max)
    assert -1.0 - 1e-12 <= p.delta <= 1.0 + 1e-12
    assert not p.out_of_box or abs(p.delta) - 1.0 < 1e-12
    assert denormalize(p) == pytest.approx(r, rel=1e-12)


def test_normalize_flags_values_outside_interval():
    assert normalize_param(2.0, 0.5, 1.5).out_of_box
    assert normalize_param(0.5, 0.5, 1.5).delta == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        normalize_param(1.0, 1.5, 0.5)


@given(st.floats(min_value=-1.0, max_value=1.0))
def test_multiplicative_block_closes_to_scaled_nominal(delta):
    M = multiplicative_block(2.0, 0.25)
    out = lft_eval(M, np.array([[delta]]))
    assert out[0, 0] == pytest.approx(2.0 * (1 + 0.25 * delta), rel=1e-14)


def test_lft_eval_matches_closed_form():
    M = LftBlock(
        M11=np.array([[0.5]]),
        M12=np.array([[1.0, 2.0]]),
        M21=np.array([[3.0], [4.0]]),
        M22=np.eye(2),
    )
    d = 0.4
    expected = np.eye(2) + np.array([[3.0], [4.0]]) * d / (1 - 0.5 * d) @ np.array([[1.0, 2.0]])
    assert np.allclose(lft_eval(M, np.array([[d]])), expected, rtol=1e-14)


def test_lft_eval_rejects_singular_interconnection():
    M = LftBlock(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
    with pytest.raises(IllPosed):
        lft_eval(M, np.array([[1.0]]))


def test_param_grid_includes_vertices_in_r1_major_order():
    grid = param_grid(BOX, 3, 4)
    assert len(grid) == 12
    assert grid[0].as_tuple() == (BOX.r1_min, BOX.r2_min)
    assert grid[3].as_tuple() == (BOX.r1_min, BOX.r2_max)
    assert grid[-1].as_tuple() == (BOX.r1_max, BOX.r2_max)
    with pytest.raises(ValueError):
        param_grid(BOX, 1, 3)


def test_clamp_reports_change():
    inside = box_center(BOX)
    assert clamp_to_box(inside, BOX) == (inside, False)
    rho, clamped = clamp_to_box(ParamPoint(1.0, 0.001), BOX)
    assert clamped and rho.r2 == BOX.r2_min


def test_param_point_rejects_non_positive_ranges():
    with pytest.raises(ValueError):
        ParamPoint(0.0, 1.0)


def test_measurement_at_constructed_geometry():
    s = state_at(1.0, 0.1)
    assert primary_distances(s) == pytest.approx((1.0, 0.1), rel=1e-12)
