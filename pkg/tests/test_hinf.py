import math

import numpy as np
import pytest

from navsim.core.errors import Unstable
from navsim.services.hinf_norm import (
    StateSpace,
    frequency_response_peak,
    hinf_norm,
    hinf_norm_with_frequency,
    is_hurwitz,
    spectral_abscissa,
)

ZETA = 0.1


def first_order(a):
    return StateSpace.from_arrays([[-a]], [[1.0]], [[1.0]])


def resonant(zeta=ZETA, w0=1.0):
    return StateSpace.from_arrays(
        [[0.0, 1.0], [-w0 ** 2, -2 * zeta * w0]],
        [[0.0], [w0 ** 2]],
        [[1.0, 0.0]],
    )


def random_stable(rng, n, m=2, p=2):
    M = rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(M).real) + rng.uniform(0.2, 2.0)
    return StateSpace.from_arrays(M - shift * np.eye(n), rng.standard_normal((n, m)), rng.standard_normal((p, n)))


@pytest.mark.parametrize("a, expected", [(1.0, 1.0), (2.0, 0.5)])
def test_first_order_norms(a, expected):
    assert hinf_norm(first_order(a), 1e-8) == pytest.approx(expected, rel=1e-6)


def test_resonant_peak():
    expected = 1.0 / (2 * ZETA * math.sqrt(1 - ZETA ** 2))
    gamma, w = hinf_norm_with_frequency(resonant(), 1e-8)
    assert gamma == pytest.approx(expected, rel=1e-6)
    assert w == pytest.approx(math.sqrt(1 - 2 * ZETA ** 2), rel=1e-2)


def test_feedthrough_is_included():
    # 1/(s+1) + 1 peaks at DC with gain 2
    sys = StateSpace.from_arrays([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert hinf_norm(sys, 1e-8) == pytest.approx(2.0, rel=1e-6)


def test_unstable_system_raises():
    with pytest.raises(Unstable):
        hinf_norm(first_order(-1.0))


def test_marginally_stable_system_raises():
    with pytest.raises(Unstable):
        hinf_norm(StateSpace.from_arrays([[0.0]], [[1.0]], [[1.0]]))


def test_zero_input_matrix_gives_zero_norm():
    sys = StateSpace.from_arrays([[-1.0, 0.0], [0.0, -2.0]], np.zeros((2, 1)), [[1.0, 1.0]])
    assert hinf_norm(sys) == 0.0


def test_matches_frequency_sweep_on_random_systems():
    rng = np.random.default_rng(20)
    omegas = np.logspace(-3, 3, 10_000)
    for _ in range(20):
        sys = random_stable(rng, int(rng.integers(2, 7)))
        gamma = hinf_norm(sys, 1e-8)
        peak, _ = frequency_response_peak(sys, omegas)
        assert gamma >= peak * (1 - 1e-8)
        assert gamma == pytest.approx(peak, rel=1e-3)


def test_stop_above_returns_early_lower_bound():
    gamma, _ = hinf_norm_with_frequency(resonant(), 1e-8, stop_above=0.5)
    assert gamma > 0.5
    assert gamma <= hinf_norm(resonant(), 1e-8) * (1 + 1e-8)


def test_hurwitz_helpers():
    assert spectral_abscissa(np.diag([-1.0, -3.0])) == pytest.approx(-1.0)
    assert is_hurwitz(np.diag([-1.0, -3.0]))
    assert not is_hurwitz(np.diag([-1.0, 0.0]))
    assert not is_hurwitz(np.array([[0.0, 1.0], [-1.0, 0.0]]))
