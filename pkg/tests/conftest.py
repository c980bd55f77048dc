import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings as hsettings

from navsim.core.config import settings
from navsim.schemas.scenario import SynthesisConfig
from navsim.services.simulation import NRHO_SCENARIO_PATH, load_scenario, plant_model
from navsim.services.synthesis import synthesize_gain

hsettings.register_profile("default", max_examples=100, deadline=None)
hsettings.register_profile("ci", max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
hsettings.register_profile("dev", max_examples=20, deadline=None)
hsettings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))

MU = settings.EARTH_MOON_MU


def state_at(r1, r2, mu=MU, velocity=(0.0, 0.0, 0.0)):
    """A state with the given primary distances, placed in the x-y plane (y > 0)."""
    xe = (1.0 + r1 * r1 - r2 * r2) / 2.0      # x + mu
    y = math.sqrt(max(r1 * r1 - xe * xe, 0.0))
    return np.array([xe - mu, y, 0.0, *velocity])


@pytest.fixture(autouse=True)
def isolated_log_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "LOG_DIR", str(tmp_path / "logs"))


@pytest.fixture(scope="session")
def nrho_scenario():
    return load_scenario(NRHO_SCENARIO_PATH)


@pytest.fixture(scope="session")
def nrho_model(nrho_scenario):
    return plant_model(nrho_scenario)


@pytest.fixture(scope="session")
def quick_synthesis_config():
    return SynthesisConfig(
        synthesis_grid=(2, 2),
        validation_grid=(3, 3),
        restarts=1,
        max_iterations=3,
        convergence_tol=0.1,
        max_densify=2,
    )


@pytest.fixture(scope="session")
def quick_gain(nrho_scenario, nrho_model, quick_synthesis_config):
    return synthesize_gain(quick_synthesis_config, nrho_scenario.param_box, nrho_model)
