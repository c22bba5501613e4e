import pytest

from models.simulation_models import SolverConfig
from models.system_models import LinearSystem
from services.system_service import get_registry_model


@pytest.fixture
def scalar_lti():
    return get_registry_model("scalar-lti")


@pytest.fixture
def lambda_system():
    return get_registry_model("lambda-system")


@pytest.fixture
def coarse():
    return SolverConfig(h=1e-2)


@pytest.fixture
def fine():
    return SolverConfig(h=1e-3)


@pytest.fixture
def unit_system():
    """dx/dt = -x + u, y = x"""
    return LinearSystem.scalar(1.0, 1.0, 1.0)
