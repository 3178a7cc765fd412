import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tubempc.controller import synthesize
from tubempc.demo import DEMO_PROBLEMS
from tubempc.problem_io import config_from_problem, plant_from_problem

# LP-backed properties have variable latency; deadlines would flake
settings.register_profile("suite", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture(scope="session")
def scalar_problem():
    return DEMO_PROBLEMS["scalar_chain"]()


@pytest.fixture(scope="session")
def scalar_plant(scalar_problem):
    return plant_from_problem(scalar_problem)


@pytest.fixture(scope="session")
def scalar_artifact(scalar_problem, scalar_plant):
    return synthesize(scalar_plant, config_from_problem(scalar_problem))


@pytest.fixture(scope="session")
def di_problem():
    return DEMO_PROBLEMS["double_integrator"]()


@pytest.fixture(scope="session")
def di_plant(di_problem):
    return plant_from_problem(di_problem)


@pytest.fixture(scope="session")
def di_artifact(di_problem, di_plant):
    return synthesize(di_plant, config_from_problem(di_problem))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
