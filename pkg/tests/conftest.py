import os
import sys

import pytest

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

from models import loop_gain  # noqa: E402
from experiments.dataset import load_config  # noqa: E402

CONFIG_DIR = os.path.join(_ROOT, "configs")


@pytest.fixture(scope="session")
def fixture_config():
    return load_config(os.path.join(CONFIG_DIR, "internal_supply.json"))


@pytest.fixture(scope="session")
def compensated_config():
    return load_config(os.path.join(CONFIG_DIR, "internal_supply_compensated.json"))


@pytest.fixture(scope="session")
def well_behaved_config():
    return load_config(os.path.join(CONFIG_DIR, "well_behaved_supply.json"))


@pytest.fixture(scope="session")
def uncompensated_model(fixture_config):
    return fixture_config.model(compensated=False)


@pytest.fixture(scope="session")
def compensated_model(compensated_config):
    return compensated_config.model(compensated=True)


@pytest.fixture(scope="session")
def uncompensated_loop(uncompensated_model):
    return loop_gain(uncompensated_model)


@pytest.fixture(scope="session")
def compensated_loop(compensated_model):
    return loop_gain(compensated_model)
