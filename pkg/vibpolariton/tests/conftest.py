import numpy as np
import pytest

from vibpolariton import KGrid, ModelParams
from vibpolariton.examples import WATER_CONFIG


def pytest_addoption(parser):
    parser.addoption('--run-slow', action='store_true', default=False,
                     help='Run the long acceptance calculations')


def pytest_configure(config):
    config.addinivalue_line('markers',
                            'slow: long acceptance calculation')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--run-slow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --run-slow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope='function')
def params():
    'Coupled chain with the room-temperature water-like parameters'
    return ModelParams.water_defaults()


@pytest.fixture(scope='function')
def matter(params):
    return params.matter_chain()


@pytest.fixture(scope='function')
def harmonic_matter(params):
    return params.replace(g=0.0).matter_chain()


@pytest.fixture(scope='function')
def small_grid(params):
    return KGrid.uniform(params.a, 64)


@pytest.fixture(scope='function')
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture(scope='session')
def water_config_text():
    return WATER_CONFIG.read_text()
