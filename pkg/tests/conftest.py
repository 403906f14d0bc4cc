import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

from samplers import GBMSampler, SyntheticSampler  # noqa: E402
from shared.models import MeshHierarchy  # noqa: E402

RUN_SLOW = os.getenv('MLMC_RUN_SLOW', 'false').lower() in ('1', 'true', 'yes')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: ensemble acceptance runs, enabled with MLMC_RUN_SLOW=1')


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason='set MLMC_RUN_SLOW=1 to run ensemble acceptance tests')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def unit_hierarchy():
    return MeshHierarchy(h0=1.0, beta=2, gamma=1.0)


@pytest.fixture
def synthetic_sampler():
    return SyntheticSampler(q1=1.0, q2=1.0, QW=1.0, QS=1.0)


@pytest.fixture
def gbm_sampler():
    return GBMSampler()
