import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from isaxsearch import IndexConfig, build_index, generate_random_walk  # noqa: E402


@pytest.fixture(scope="session")
def walk_data():
    return generate_random_walk(3000, 64, seed=11, znorm=True)


@pytest.fixture(scope="session")
def walk_queries():
    return generate_random_walk(15, 64, seed=12, znorm=True)


@pytest.fixture(scope="session")
def small_config():
    return IndexConfig(n=64, w=8, leaf_capacity=40, chunk_size=500,
                       n_index_workers=3, n_search_workers=3, n_queues=4)


@pytest.fixture(scope="session")
def walk_index(walk_data, small_config):
    return build_index(walk_data, small_config)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
