import json
import logging

import numpy as np
import pytest

from netflow.flow import flow_system
from netflow.graph import cycle_graph, ladder_sequence


# line-graph adjacency of the two example networks, rows i / columns j: e_j flows into e_i
B1 = np.array([
    [0, 0, 0, 1, 0],
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [0, 0, 1, 0, 1],
    [1, 0, 0, 0, 0],
])

B2 = np.array([
    [0, 0, 0, 1, 0, 0, 0, 0, 0],
    [1, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0, 1, 1],
    [0, 0, 1, 0, 1, 0, 0, 0, 0],
    [1, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 1, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 1, 0, 0],
    [0, 0, 0, 0, 0, 1, 0, 0, 0],
])


@pytest.fixture
def b1():
    return B1.copy()


@pytest.fixture
def b2():
    return B2.copy()


@pytest.fixture
def ladder3():
    return ladder_sequence(3)


@pytest.fixture
def g1():
    return ladder_sequence(1).graphs[0]


@pytest.fixture
def g2():
    return ladder_sequence(2).graphs[1]


@pytest.fixture
def g1_system(g1):
    return flow_system(g1)


@pytest.fixture
def g2_system(g2):
    return flow_system(g2)


@pytest.fixture
def two_cycle():
    return flow_system(cycle_graph(2))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def g1_file(tmp_path):
    path = tmp_path / "g1.json"
    path.write_text(json.dumps({
        "vertices": 4,
        "edges": [[1, 2], [2, 3], [3, 4], [4, 1], [2, 4]],
    }))
    return path


class ListHandler(logging.Handler):
    def __init__(self):
        super().__init__(logging.DEBUG)
        self.records = []

    def emit(self, record):
        self.records.append(record)


@pytest.fixture
def netflow_log():
    """ Records of the `netflow` logger, independent of how the CLI configured it. """
    logger = logging.getLogger("netflow")
    handler = ListHandler()
    level = logger.level
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG)
    yield handler.records
    logger.removeHandler(handler)
    logger.setLevel(level)
