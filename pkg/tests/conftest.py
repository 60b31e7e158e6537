import json
from pathlib import Path

import numpy as np
import pytest

from conestab.cones import build_cone
from conestab.domain import ConvexDomain

EXPECTED = json.loads(Path(__file__).with_name("expected_values.json").read_text())


@pytest.fixture(scope="session")
def expected():
    return EXPECTED


@pytest.fixture(scope="session")
def domains():
    return {k: ConvexDomain(build_cone(k, 3), 0.1) for k in ("plane", "y", "t")}


@pytest.fixture(scope="session")
def dom_y(domains):
    return domains["y"]


@pytest.fixture(scope="session")
def dom_t(domains):
    return domains["t"]


@pytest.fixture(scope="session")
def dom_plane(domains):
    return domains["plane"]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
