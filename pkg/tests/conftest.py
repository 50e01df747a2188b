import numpy as np
import pytest

from chdg.assembly import CellTab
from chdg.chcore import CHOperators, CHParams
from chdg.mesh import build_structured
from chdg.spaces import DGSpace, HdivSpace


@pytest.fixture(scope="session")
def mesh8():
    return build_structured(8, 8, 1.0, 1.0, True, True)


@pytest.fixture(scope="session")
def spaces8(mesh8):
    return DGSpace(mesh8, 1), HdivSpace(mesh8, 2)


@pytest.fixture(scope="session")
def tab8(mesh8):
    return CellTab(mesh8)


@pytest.fixture(scope="session")
def spinodal_ops8(spaces8):
    dg, hdiv = spaces8
    return CHOperators(dg, hdiv, CHParams(d0=0.1, eps=0.02))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
