import numpy as np
import pytest
from hypothesis import settings

from gmrfsel.lattice import LatticeSpec
from gmrfsel.params import ThetaField

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_theta(rng, lattice, nnz=4, scale=0.1, sigma2=1.0):
    """A valid random parameter: a few symmetric offsets, shrunk until I - C is positive definite."""
    vals = {}
    for _ in range(nnz):
        o = (int(rng.integers(-(lattice.p1 // 2) + 1, lattice.p1 // 2)),
             int(rng.integers(-(lattice.p2 // 2) + 1, lattice.p2 // 2)))
        if o != (0, 0):
            vals[o] = float(rng.normal(scale=scale))
    theta = ThetaField.from_offsets(lattice, vals, sigma2)
    while theta.eigenvalues.max() >= 0.9:
        theta = ThetaField(lattice, theta.coeffs * 0.5, sigma2)
    return theta


def dense_C(theta):
    """``C(theta)`` built entry by entry from its definition."""
    lat = theta.lattice
    C = np.zeros((lat.size, lat.size))
    for a in range(lat.size):
        i1, j1 = divmod(a, lat.p2)
        for b in range(lat.size):
            i2, j2 = divmod(b, lat.p2)
            C[a, b] = theta.coeffs[(i2 - i1) % lat.p1, (j2 - j1) % lat.p2]
    return C


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def torus20():
    return LatticeSpec(20, 20)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
