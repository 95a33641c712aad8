import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from graphmfg import DomainShape, Graph, build_lattice, gaussian_density

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def lattice11():
    return build_lattice(11, 11, DomainShape.square(-3, 3))


@pytest.fixture(scope="session")
def lattice5():
    return build_lattice(5, 5, DomainShape.square(-3, 3))


@pytest.fixture(scope="session")
def two_node():
    return Graph(np.array([[0.0, 0.0], [1.0, 0.0]]), [0], [1], [1.0])


@pytest.fixture(scope="session")
def transport11(lattice11):
    mu0 = gaussian_density(lattice11, (-1.2, -1.2), 0.2).rho
    muT = gaussian_density(lattice11, (1.2, 1.2), 0.2).rho
    return lattice11, mu0, muT


def interior_density(rng, n, low=0.2):
    """Strictly positive probability vector bounded away from zero."""
    r = rng.uniform(low, 1.0, size=n)
    return r / r.sum()


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
