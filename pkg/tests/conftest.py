import numpy as np
import pytest

from kfbi import functions as fn
from kfbi.bie import Discretization
from kfbi.geometry import Circle, Ellipse, Geometry
from kfbi.grid import build_grid
from kfbi.interface import Source

ELLIPSE = Geometry([Ellipse((0.0, 0.0), 1.0, 0.5, -np.pi / 6)])
CIRCLE = Geometry([Circle((0.013, -0.021), 0.6)])


def source(u: fn.ExpSum, sigma: float = 1.0, kappa: float = 0.0) -> Source:
    """Right-hand side ``sigma Lap u - kappa u`` with its analytic Laplacian."""
    return Source(
        lambda x, y: sigma * u.laplacian(x, y) - kappa * u(x, y),
        lambda x, y: sigma * u.bilaplacian(x, y) - kappa * u.laplacian(x, y),
    )


def discretization(geometry: Geometry, n: int, half_width: float = 1.2) -> Discretization:
    return Discretization(build_grid((-half_width, -half_width), (half_width, half_width), n), geometry)


def order(coarse: float, fine: float) -> float:
    return float(np.log2(coarse / fine))


@pytest.fixture(scope="session")
def ellipse64() -> Discretization:
    return discretization(ELLIPSE, 64)


@pytest.fixture(scope="session")
def circle_disc() -> dict[int, Discretization]:
    return {n: discretization(CIRCLE, n, 1.0) for n in (32, 64, 128)}


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
