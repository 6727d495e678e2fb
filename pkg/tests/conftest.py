import numpy as np
import pytest

from pcgeom import shapes
from pcgeom.carre_du_champ import gamma_blocks
from pcgeom.function_space import eigenbasis
from pcgeom.kernel import markov_from_points


def build(X, n0=50, n1=None, coords="raw", knn=32):
    model = markov_from_points(X, knn=knn)
    basis = eigenbasis(model, n0)
    gt = gamma_blocks(model, basis, X, n1=min(n0, 50) if n1 is None else n1, coords=coords)
    return model, basis, gt


@pytest.fixture(scope="session")
def circle():
    X = shapes.circle(400, seed=1)
    return (X,) + build(X)


@pytest.fixture(scope="session")
def small_square():
    """Random flat square, raw coordinates, small basis: fast first-order checks."""
    X = shapes.flat_square(600, seed=3)
    return (X,) + build(X, n0=30, n1=10)


@pytest.fixture(scope="session")
def grid_square():
    """45 x 45 grid with smoothed coordinates and n0 = n1 = 150."""
    X = shapes.flat_square(2025, grid=True)
    return (X,) + build(X, n0=150, n1=150, coords="smooth")


@pytest.fixture(scope="session")
def annulus():
    X = shapes.annulus(2000, seed=5)
    return (X,) + build(X, coords="smooth")


@pytest.fixture(scope="session")
def sphere_small():
    X = shapes.sphere(800, seed=2)
    return (X,) + build(X, n0=30, n1=10)


def interior(X, margin=0.25):
    return np.all(np.abs(X) <= 1 - margin, axis=1)


def l2(mu, F, mask=None):
    w = mu if mask is None else mu * mask
    F = F if F.ndim == 2 else F[:, None]
    return float(np.sqrt(np.sum(w[:, None] * F ** 2)))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
