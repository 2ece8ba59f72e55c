import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qpat.domain import (
    AngularQuadrature,
    BoundarySource,
    CoefficientSet,
    ScatteringKernel,
    SpatialGrid,
    constant_trace,
    gaussian_bump,
)

settings.register_profile(
    "qpat", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture]
)
settings.load_profile("qpat")


@pytest.fixture
def grid():
    return SpatialGrid(12, 12)


@pytest.fixture
def quad():
    return AngularQuadrature(8)


@pytest.fixture
def kernel(quad):
    return ScatteringKernel.isotropic_kernel(quad)


@pytest.fixture
def transport_set(grid):
    sb = gaussian_bump(grid, 1.0, 0.5, (0.5, 0.5), 0.2)
    return CoefficientSet(grid, 1.0, 1.0, 1.0, sb, None, 0.5, 2.0)


@pytest.fixture
def diffusion_set():
    g = SpatialGrid(16, 16)
    sb = gaussian_bump(g, 1.0, 0.5, (0.5, 0.5), 0.2)
    gamma = gaussian_bump(g, 1.0, 0.3, (0.4, 0.6), 0.2)
    return CoefficientSet(g, 1.0, 1.0, 1.0, sb, gamma, 0.5, 2.0)


@pytest.fixture
def unit_source(grid, quad):
    return BoundarySource.constant(grid, quad, 1.0)


@pytest.fixture
def unit_trace(diffusion_set):
    return constant_trace(diffusion_set.grid, 1.0)


def random_phase(rng, grid, quad, scale=1.0):
    return scale * rng.standard_normal((grid.nx, grid.ny, quad.n_dirs))


def random_kernel(rng, quad, sweeps=200):
    th = rng.uniform(0.1, 2.0, (quad.n_dirs, quad.n_dirs))
    w = quad.weights
    for _ in range(sweeps):
        th = th / (th @ w)[:, None]
        th = th / (w @ th)[None, :]
    return ScatteringKernel(quad, th)


def smooth_field(rng, grid, lo, hi):
    """Random smooth field with values in [lo, hi]."""
    X, Y = grid.centers()
    f = np.zeros(grid.shape)
    for _ in range(3):
        cx, cy, w = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.3)
        f += rng.uniform(-1, 1) * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * w * w))
    f = (f - f.min()) / (np.ptp(f) or 1.0)
    return lo + (hi - lo) * f
