import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_kernel, random_phase
from qpat.domain import (
    AngularQuadrature,
    BoundarySource,
    CoefficientSet,
    ScatteringKernel,
    SpatialGrid,
    apply_scattering,
    boundary_distance,
    discrete_norms,
    validate_coefficients,
    velocity_average,
)
from qpat.errors import CoefficientError, ShapeError

even_n = st.integers(2, 16).map(lambda k: 2 * k)


class TestQuadrature:
    @given(even_n)
    def test_weights_sum_to_one(self, n):
        q = AngularQuadrature(n)
        assert math.isclose(q.weights.sum(), 1.0, abs_tol=1e-15)
        u = np.ones((3, 2, n))
        assert np.allclose(velocity_average(u, q), 1.0, atol=1e-15)

    @given(even_n)
    def test_odd_moment_vanishes(self, n):
        q = AngularQuadrature(n)
        u = np.broadcast_to(q.directions[:, 0], (2, 2, n))
        assert np.abs(velocity_average(u, q)).max() < 1e-14

    def test_half_plane_indicator(self):
        q = AngularQuadrature(8)
        assert not np.any(np.isclose(q.directions, 0.0, atol=1e-12))
        u = np.broadcast_to((q.directions[:, 0] > 0).astype(float), (2, 2, 8))
        assert np.allclose(velocity_average(u, q), 0.5)

    def test_opposite(self):
        q = AngularQuadrature(12)
        assert np.allclose(q.directions[q.opposite], -q.directions)

    @pytest.mark.parametrize("n", [0, 3, 7])
    def test_rejects_bad_counts(self, n):
        with pytest.raises(ValueError):
            AngularQuadrature(n)


class TestScattering:
    def test_constant_is_invariant(self, quad):
        rng = np.random.default_rng(1)
        k = random_kernel(rng, quad)
        assert np.abs(apply_scattering(np.full((3, 3, 8), 2.5), k)).max() < 1e-12

    def test_isotropic_collapses(self, grid, quad, kernel):
        u = random_phase(np.random.default_rng(2), grid, quad)
        expected = velocity_average(u, quad)[..., None] - u
        assert np.allclose(apply_scattering(u, kernel), expected)

    @given(st.integers(0, 2**32 - 1))
    def test_conserves_mass(self, seed):
        rng = np.random.default_rng(seed)
        q = AngularQuadrature(8)
        k = random_kernel(rng, q)
        u = rng.standard_normal((4, 3, 8))
        assert np.abs(velocity_average(apply_scattering(u, k), q)).max() < 1e-12

    @given(st.floats(-0.9, 0.9))
    def test_henyey_greenstein_normalized(self, a):
        q = AngularQuadrature(16)
        k = ScatteringKernel.henyey_greenstein(q, a)
        assert np.allclose(k.theta @ q.weights, 1.0, atol=1e-12)
        assert np.allclose(q.weights @ k.theta, 1.0, atol=1e-12)

    def test_unnormalized_kernel_rejected(self, quad):
        with pytest.raises(ValueError):
            ScatteringKernel(quad, 2.0 * np.ones((8, 8)))


class TestBoundaryDistance:
    def test_axis(self):
        assert boundary_distance((0.5, 0.5), (1.0, 0.0), SpatialGrid(4, 4)) == pytest.approx(0.5)

    def test_diagonal(self):
        v = (math.sqrt(0.5), math.sqrt(0.5))
        assert boundary_distance((0.5, 0.5), v, SpatialGrid(4, 4)) == pytest.approx(
            math.sqrt(2) / 2, abs=1e-12)

    def test_on_inflow_face(self):
        assert boundary_distance((0.0, 0.3), (1.0, 0.0), SpatialGrid(4, 4)) == 0.0

    def test_outside(self):
        with pytest.raises(ValueError):
            boundary_distance((1.5, 0.5), (1.0, 0.0), SpatialGrid(4, 4))

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0, 2 * math.pi))
    def test_chord_length(self, x, y, t):
        # backward plus forward exit distance is the full chord through x
        g = SpatialGrid(4, 4)
        v = np.array([math.cos(t), math.sin(t)])
        back = boundary_distance((x, y), v, g)
        fwd = boundary_distance((x, y), -v, g)
        p, q = np.array([x, y]) - back * v, np.array([x, y]) + fwd * v
        assert back + fwd <= g.diameter + 1e-12
        for pt in (p, q):
            on_edge = min(pt[0], 1 - pt[0], pt[1], 1 - pt[1])
            assert abs(on_edge) < 1e-9


class TestNorms:
    def test_zero(self, grid, quad):
        z = np.zeros(grid.shape)
        for which in ("Linf", "L2_Omega", "Lp_Omega", "W1p_discrete"):
            assert discrete_norms(z, which, grid, p=4) == 0.0
        assert discrete_norms(np.zeros((12, 12, 8)), "L2_X", grid, quad) == 0.0

    def test_unit_measure(self, grid):
        assert discrete_norms(np.ones(grid.shape), "L2_Omega", grid) == pytest.approx(1.0)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    def test_jensen(self, seed, scale):
        g, q = SpatialGrid(6, 5), AngularQuadrature(8)
        f = random_phase(np.random.default_rng(seed), g, q, scale)
        mean = velocity_average(f, q)
        assert discrete_norms(mean, "L2_Omega", g) <= discrete_norms(f, "L2_X", g, q) * (1 + 1e-14)

    def test_w2p_needs_p_above_two(self, grid):
        with pytest.raises(ValueError):
            discrete_norms(np.ones(grid.shape), "W2p_discrete", grid, p=2)

    def test_quadratic_second_derivatives(self):
        # centred differences are exact on quadratics, so the surrogate is too
        g = SpatialGrid(20, 20)
        X, Y = g.centers()
        f = X ** 2
        expected = (g.cell_area * np.sum(f ** 4 + (2 * X) ** 4 + 2 ** 4)) ** 0.25
        assert discrete_norms(f, "W2p_discrete", g, p=4) == pytest.approx(expected, rel=1e-12)

    def test_unknown(self, grid):
        with pytest.raises(ValueError):
            discrete_norms(np.ones(grid.shape), "H1", grid)

    def test_boundary_sup(self, grid, quad):
        g = BoundarySource.constant(grid, quad, 3.0)
        assert discrete_norms(g, "Ldxi_inf_Gamma") == 3.0


class TestCoefficients:
    def test_unit_set(self, grid):
        cert = validate_coefficients(CoefficientSet.constant(grid, c0=1.0, C0=1.0))
        assert cert.nu == pytest.approx(0.5)
        assert cert.C2 == pytest.approx(2.0)

    def test_ratio_and_sigma_bar(self, grid):
        c = CoefficientSet.constant(grid, sigma_a=0.1, sigma_s=0.9, c0=0.1, C0=1.0)
        cert = validate_coefficients(c)
        assert cert.nu == pytest.approx(0.1)
        assert cert.sigma_bar == pytest.approx(1.0)

    def test_zero_rejected(self, grid):
        sa = np.ones(grid.shape)
        sa[3, 4] = 0.0
        with pytest.raises(CoefficientError):
            validate_coefficients(CoefficientSet(grid, 1.0, sa, 1.0, 1.0))

    def test_relaxed_allows_pure_absorption(self, grid):
        c = CoefficientSet.constant(grid, sigma_s=0.0, sigma_b=0.0, c0=1.0, C0=1.0)
        with pytest.raises(CoefficientError):
            validate_coefficients(c)
        assert validate_coefficients(c, strict=False).nu == 1.0

    def test_bounds_violation(self, grid):
        with pytest.raises(CoefficientError):
            validate_coefficients(CoefficientSet.constant(grid, sigma_a=3.0, c0=0.5, C0=2.0))

    def test_layer_mismatch(self):
        g = SpatialGrid(10, 10, boundary_layer_delta=0.2)
        sa = np.ones(g.shape)
        sa[0, 5] = 1.5
        with pytest.raises(CoefficientError):
            validate_coefficients(CoefficientSet(g, 1.0, sa, 1.0, 1.0, sigma_a_layer=1.0))

    def test_shape_mismatch(self, grid):
        with pytest.raises(ValueError):
            CoefficientSet(grid, 1.0, np.ones((3, 3)), 1.0, 1.0)


def test_velocity_average_shape(quad):
    with pytest.raises(ShapeError):
        velocity_average(np.ones((2, 2, 5)), quad)
