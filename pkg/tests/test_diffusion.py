import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import smooth_field
from qpat.diffusion import (
    EllipticOperator,
    conjugate_gradient,
    inverse_sup_bound,
    operator_for,
    solve_linear_diffusion,
    solve_semilinear_diffusion,
)
from qpat.domain import CoefficientSet, SpatialGrid, constant_trace, trace_from_function
from qpat.errors import CoefficientError, PreconditionError
from qpat.linearization import solve_u1_diffusion


def unit_set(n, **kw):
    g = SpatialGrid(n, n)
    base = dict(xi=1.0, sigma_a=1.0, sigma_s=1.0, sigma_b=1.0, gamma=1.0, c0=1.0, C0=1.0)
    base.update(kw)
    return CoefficientSet.constant(g, **base)


def manufactured_error(n):
    c = unit_set(n)
    X, Y = c.grid.centers()
    exact = np.sin(np.pi * X) * np.sin(np.pi * Y)
    S = (2 * np.pi ** 2 + 1.0) * exact
    u, _ = solve_linear_diffusion(c, np.zeros(c.grid.n_faces), S=S)
    return np.abs(u - exact).max()


def cosh_error(n):
    c = unit_set(n)
    prof = lambda x, y: np.cosh(x - 0.5) / np.cosh(0.5)  # noqa: E731
    u, _ = solve_linear_diffusion(c, trace_from_function(c.grid, prof))
    X, Y = c.grid.centers()
    return np.abs(u - prof(X, Y)).max()


def test_zero_data():
    c = unit_set(8)
    u, _ = solve_linear_diffusion(c, np.zeros(c.grid.n_faces))
    assert not np.any(u)


@pytest.mark.parametrize("err", [manufactured_error, cosh_error])
def test_second_order(err):
    e = [err(n) for n in (16, 32, 64)]
    orders = [math.log2(a / b) for a, b in zip(e, e[1:])]
    assert all(1.8 <= p <= 2.2 for p in orders), orders


def test_operator_symmetric_and_dominant(diffusion_set):
    d = operator_for(diffusion_set).diagnostics()
    assert d["asymmetry"] < 1e-12
    assert d["min_dominance_margin"] > 0


def test_rejects_nonpositive_gamma():
    g = SpatialGrid(4, 4)
    with pytest.raises(CoefficientError):
        EllipticOperator.assemble(g, np.zeros(g.shape))


def test_cg_energy_monotone(diffusion_set):
    op = operator_for(diffusion_set)
    rhs = op.boundary_rhs(constant_trace(diffusion_set.grid, 1.0)).ravel()
    res = conjugate_gradient(op.matrix, rhs, tol=1e-13)
    e = np.asarray(res.energies)
    assert np.all(np.diff(e) <= 1e-12 * np.abs(e).max())
    assert res.residual <= 1e-13


def test_cg_matches_direct(diffusion_set):
    import scipy.sparse.linalg as sla
    op = operator_for(diffusion_set)
    rhs = np.random.default_rng(0).standard_normal(op.matrix.shape[0])
    x = conjugate_gradient(op.matrix, rhs, tol=1e-14).x
    assert np.allclose(x, sla.spsolve(op.matrix.tocsc(), rhs), atol=1e-11)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15)
def test_maximum_principle(seed):
    rng = np.random.default_rng(seed)
    g = SpatialGrid(10, 10)
    c = CoefficientSet(g, 1.0, smooth_field(rng, g, 0.5, 2.0), 1.0, 1.0,
                       smooth_field(rng, g, 0.5, 2.0), 0.5, 2.0)
    trace = rng.uniform(0, 3, g.n_faces)
    u, _ = solve_linear_diffusion(c, trace)
    assert u.max() <= trace.max() + 1e-10
    assert u.min() >= -1e-12


def test_inverse_bound_is_sup_norm(diffusion_set):
    op = operator_for(diffusion_set)
    m = inverse_sup_bound(op)
    rng = np.random.default_rng(1)
    for _ in range(5):
        S = rng.uniform(-1, 1, diffusion_set.grid.shape)
        v, _ = solve_linear_diffusion(diffusion_set, np.zeros(diffusion_set.grid.n_faces), S=S)
        assert np.abs(v).max() <= m * np.abs(S).max() * (1 + 1e-9)


class TestSemilinear:
    def test_zero_sigma_b(self, diffusion_set, unit_trace):
        c = diffusion_set.replace(sigma_b=np.zeros(diffusion_set.grid.shape))
        g = 1e-2 * unit_trace
        u, _ = solve_semilinear_diffusion(c, g)
        u0, _ = solve_linear_diffusion(c, g)
        assert np.array_equal(u, u0)

    def test_positive_and_below_linear(self, diffusion_set, unit_trace):
        g = 1e-2 * unit_trace
        u, rep = solve_semilinear_diffusion(diffusion_set, g)
        u0, _ = solve_linear_diffusion(diffusion_set, g)
        assert np.all(u > 0)
        assert np.all(u <= u0 + 1e-15)
        assert rep.ball_ok
        assert max(rep.picard_ratios) <= rep.contraction_bound < 1

    def test_second_order_remainder(self, diffusion_set, unit_trace):
        u1 = solve_u1_diffusion(diffusion_set, unit_trace)
        r = []
        for eps in (1e-2, 5e-3):
            u, _ = solve_semilinear_diffusion(diffusion_set, eps * unit_trace, tol=1e-15)
            r.append(np.abs(u - eps * u1).max())
        assert r[0] / r[1] == pytest.approx(4.0, rel=0.05)

    def test_large_data_rejected(self, diffusion_set, unit_trace):
        with pytest.raises(PreconditionError, match="contraction"):
            solve_semilinear_diffusion(diffusion_set, 10.0 * unit_trace)
