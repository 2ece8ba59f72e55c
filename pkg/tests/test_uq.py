import math

import numpy as np
import pytest

from qpat.uq import u1_sensitivity_check, thread_count, uq_diffusion_sweep, uq_transport_sweep

ETAS = (0.0, 0.01, 0.05, 0.1)


@pytest.fixture(scope="module")
def transport_sweep():
    from qpat.domain import AngularQuadrature, BoundarySource, CoefficientSet, SpatialGrid
    from qpat.domain import gaussian_bump
    g = SpatialGrid(12, 12)
    sb = gaussian_bump(g, 1.0, 0.5, (0.5, 0.5), 0.2)
    c = CoefficientSet(g, 1.0, 1.0, 1.0, sb, None, 0.5, 2.0)
    src = BoundarySource.constant(g, AngularQuadrature(8), 1.0)
    return uq_transport_sweep(c, src, ETAS)


def test_transport_zero_is_bitwise(transport_sweep):
    assert transport_sweep.zero_bitwise
    z = transport_sweep.records[0]
    assert z.eta == 0 and z.err_a == 0 and z.err_b == 0


def test_transport_ratios(transport_sweep):
    r = transport_sweep
    ratios = [rec.ratio for rec in r.records[1:]]
    assert all(math.isfinite(x) and x > 0 for x in ratios)
    assert r.spread <= 2.0
    assert r.inequality_holds


def test_transport_identities(transport_sweep):
    for rec in transport_sweep.records[1:]:
        assert rec.diagnostics["w1_defect"] < 1e-9
        assert rec.diagnostics["w2_defect"] < 1e-9
        assert rec.diagnostics["w1_bound_holds"]


def test_diffusion_sweep(diffusion_set, unit_trace):
    r = uq_diffusion_sweep(diffusion_set, unit_trace, ETAS)
    assert r.zero_bitwise
    assert r.spread <= 2.0 and r.inequality_holds
    for rec in r.records[1:]:
        assert rec.diagnostics["w1_defect"] < 1e-9
        assert rec.diagnostics["w2_defect"] < 1e-9


def test_constant_misspecification_norm():
    from qpat.domain import CoefficientSet, SpatialGrid, constant_trace
    g = SpatialGrid(12, 12)
    c = CoefficientSet.constant(g, gamma=1.0, c0=1.0, C0=1.0)
    r = uq_diffusion_sweep(c, constant_trace(g, 1.0), (0.0, 0.05), p=4.0)
    eta = 0.05
    assert r.records[1].misspecification == pytest.approx(eta / (1 + eta), rel=1e-12)


def test_threads_do_not_change_results(diffusion_set, unit_trace, monkeypatch):
    a = uq_diffusion_sweep(diffusion_set, unit_trace, ETAS, threads=1)
    monkeypatch.setenv("QPAT_THREADS", "3")
    assert thread_count() == 3
    b = uq_diffusion_sweep(diffusion_set, unit_trace, ETAS)
    assert a.csv_rows() == b.csv_rows()


def test_thread_count_fallback(monkeypatch):
    monkeypatch.setenv("QPAT_THREADS", "many")
    assert thread_count() == 1


def test_u1_sensitivity(diffusion_set, unit_trace):
    diffs = []
    for eta in (0.01, 0.02):
        d, m = u1_sensitivity_check(diffusion_set, unit_trace, diffusion_set.gamma * (1 + eta))
        diffs.append(d / m)
    assert diffs[0] == pytest.approx(diffs[1], rel=0.05)
    assert np.isfinite(diffs).all()
