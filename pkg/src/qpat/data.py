"""Photoacoustic internal data and its first/second-order linearizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import BoundarySource, CoefficientSet, check_phase, check_scalar, velocity_average
from .errors import QpatError, ShapeError
from .linearization import (
    DIFFUSION,
    TRANSPORT,
    LinearizationBundle,
    forward_semilinear,
    linearize,
    regime_of,
)


@dataclass(frozen=True, eq=False)
class InternalData:
    """Full data ``h`` and its linearizations ``h1``, ``h2`` for one boundary source."""

    h: np.ndarray | None
    h1: np.ndarray
    h2: np.ndarray
    regime: str
    source_id: str = "g0"

    def with_noise(self, level, seed=0):
        """Multiplicative Gaussian perturbation ``h (1 + level N(0,1))`` on every field."""
        rng = np.random.default_rng(seed)
        pert = lambda f: None if f is None else f * (1.0 + level * rng.standard_normal(f.shape))  # noqa: E731
        return InternalData(pert(self.h), pert(self.h1), pert(self.h2), self.regime,
                            f"{self.source_id}+noise{level:g}")


def internal_data_transport(c: CoefficientSet, u, quad):
    """``H = Xi (sigma_a <u> + sigma_b <u>^2)`` for a transport solution ``u``."""
    u = check_phase(u, c.grid, quad)
    m = velocity_average(u, quad)
    return c.xi * (c.sigma_a * m + c.sigma_b * m * m)


def internal_data_diffusion(c: CoefficientSet, u):
    """``H = Xi (sigma_a u + sigma_b u^2)`` for a diffusion solution ``u``."""
    u = check_scalar(u, c.grid)
    return c.xi * (c.sigma_a * u + c.sigma_b * u * u)


def internal_data(c: CoefficientSet, u, g):
    if regime_of(g) == TRANSPORT:
        return internal_data_transport(c, u, g.quad)
    return internal_data_diffusion(c, u)


def linearized_data(c: CoefficientSet, bundle: LinearizationBundle, h=None, source_id="g0"):
    """``h1 = Xi sigma_a m1`` and ``h2 = Xi (sigma_a m2 + 2 sigma_b m1^2)``.

    ``m1``, ``m2`` are the angular averages of ``u1``, ``u2`` (transport) or the
    fields themselves (diffusion).
    """
    if bundle.regime not in (TRANSPORT, DIFFUSION):
        raise QpatError(f"unknown regime {bundle.regime!r}")
    if bundle.u1.shape[:2] != c.grid.shape:
        raise ShapeError("bundle does not live on the coefficient grid")
    m1, m2 = bundle.mean_u1, bundle.mean_u2
    h1 = c.xi * c.sigma_a * m1
    h2 = c.xi * (c.sigma_a * m2 + 2.0 * c.sigma_b * m1 * m1)
    return InternalData(h, h1, h2, bundle.regime, source_id)


def make_data(c: CoefficientSet, g, amplitude=None, source_id="g0", kernel=None):
    """Linearized data for ``g`` plus, when ``amplitude`` is given, the full data
    ``H`` of the semilinear problem driven by ``amplitude * g``."""
    bundle = linearize(c, g, kernel=kernel)
    h = None
    if amplitude is not None:
        scaled = g.scaled(amplitude) if isinstance(g, BoundarySource) else amplitude * np.asarray(g)
        u, _ = forward_semilinear(c, scaled, kernel=kernel)
        h = internal_data(c, u, g)
    return linearized_data(c, bundle, h=h, source_id=source_id), bundle


@dataclass
class SampleFailure:
    source_id: str
    error: str


def sample_data_map(c: CoefficientSet, sources, amplitude=1e-2, kernel=None):
    """Sample the data map on a finite list of sources.

    Each entry is an :class:`InternalData` or, if that source's forward solve failed,
    a :class:`SampleFailure` recording the reason. The regime follows the source type.
    """
    out = []
    for i, g in enumerate(sources):
        sid = f"g{i}"
        try:
            data, _ = make_data(c, g, amplitude=amplitude, source_id=sid, kernel=kernel)
            out.append(data)
        except QpatError as exc:
            out.append(SampleFailure(sid, f"{type(exc).__name__}: {exc}"))
    return out


def coarsen(f):
    """2x2 cell average (half-resolution data); needs even cell counts."""
    f = np.asarray(f, dtype=float)
    nx, ny = f.shape[:2]
    if nx % 2 or ny % 2:
        raise ShapeError(f"coarsening needs even cell counts, got {(nx, ny)}")
    return f.reshape(nx // 2, 2, ny // 2, 2, *f.shape[2:]).mean(axis=(1, 3))


def refine(f):
    """Piecewise-constant prolongation, the right inverse of :func:`coarsen`."""
    return np.repeat(np.repeat(np.asarray(f, dtype=float), 2, axis=0), 2, axis=1)


def half_resolution(data: InternalData):
    """Data averaged to the coarse grid and re-injected on the fine grid."""
    r = lambda f: None if f is None else refine(coarsen(f))  # noqa: E731
    return InternalData(r(data.h), r(data.h1), r(data.h2), data.regime,
                        data.source_id + "@half")
