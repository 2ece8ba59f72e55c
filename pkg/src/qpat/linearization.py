"""First and second derivatives of the forward solution with respect to the
boundary amplitude, in both regimes, plus their numerical verification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import CG_TOL, operator_for, solve_linear_diffusion, solve_semilinear_diffusion
from .domain import BoundarySource, CoefficientSet, velocity_average
from .errors import DivergenceError
from .transport import solve_linear_rte, solve_semilinear_rte

TRANSPORT = "transport"
DIFFUSION = "diffusion"
DEFAULT_EPS = (1e-2, 5e-3, 2.5e-3)
RATIO_WINDOW = (1.5, 2.5)


def regime_of(g):
    return TRANSPORT if isinstance(g, BoundarySource) else DIFFUSION


@dataclass(frozen=True, eq=False)
class LinearizationBundle:
    """``u1 = d_eps u`` and ``u2 = d_eps^2 u`` at ``eps = 0`` for source ``g``."""

    u1: np.ndarray
    u2: np.ndarray
    regime: str
    g: object

    @property
    def mean_u1(self):
        if self.regime == TRANSPORT:
            return velocity_average(self.u1, self.g.quad)
        return self.u1

    @property
    def mean_u2(self):
        if self.regime == TRANSPORT:
            return velocity_average(self.u2, self.g.quad)
        return self.u2


def solve_u1_transport(c: CoefficientSet, g: BoundarySource, tol=1e-12, kernel=None):
    """Linear transport solution with inflow ``g`` and no source; ``sigma_b`` plays no role."""
    u1, _ = solve_linear_rte(c, g, tol=tol, kernel=kernel)
    return u1


def solve_u2_transport(c: CoefficientSet, u1, quad, tol=1e-12, kernel=None):
    """Zero-inflow transport solution with source ``-2 sigma_b <u1> u1``."""
    if not np.any(c.sigma_b) or not np.any(u1):
        return np.zeros_like(u1)
    S = -2.0 * c.sigma_b[..., None] * velocity_average(u1, quad)[..., None] * u1
    u2, _ = solve_linear_rte(c, BoundarySource.zeros(c.grid, quad), S=S, tol=tol,
                             kernel=kernel)
    return u2


def solve_u1_diffusion(c: CoefficientSet, g, tol=CG_TOL):
    u1, _ = solve_linear_diffusion(c, g, tol=tol)
    return u1


def solve_u2_diffusion(c: CoefficientSet, u1, tol=CG_TOL):
    """Zero-trace diffusion solution with source ``-2 sigma_b u1^2``."""
    if not np.any(c.sigma_b) or not np.any(u1):
        return np.zeros_like(u1)
    u2, _ = solve_linear_diffusion(c, np.zeros(c.grid.n_faces), S=-2.0 * c.sigma_b * u1 ** 2,
                                   tol=tol)
    return u2


def linearize(c: CoefficientSet, g, tol=1e-12, kernel=None) -> LinearizationBundle:
    """Both derivatives for either regime (chosen from the type of ``g``)."""
    if regime_of(g) == TRANSPORT:
        u1 = solve_u1_transport(c, g, tol=tol, kernel=kernel)
        u2 = solve_u2_transport(c, u1, g.quad, tol=tol, kernel=kernel)
        return LinearizationBundle(u1, u2, TRANSPORT, g)
    u1 = solve_u1_diffusion(c, g, tol=min(tol, CG_TOL))
    u2 = solve_u2_diffusion(c, u1, tol=min(tol, CG_TOL))
    return LinearizationBundle(u1, u2, DIFFUSION, g)


def forward_semilinear(c: CoefficientSet, g, tol=1e-14, kernel=None):
    if regime_of(g) == TRANSPORT:
        return solve_semilinear_rte(c, g, tol=tol, kernel=kernel)
    return solve_semilinear_diffusion(c, g, tol=tol)


def _scaled(g, eps):
    return g.scaled(eps) if isinstance(g, BoundarySource) else eps * np.asarray(g, float)


def solve_derivative_at(c: CoefficientSet, g, u_eps, rhs=None, order=1, tol=1e-13,
                        max_iter=200, kernel=None):
    """Derivative equation at finite amplitude.

    Transport: ``L v + sigma_b <u_eps> v + sigma_b <v> u_eps = rhs`` with inflow ``g``
    for ``order = 1`` and zero inflow for ``order = 2``. Diffusion: ``-div(gamma grad v)
    + sigma_a v + 2 sigma_b u_eps v = rhs``. Solved by fixed point on the linear
    part, which contracts for the small amplitudes where ``u_eps`` exists.
    """
    transport = regime_of(g) == TRANSPORT
    if transport:
        quad = g.quad
        inflow = g if order == 1 else BoundarySource.zeros(c.grid, quad)
        sb = c.sigma_b[..., None]
        mean_u = velocity_average(u_eps, quad)[..., None]
    else:
        trace = np.asarray(g, float) if order == 1 else np.zeros(c.grid.n_faces)
        op = operator_for(c)
    v = np.zeros_like(u_eps)
    res = np.inf
    for _ in range(max_iter):
        if transport:
            S = -sb * (mean_u * v + velocity_average(v, quad)[..., None] * u_eps)
            if rhs is not None:
                S = S + rhs
            new, _ = solve_linear_rte(c, inflow, S=S, tol=1e-3 * tol, kernel=kernel, u_init=v)
        else:
            S = -2.0 * c.sigma_b * u_eps * v
            if rhs is not None:
                S = S + rhs
            new, _ = solve_linear_diffusion(c, trace, S=S, op=op, x0=v)
        res = float(np.max(np.abs(new - v)))
        v = new
        if res <= tol:
            return v
    raise DivergenceError(f"derivative equation did not converge (residual {res:.3e})",
                          iterations=max_iter, residual=res)


@dataclass
class DerivativeReport:
    regime: str
    eps: list
    r1: list
    r2: list
    r1_ratios: list = field(default_factory=list)
    r2_ratios: list = field(default_factory=list)
    u1_eps_defect: list = field(default_factory=list)
    u2_eps_defect: list = field(default_factory=list)
    linear: bool = False
    ok: bool = True

    def as_dict(self):
        fmt = lambda xs: " ".join(f"{x:.6e}" for x in xs)  # noqa: E731
        return {"regime": self.regime, "eps": fmt(self.eps), "r1": fmt(self.r1),
                "r2": fmt(self.r2), "r1_ratios": fmt(self.r1_ratios),
                "r2_ratios": fmt(self.r2_ratios),
                "u1_eps_defect": fmt(self.u1_eps_defect),
                "u2_eps_defect": fmt(self.u2_eps_defect), "ok": self.ok}


def verify_derivatives(c: CoefficientSet, g, eps_list=DEFAULT_EPS, tol=1e-14, kernel=None,
                       cross_check=True):
    """Taylor remainders of the semilinear solution against the linearizations.

    ``r1(eps) = ||u_eps/eps - u1||`` and ``r2(eps) = ||2(u_eps - eps u1)/eps^2 - u2||``
    should both be first order in ``eps``, so halving ``eps`` halves them. When
    ``sigma_b = 0`` the problem is linear and ``r1`` must vanish instead. With
    ``cross_check`` the finite-amplitude derivative equations are solved at each
    ``eps`` and compared with centred divided differences of ``u_eps``.
    """
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    bundle = linearize(c, g, tol=1e-3 * tol if regime_of(g) == TRANSPORT else CG_TOL,
                       kernel=kernel)
    linear = not np.any(c.sigma_b)
    rep = DerivativeReport(bundle.regime, eps_list, [], [], linear=linear)
    for eps in eps_list:
        u_eps, _ = forward_semilinear(c, _scaled(g, eps), tol=tol * eps, kernel=kernel)
        rep.r1.append(float(np.max(np.abs(u_eps / eps - bundle.u1))))
        rep.r2.append(float(np.max(np.abs(2 * (u_eps - eps * bundle.u1) / eps ** 2
                                           - bundle.u2))))
        if cross_check:
            d1, d2 = _divided_defects(c, g, eps, u_eps, tol, kernel)
            rep.u1_eps_defect.append(d1)
            rep.u2_eps_defect.append(d2)
    with np.errstate(divide="ignore", invalid="ignore"):
        rep.r1_ratios = [a / b for a, b in zip(rep.r1, rep.r1[1:])]
        rep.r2_ratios = [a / b for a, b in zip(rep.r2, rep.r2[1:])]
    lo, hi = RATIO_WINDOW
    if linear:
        rep.ok = max(rep.r1) <= 1e-9
    else:
        rep.ok = all(lo <= r <= hi for r in rep.r1_ratios + rep.r2_ratios)
    return rep


def _divided_defects(c, g, eps, u_eps, tol, kernel):
    """Relative mismatch between derivative-equation solutions and centred differences."""
    h = 0.1 * eps
    up, _ = forward_semilinear(c, _scaled(g, eps + h), tol=tol * eps, kernel=kernel)
    um, _ = forward_semilinear(c, _scaled(g, eps - h), tol=tol * eps, kernel=kernel)
    v1 = solve_derivative_at(c, g, u_eps, order=1, kernel=kernel)
    if regime_of(g) == TRANSPORT:
        quad = g.quad
        rhs = -2.0 * c.sigma_b[..., None] * velocity_average(v1, quad)[..., None] * v1
    else:
        rhs = -2.0 * c.sigma_b * v1 ** 2
    v2 = solve_derivative_at(c, g, u_eps, rhs=rhs, order=2, kernel=kernel)
    dd1 = (up - um) / (2 * h)
    dd2 = (up - 2 * u_eps + um) / h ** 2
    d1 = float(np.max(np.abs(dd1 - v1)) / max(np.max(np.abs(v1)), 1e-300))
    scale2 = np.max(np.abs(v2))
    d2 = float(np.max(np.abs(dd2 - v2)) / scale2) if scale2 > 0 else float(np.max(np.abs(dd2)))
    return d1, d2
