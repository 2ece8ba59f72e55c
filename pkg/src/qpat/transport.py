"""Linear and semilinear radiative transport on the rectangle.

Spatial discretization is the upwind step scheme: for direction ``v = (mu, eta)``
each cell balances

    |mu|/hx (psi - psi_in_x) + |eta|/hy (psi - psi_in_y) + sigma_t psi = q,

with the outgoing face value equal to the cell value. The scheme is positive,
satisfies the discrete maximum principle and is linear in the coefficients, so
differences of discrete solutions obey the same discrete equations exactly.
The scattering term is handled by source iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .domain import (
    TANGENT_TOL,
    BoundarySource,
    CoefficientSet,
    ScatteringKernel,
    _exit_distance,
    check_phase,
    discrete_norms,
    validate_coefficients,
    velocity_average,
)
from .errors import DivergenceError, PreconditionError

SOURCE_TOL = 1e-10
PICARD_TOL = 1e-10
SOURCE_MAX_ITER = 10_000
PICARD_MAX_ITER = 200


@numba.njit(cache=True, nogil=True)
def _sweep(q, sigma_t, g_left, g_right, g_bottom, g_top, mu, eta, hx, hy):
    nx, ny, nd = q.shape
    psi = np.empty_like(q)
    fx = np.empty(ny)
    for k in range(nd):
        a = abs(mu[k]) / hx
        b = abs(eta[k]) / hy
        if mu[k] >= 0.0:
            i_start, i_stop, i_step = 0, nx, 1
            for j in range(ny):
                fx[j] = g_left[j, k]
        else:
            i_start, i_stop, i_step = nx - 1, -1, -1
            for j in range(ny):
                fx[j] = g_right[j, k]
        if eta[k] >= 0.0:
            j_start, j_stop, j_step = 0, ny, 1
        else:
            j_start, j_stop, j_step = ny - 1, -1, -1
        for i in range(i_start, i_stop, i_step):
            if eta[k] >= 0.0:
                fy = g_bottom[i, k]
            else:
                fy = g_top[i, k]
            for j in range(j_start, j_stop, j_step):
                val = (q[i, j, k] + a * fx[j] + b * fy) / (sigma_t[i, j] + a + b)
                psi[i, j, k] = val
                fx[j] = val
                fy = val
    return psi


def sweep(c: CoefficientSet, g: BoundarySource, emission):
    """One transport sweep: solve ``v.grad psi + sigma_t psi = emission`` with inflow ``g``."""
    d = g.quad.directions
    gl, gr, gb, gt = (np.ascontiguousarray(a) for a in g.side_arrays())
    return _sweep(
        np.ascontiguousarray(emission, dtype=float),
        np.ascontiguousarray(c.sigma_t),
        gl, gr, gb, gt,
        np.ascontiguousarray(d[:, 0]), np.ascontiguousarray(d[:, 1]),
        c.grid.hx, c.grid.hy,
    )


@dataclass
class TransportSolveReport:
    """Diagnostics of a transport solve.

    ``iterations`` counts source iterations (summed over all inner solves for the
    semilinear solver); Picard quantities are empty for linear solves.
    """

    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    C2: float = math.nan
    bound_constant: float = math.nan
    l2_bound: float = math.nan
    l2_norm: float = math.nan
    sup_norm: float = math.nan
    g_sup: float = math.nan
    epsilon_prime: float | None = None
    picard_iterations: int = 0
    picard_residuals: list = field(default_factory=list)
    contraction_bound: float | None = None
    lipschitz_bound: float | None = None
    ball_radius: float | None = None
    ball_ok: bool | None = None
    observed_ratio: float | None = None

    @property
    def picard_ratios(self):
        r = np.asarray(self.picard_residuals)
        if r.size < 2:
            return np.array([])
        with np.errstate(divide="ignore", invalid="ignore"):
            return r[1:] / r[:-1]

    def as_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "picard_residuals"}
        out["picard_residuals"] = " ".join(f"{r:.6e}" for r in self.picard_residuals)
        return out


def _kernel(kernel, quad):
    return kernel if kernel is not None else ScatteringKernel.isotropic_kernel(quad)


def solve_linear_rte(c: CoefficientSet, g: BoundarySource, S=None, tol=SOURCE_TOL,
                     max_iter=SOURCE_MAX_ITER, kernel=None, u_init=None):
    """Solve ``v.grad u + sigma_a u = sigma_s K(u) + S`` with ``u = g`` on the inflow boundary.

    Returns ``(u, report)``. Source iteration stops when the sup-norm of the
    successive difference is below ``tol`` (or stagnates at round-off level).
    """
    cert = validate_coefficients(c, strict=False)
    grid, quad = c.grid, g.quad
    kernel = _kernel(kernel, quad)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if S is None:
        S = np.zeros((grid.nx, grid.ny, quad.n_dirs))
    else:
        S = check_phase(S, grid, quad)
    sig_s = c.sigma_s[..., None]
    scatters = bool(np.any(c.sigma_s > 0))

    u = np.zeros_like(S) if u_init is None else check_phase(u_init, grid, quad).copy()
    if not scatters:
        u = sweep(c, g, S)
        it, res = 1, 0.0
    else:
        res = math.inf
        it = 0
        while it < max_iter:
            it += 1
            new = sweep(c, g, sig_s * kernel.gain(u) + S)
            res = float(np.max(np.abs(new - u)))
            u = new
            scale = float(np.max(np.abs(u)))
            if res <= tol or res <= 8 * np.finfo(float).eps * scale:
                break
        else:
            raise DivergenceError(
                f"source iteration did not reach tol={tol:g} in {max_iter} iterations "
                f"(last residual {res:.3e})", iterations=it, residual=res)

    report = TransportSolveReport(iterations=it, residual=res, C2=cert.C2,
                                  bound_constant=cert.C2)
    report.l2_norm = discrete_norms(u, "L2_X", grid, quad)
    report.sup_norm = float(np.abs(u).max())
    report.g_sup = discrete_norms(g, "Ldxi_inf_Gamma")
    report.l2_bound = (cert.C2 * discrete_norms(S, "L2_X", grid, quad)
                       + cert.c_tilde_2 * discrete_norms(g, "Ldxi_2_Gamma"))
    inflow = g.inflow_values()
    if inflow.size and inflow.min() > 0 and not np.any(S):
        report.epsilon_prime = positivity_lower_bound(c, g)
    return u, report


def certified_ball(k, eps):
    """Smallest ``delta`` with ``k (eps + delta)^2 <= delta``; ``None`` if none exists.

    Existence needs ``4 k eps < 1``; at that root ``k (eps + delta) < 1/2``.
    """
    disc = 1.0 - 4.0 * k * eps
    if disc <= 0:
        return None
    # small root via the product of roots (no cancellation), nudged into the interval
    root = 2.0 * k * eps * eps / ((1.0 - 2.0 * k * eps) + math.sqrt(disc))
    return root * (1.0 + 1e-12)


def solve_semilinear_rte(c: CoefficientSet, g: BoundarySource, tol=PICARD_TOL,
                         max_iter=PICARD_MAX_ITER, kernel=None, inner_tol=None,
                         inner_max_iter=SOURCE_MAX_ITER):
    """Small-data solution of the semilinear transport problem by Picard iteration.

    ``u = u0 + w`` where ``u0`` solves the linear problem with inflow ``g`` and ``w``
    is the fixed point of ``w -> T^{-1}(-sigma_b <u0 + w> (u0 + w))`` with zero inflow.
    Raises :class:`PreconditionError` when ``g`` is too large for the certified
    contraction ball.
    """
    cert = validate_coefficients(c, strict=False)
    quad = g.quad
    kernel = _kernel(kernel, quad)
    inner_tol = inner_tol if inner_tol is not None else 1e-3 * tol

    eps = discrete_norms(g, "Ldxi_inf_Gamma")
    k = cert.C2 * cert.C0
    delta = certified_ball(k, eps)
    if delta is None:
        raise PreconditionError(
            f"contraction: C2*C0*(eps+delta) < 1 unattainable for ||g|| = {eps:.4g} "
            f"(need ||g|| < 1/(4 C2 C0) = {1 / (4 * k):.4g})")

    u0, lin = solve_linear_rte(c, g, tol=inner_tol, max_iter=inner_max_iter, kernel=kernel)
    zero = BoundarySource.zeros(c.grid, quad)
    sig_b = c.sigma_b[..., None]
    w = np.zeros_like(u0)
    residuals = []
    total_iters = lin.iterations
    ball_ok = True
    for n in range(max_iter):
        u = u0 + w
        rhs = -sig_b * velocity_average(u, quad)[..., None] * u
        w_new, rep = solve_linear_rte(c, zero, S=rhs, tol=inner_tol, max_iter=inner_max_iter,
                                      kernel=kernel, u_init=w)
        total_iters += rep.iterations
        res = float(np.max(np.abs(w_new - w)))
        residuals.append(res)
        w = w_new
        ball_ok = ball_ok and float(np.abs(w).max()) <= delta * (1 + 1e-12)
        if res <= tol:
            break
    else:
        raise DivergenceError(
            f"Picard iteration did not reach tol={tol:g} in {max_iter} iterations",
            iterations=max_iter, residual=residuals[-1])

    u = u0 + w
    report = TransportSolveReport(
        iterations=total_iters, residual=residuals[-1], C2=cert.C2, bound_constant=cert.C2,
        picard_iterations=len(residuals), picard_residuals=residuals,
        contraction_bound=k * (eps + delta), lipschitz_bound=2 * k * (eps + delta),
        ball_radius=delta, ball_ok=ball_ok,
    )
    report.sup_norm = float(np.abs(u).max())
    report.l2_norm = discrete_norms(u, "L2_X", c.grid, quad)
    report.g_sup = eps
    report.observed_ratio = report.sup_norm / eps if eps > 0 else 0.0
    if g.inflow_values().size and g.minimum > 0:
        report.epsilon_prime = positivity_lower_bound(c, g)
    return u, report


def apply_transport_operator(c: CoefficientSet, u, g: BoundarySource, kernel=None):
    """Discrete ``v.grad u + sigma_a u - sigma_s K(u)`` with inflow ``g``.

    This is the exact residual of the sweep scheme: a converged solution of
    :func:`solve_linear_rte` with source ``S`` returns ``S`` up to the iteration
    tolerance.
    """
    grid, quad = c.grid, g.quad
    u = check_phase(u, grid, quad)
    kernel = _kernel(kernel, quad)
    gl, gr, gb, gt = g.side_arrays()
    d = quad.directions
    out = np.empty_like(u)
    for k, (mu, eta) in enumerate(d):
        uk = u[..., k]
        if mu >= 0:
            up_x = np.concatenate([gl[None, :, k], uk[:-1]], axis=0)
        else:
            up_x = np.concatenate([uk[1:], gr[None, :, k]], axis=0)
        if eta >= 0:
            up_y = np.concatenate([gb[:, k, None], uk[:, :-1]], axis=1)
        else:
            up_y = np.concatenate([uk[:, 1:], gt[:, k, None]], axis=1)
        out[..., k] = (abs(mu) / grid.hx * (uk - up_x) + abs(eta) / grid.hy * (uk - up_y)
                       + c.sigma_t * uk)
    return out - c.sigma_s[..., None] * kernel.gain(u)


def positivity_lower_bound(c: CoefficientSet, g: BoundarySource):
    """``eps' = inf g * exp(-d_Omega * sup(sigma_a + sigma_s))``."""
    g_min = g.minimum
    if not g_min > 0:
        raise PreconditionError(f"positivity bound needs inf g > 0, got {g_min:.4g}")
    return g_min * math.exp(-c.grid.diameter * float(c.sigma_t.max()))


def characteristics_oracle(c: CoefficientSet, g: BoundarySource, u, kernel=None, S=None,
                           samples_per_cell=2.0):
    """Evaluate the integral (characteristic) form of the transport equation.

    Returns ``e^{-int sigma} g(x - tau v, v) + int_0^tau e^{-int_0^s sigma}
    (sigma_s Theta u + S)(x - s v, v) ds`` at every cell centre and direction, with
    ``sigma = sigma_a + sigma_s``, piecewise-constant coefficient/field lookup and the
    trapezoid rule along each ray. A solution of the transport problem is a fixed
    point of this map.
    """
    grid, quad = c.grid, g.quad
    u = check_phase(u, grid, quad)
    kernel = _kernel(kernel, quad)
    emission = c.sigma_s[..., None] * kernel.gain(u)
    if S is not None:
        emission = emission + check_phase(S, grid, quad)
    X, Y = grid.centers()
    X, Y = X.ravel(), Y.ravel()
    m = int(math.ceil(samples_per_cell * grid.diameter / min(grid.hx, grid.hy))) + 1
    t = np.linspace(0.0, 1.0, m)
    faces = grid.faces
    gl, gr, gb, gt = g.side_arrays()
    out = np.empty((grid.nx, grid.ny, quad.n_dirs))
    sig_t = c.sigma_t
    for k, (vx, vy) in enumerate(quad.directions):
        tau = _exit_distance(X, Y, vx, vy, grid)
        s = tau[:, None] * t[None, :]
        px = X[:, None] - s * vx
        py = Y[:, None] - s * vy
        ci, cj = grid.cell_of(px, py)
        sig = sig_t[ci, cj]
        optical = cumulative_trapezoid(sig, s, axis=1, initial=0.0)
        atten = np.exp(-optical)
        integral = trapezoid(emission[ci, cj, k] * atten, s, axis=1)
        ex, ey = X - tau * vx, Y - tau * vy
        tx = np.where(abs(vx) > TANGENT_TOL, np.where(vx > 0, X - grid.x0, grid.x1 - X)
                      / max(abs(vx), TANGENT_TOL), np.inf)
        ty = np.where(abs(vy) > TANGENT_TOL, np.where(vy > 0, Y - grid.y0, grid.y1 - Y)
                      / max(abs(vy), TANGENT_TOL), np.inf)
        ei, ej = grid.cell_of(ex, ey)
        gx = gl[ej, k] if vx > 0 else gr[ej, k]
        gy = gb[ei, k] if vy > 0 else gt[ei, k]
        boundary = np.where(tx <= ty, gx, gy)
        out[..., k] = (atten[:, -1] * boundary + integral).reshape(grid.nx, grid.ny)
    return out


def pure_absorption_solution(c: CoefficientSet, g_value, quad):
    """Exact solution ``g(x - tau_- v, v) exp(-sigma_a tau_-)`` for constant ``sigma_a`` and
    ``sigma_s = 0``, evaluated at cell centres.

    ``g_value`` is a constant or a callable ``g(x, y, vx, vy)`` (broadcasting) giving the
    inflow at the backward exit point.
    """
    sa = np.unique(c.sigma_a)
    if sa.size != 1 or np.any(c.sigma_s != 0):
        raise ValueError("closed form needs constant sigma_a and sigma_s = 0")
    X, Y = c.grid.centers()
    d = quad.directions
    vx, vy = d[:, 0], d[:, 1]
    tau = _exit_distance(X[..., None], Y[..., None], vx, vy, c.grid)
    if callable(g_value):
        inflow = g_value(X[..., None] - tau * vx, Y[..., None] - tau * vy, vx, vy)
    else:
        inflow = g_value
    return inflow * np.exp(-sa[0] * tau)
