"""Admissibility certificates and reconstructions of sigma_a and sigma_b from
linearized internal data, in the transport and diffusion regimes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import CG_TOL, EllipticOperator, conjugate_gradient, inverse_sup_bound, operator_for
from .domain import (
    BoundarySource,
    CoefficientSet,
    check_scalar,
    discrete_norms,
    validate_coefficients,
    velocity_average,
)
from .errors import DivergenceError, PreconditionError
from .transport import positivity_lower_bound, solve_linear_rte

MASK_FLOOR = 1e-12
MAX_MASK_FRACTION = 0.01
RECON_TOL = 1e-12
RECON_MAX_ITER = 500
INNER_TOL = 1e-14


def mask_threshold(eps_prime=None):
    """Cells whose (averaged) ``u1`` falls below this value are excluded from division."""
    if eps_prime is None:
        return MASK_FLOOR
    return max(eps_prime / 10.0, MASK_FLOOR)


def _eps_prime(c, g):
    if isinstance(g, BoundarySource):
        vals = g.inflow_values()
        if vals.size and vals.min() > 0:
            return positivity_lower_bound(c, g)
        return None
    # no closed-form lower bound in the diffusion regime; the mask uses the floor
    return None


def _mask(values, threshold):
    mask = values < threshold
    frac = float(mask.mean())
    if frac > MAX_MASK_FRACTION:
        raise PreconditionError(
            f"mask too large: {frac:.1%} of cells have u1 below {threshold:.3g} "
            f"(limit {MAX_MASK_FRACTION:.0%})")
    return mask


@dataclass
class AdmissibilityCertificate:
    """A1 margin ``alpha``, contraction constant ``Pi`` and the stability constant."""

    alpha: float
    alpha_required: float
    Pi: float
    boundary_ratio: float
    C2: float
    c0: float
    C0: float
    in_A1: bool
    in_A2: bool
    stability_constant: float
    phi_max: float
    phi_bound: float
    phi_bound_holds: bool
    masked_cells: int
    epsilon_prime: float | None

    def failures(self):
        out = []
        if not self.in_A1:
            out.append(f"A1: alpha = {self.alpha:.6g} <= {self.alpha_required:.6g}")
        if not self.in_A2:
            out.append(f"A2: Pi >= 1 (Pi = {self.Pi:.6g})")
        return out

    def as_dict(self):
        return dict(self.__dict__)


def upwind_directional_derivative(f, grid, quad):
    """``v . grad f`` for every quadrature direction, using upwind one-sided differences
    (switching to the downwind side where the upwind neighbour lies outside)."""
    f = check_scalar(f, grid)
    bx = np.empty_like(f)
    fx = np.empty_like(f)
    bx[1:] = (f[1:] - f[:-1]) / grid.hx
    bx[0] = bx[1]
    fx[:-1] = bx[1:]
    fx[-1] = bx[-1]
    by = np.empty_like(f)
    fy = np.empty_like(f)
    by[:, 1:] = (f[:, 1:] - f[:, :-1]) / grid.hy
    by[:, 0] = by[:, 1]
    fy[:, :-1] = by[:, 1:]
    fy[:, -1] = by[:, -1]
    out = np.empty(f.shape + (quad.n_dirs,))
    for k, (mu, eta) in enumerate(quad.directions):
        out[..., k] = mu * (bx if mu >= 0 else fx) + eta * (by if eta >= 0 else fy)
    return out


def boundary_ratio(c: CoefficientSet, g: BoundarySource, h1):
    """``|| Xi sigma_a g / h1 ||`` over the discrete inflow boundary (cell-adjacent values)."""
    f = c.grid.faces
    h1 = check_scalar(h1, c.grid)
    num = (c.xi * c.sigma_a)[f.cell_i, f.cell_j][:, None] * g.values
    den = h1[f.cell_i, f.cell_j][:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(num / den)
    r = r[g.inflow]
    return float(r.max()) if r.size else 0.0


def certify_admissibility(c: CoefficientSet, g: BoundarySource, h1, u1=None, alpha_required=0.0,
                          kernel=None):
    """Evaluate the A1 margin, ``Pi`` and the sigma_b stability constant for transport data.

    ``alpha = inf (sigma_a + v . grad ln(h1 / (Xi sigma_a)))`` over unmasked cells and all
    directions; ``Pi = C2 C0 || Xi sigma_a g / h1 ||``; ``C = ||Xi sigma_a g / h1|| /
    (2 c0 (1 - Pi))`` when ``Pi < 1`` (``inf`` otherwise). The bound ``max u1/<u1>
    <= || Xi sigma_a g / h1 ||`` is evaluated as well.
    """
    cert = validate_coefficients(c, strict=False)
    grid, quad = c.grid, g.quad
    h1 = check_scalar(h1, grid)
    eps_prime = _eps_prime(c, g)
    thr = mask_threshold(eps_prime) * float(np.min(c.xi * c.sigma_a))
    unmasked_bad = (h1 <= 0)
    mask = _mask(h1, thr)
    if np.any(unmasked_bad & ~mask):
        raise PreconditionError("h1 <= 0 on unmasked cells")
    safe = np.where(mask, 1.0, h1 / (c.xi * c.sigma_a))
    deriv = upwind_directional_derivative(np.log(safe), grid, quad)
    margin = c.sigma_a[..., None] + deriv
    alpha = float(margin[~mask].min())
    ratio = boundary_ratio(c, g, h1)
    Pi = cert.C2 * cert.C0 * ratio
    in_A1 = alpha > alpha_required
    in_A2 = 0.0 <= Pi < 1.0
    C = ratio / (2.0 * cert.c0 * (1.0 - Pi)) if in_A2 else math.inf
    if u1 is None:
        u1, _ = solve_linear_rte(c, g, tol=INNER_TOL, kernel=kernel)
    m1 = velocity_average(u1, quad)
    phi = u1[~mask] / m1[~mask][:, None]
    lhs = float(np.abs(phi).max())
    return AdmissibilityCertificate(
        alpha=alpha, alpha_required=alpha_required, Pi=Pi, boundary_ratio=ratio, C2=cert.C2,
        c0=cert.c0, C0=cert.C0, in_A1=in_A1, in_A2=in_A2, stability_constant=C,
        phi_max=lhs, phi_bound=ratio, phi_bound_holds=lhs <= ratio * (1 + 1e-12),
        masked_cells=int(mask.sum()), epsilon_prime=eps_prime)


@dataclass
class ReconstructionResult:
    """Recovered field plus the iteration trace.

    ``residuals`` holds the L2(Omega) norms of successive updates; ``ratios`` their
    quotients (the observed contraction).
    """

    field: np.ndarray
    name: str
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = True
    mask: np.ndarray | None = None
    warnings: list = field(default_factory=list)
    certificate: AdmissibilityCertificate | None = None
    extras: dict = field(default_factory=dict)

    @property
    def residual(self):
        return self.residuals[-1] if self.residuals else 0.0

    @property
    def ratios(self):
        r = np.asarray(self.residuals)
        if r.size < 2:
            return np.array([])
        with np.errstate(divide="ignore", invalid="ignore"):
            return r[1:] / r[:-1]

    def error(self, truth, grid):
        """Relative L2(Omega) error over unmasked cells."""
        keep = ~self.mask if self.mask is not None else np.ones(grid.shape, bool)
        diff = np.where(keep, self.field - truth, 0.0)
        ref = np.where(keep, truth, 0.0)
        den = discrete_norms(ref, "L2_Omega", grid)
        num = discrete_norms(diff, "L2_Omega", grid)
        return num / den if den > 0 else num

    def summary(self):
        return {"name": self.name, "iterations": self.iterations, "residual": self.residual,
                "converged": self.converged,
                "masked_cells": int(self.mask.sum()) if self.mask is not None else 0,
                "max_ratio": float(np.max(self.ratios)) if self.ratios.size else 0.0,
                "warnings": "; ".join(self.warnings)}


def _bounds(c, bounds):
    return (c.c0, c.C0) if bounds is None else bounds


def _frozen(c: CoefficientSet, name):
    """Boundary-layer mask and the declared known values of field ``name`` there."""
    layer = c.grid.layer_mask()
    known = getattr(c, name)
    declared = getattr(c, f"{name}_layer", None)
    if declared is not None:
        known = np.full(c.grid.shape, float(declared))
    return layer, np.asarray(known)


def _fixed_point(update, init, c, name, tol, max_iter, bounds, mask_of, clamp=True):
    lo, hi = bounds
    layer, known = _frozen(c, name)
    x = np.array(init, dtype=float)
    x[layer] = known[layer]
    residuals = []
    mask = None
    for _ in range(max_iter):
        new, mask = update(x)
        if clamp:
            new = np.clip(new, lo, hi)
        new = np.where(mask, x, new)
        new[layer] = known[layer]
        res = discrete_norms(new - x, "L2_Omega", c.grid)
        residuals.append(res)
        x = new
        if res <= tol:
            return x, residuals, mask
    ratio = residuals[-1] / residuals[-2] if len(residuals) > 1 and residuals[-2] else math.nan
    raise DivergenceError(
        f"{name} fixed point did not reach tol={tol:g} in {max_iter} iterations "
        f"(last update {residuals[-1]:.3e}, ratio {ratio:.3f})",
        iterations=max_iter, residual=residuals[-1], ratio=ratio)


def _initial(c, init, bounds):
    if init is None:
        return np.full(c.grid.shape, float(np.clip(0.5 * (c.c0 + c.C0), *bounds)))
    return np.broadcast_to(np.asarray(init, dtype=float), c.grid.shape)


def reconstruct_sigma_a_transport(c: CoefficientSet, g: BoundarySource, h1, tol=RECON_TOL,
                                  max_iter=RECON_MAX_ITER, init=None, bounds=None, kernel=None):
    """Recover ``sigma_a`` from ``h1 = Xi sigma_a <u1(sigma_a)>``.

    Iterates ``sigma_a <- h1 / (Xi <u1(sigma_a)>)``, clamped to the bounds and frozen on
    the boundary layer. ``c.sigma_a`` is only read on the layer cells (known values);
    ``Xi`` and ``sigma_s`` are taken from ``c``.
    """
    h1 = check_scalar(h1, c.grid)
    bounds = _bounds(c, bounds)
    thr = mask_threshold(_eps_prime(c, g))
    state = {"u": None}

    def update(sa):
        cc = c.replace(sigma_a=sa)
        u1, _ = solve_linear_rte(cc, g, tol=INNER_TOL, kernel=kernel, u_init=state["u"])
        state["u"] = u1
        m1 = velocity_average(u1, g.quad)
        mask = _mask(m1, thr)
        return h1 / (c.xi * np.where(mask, 1.0, m1)), mask

    x, res, mask = _fixed_point(update, _initial(c, init, bounds), c, "sigma_a", tol, max_iter,
                                bounds, None)
    return ReconstructionResult(x, "sigma_a", len(res), res, mask=mask,
                                extras={"u1": state["u"]})


def reconstruct_sigma_b_transport(c: CoefficientSet, g: BoundarySource, h2, tol=RECON_TOL,
                                  max_iter=RECON_MAX_ITER, init=None, bounds=None, kernel=None,
                                  require_admissible=False, h1=None, u1=None):
    """Recover ``sigma_b`` from ``h2 = Xi (sigma_a <u2(sigma_b)> + 2 sigma_b <u1>^2)``.

    Iterates ``sigma_b <- (h2/Xi - sigma_a <u2(sigma_b)>) / (2 <u1>^2)`` with ``u1``
    computed once. The admissibility certificate is always evaluated and attached;
    with ``require_admissible`` a ``Pi >= 1`` certificate raises before iterating,
    otherwise it is recorded as a warning.
    """
    grid, quad = c.grid, g.quad
    h2 = check_scalar(h2, grid)
    bounds = _bounds(c, bounds)
    if u1 is None:
        u1, _ = solve_linear_rte(c, g, tol=INNER_TOL, kernel=kernel)
    m1 = velocity_average(u1, quad)
    if h1 is None:
        h1 = c.xi * c.sigma_a * m1
    cert = certify_admissibility(c, g, h1, u1=u1, kernel=kernel)
    warnings = cert.failures()
    if require_admissible and not cert.in_A2:
        raise PreconditionError("; ".join(warnings))
    mask = _mask(m1, mask_threshold(cert.epsilon_prime))
    denom = 2.0 * np.where(mask, 1.0, m1) ** 2
    zero = BoundarySource.zeros(grid, quad)
    src_shape = u1 * m1[..., None]
    state = {"u2": None}

    def update(sb):
        S = -2.0 * sb[..., None] * src_shape
        u2, _ = solve_linear_rte(c, zero, S=S, tol=INNER_TOL, kernel=kernel, u_init=state["u2"])
        state["u2"] = u2
        return (h2 / c.xi - c.sigma_a * velocity_average(u2, quad)) / denom, mask

    x, res, mask = _fixed_point(update, _initial(c, init, bounds), c, "sigma_b", tol, max_iter,
                                bounds, None)
    out = ReconstructionResult(x, "sigma_b", len(res), res, mask=mask, warnings=warnings,
                               certificate=cert, extras={"u1": u1, "u2": state["u2"]})
    ratios = out.ratios[1:] if out.ratios.size > 1 else out.ratios
    out.extras["max_ratio_after_2"] = float(ratios.max()) if ratios.size else 0.0
    return out


def reconstruct_sigma_a_diffusion(c: CoefficientSet, g, h1, tol=RECON_TOL,
                                  max_iter=RECON_MAX_ITER, init=None, bounds=None):
    """Recover ``sigma_a`` from ``h1 = Xi sigma_a u1(sigma_a)`` by
    ``sigma_a <- h1 / (Xi u1(sigma_a))``. Also reports the boundary estimate
    ``h1 / (Xi g)`` with ``h1`` extrapolated linearly to the boundary faces."""
    grid = c.grid
    h1 = check_scalar(h1, grid)
    g = np.asarray(g, dtype=float)
    if g.min() <= 0:
        raise PreconditionError(f"sigma_a recovery needs inf g > 0, got {g.min():.4g}")
    bounds = _bounds(c, bounds)
    thr = mask_threshold(None)
    state = {"u": None}

    def update(sa):
        op = EllipticOperator.assemble(grid, c.gamma, sa)
        rhs = op.boundary_rhs(g).ravel()
        x0 = None if state["u"] is None else state["u"].ravel()
        u1 = conjugate_gradient(op.matrix, rhs, x0=x0, tol=CG_TOL).x.reshape(grid.shape)
        state["u"] = u1
        mask = _mask(u1, thr)
        return h1 / (c.xi * np.where(mask, 1.0, u1)), mask

    x, res, mask = _fixed_point(update, _initial(c, init, bounds), c, "sigma_a", tol, max_iter,
                                bounds, None)
    out = ReconstructionResult(x, "sigma_a", len(res), res, mask=mask, extras={"u1": state["u"]})
    out.extras["boundary_trace"] = face_extrapolate(h1 / c.xi, grid) / g
    return out


def face_extrapolate(f, grid):
    """Linear extrapolation of cell values to the boundary face centres."""
    f = check_scalar(f, grid)
    faces = grid.faces
    i, j = faces.cell_i, faces.cell_j
    inner_i = np.where(faces.side == 0, i + 1, np.where(faces.side == 1, i - 1, i))
    inner_j = np.where(faces.side == 2, j + 1, np.where(faces.side == 3, j - 1, j))
    return 1.5 * f[i, j] - 0.5 * f[inner_i, inner_j]


def psi_field(c: CoefficientSet, h2, op: EllipticOperator | None = None, tol=CG_TOL):
    """Solve ``-div(gamma grad psi) = -div(gamma grad U) + sigma_a U``, ``psi = U`` on the
    boundary, with ``U = h2 / (Xi sigma_a)``. Returns ``(psi, U)``.

    With the same discrete operator on both sides the boundary contributions cancel
    and ``psi = U + D^{-1}(sigma_a U)``, ``D`` the zero-trace stiffness matrix.
    """
    op = op or operator_for(c)
    U = check_scalar(h2, c.grid) / (c.xi * c.sigma_a)
    rhs = (op.stiffness @ U.ravel()) + (c.sigma_a * U).ravel()
    sol = conjugate_gradient(op.stiffness, rhs, x0=U.ravel(), tol=tol)
    return sol.x.reshape(c.grid.shape), U


def reconstruct_sigma_b_diffusion(c: CoefficientSet, g, h2, tol=CG_TOL, u1=None):
    """Direct recovery ``sigma_b = psi sigma_a / (2 u1^2)`` from the psi-equation."""
    grid = c.grid
    op = operator_for(c)
    if u1 is None:
        rhs = op.boundary_rhs(np.asarray(g, dtype=float)).ravel()
        u1 = conjugate_gradient(op.matrix, rhs, tol=CG_TOL).x.reshape(grid.shape)
    mask = _mask(u1, mask_threshold(None))
    psi, U = psi_field(c, h2, op=op, tol=tol)
    sb = psi * c.sigma_a / (2.0 * np.where(mask, 1.0, u1) ** 2)
    sb = np.where(mask, 0.5 * (c.c0 + c.C0), sb)
    layer, known = _frozen(c, "sigma_b")
    sb[layer] = known[layer]
    return ReconstructionResult(sb, "sigma_b", 1, [0.0], mask=mask,
                                extras={"psi": psi, "U": U, "u1": u1})


@dataclass
class StabilityCheck:
    lhs: float
    rhs: float
    constant: float
    data_norm: float
    holds: bool
    label: str = ""

    def as_dict(self):
        return dict(self.__dict__)


def transport_sigma_b_stability(c, g, sigma_b, sigma_b_tilde, h2, h2_tilde, cert, u1,
                                weighted=True):
    """``||(sigma_b - sigma_b~) <u1> u1||_{L2(X)} <= C ||h2 - h2~||_{L2(Omega)}`` (``weighted``)
    or the same with the plain ``L2(Omega)`` difference on the left."""
    grid, quad = c.grid, g.quad
    diff = np.asarray(sigma_b) - np.asarray(sigma_b_tilde)
    if weighted:
        m1 = velocity_average(u1, quad)
        lhs = discrete_norms(diff[..., None] * m1[..., None] * u1, "L2_X", grid, quad)
    else:
        lhs = discrete_norms(diff, "L2_Omega", grid)
    dn = discrete_norms(np.asarray(h2) - np.asarray(h2_tilde), "L2_Omega", grid)
    C = cert.stability_constant
    rhs = C * dn
    return StabilityCheck(lhs, rhs, C, dn, bool(np.isfinite(C) and lhs <= rhs),
                          "weighted" if weighted else "plain")


def diffusion_stability_constant(c: CoefficientSet, u1=None, g=None, op=None):
    """Explicit constants of the discrete psi-identity bound.

    ``(sigma_b - sigma_b~) u1^2 = sigma_a/2 (dU + D^{-1}(sigma_a dU))`` with
    ``dU = dh2/(Xi sigma_a)``, so ``||(sigma_b - sigma_b~) u1^2||_p <= C ||dh2||_p`` with
    ``C = max sigma_a (1 + max sigma_a m) / (2 min Xi sigma_a)`` and ``m = max D^{-1} 1``
    (``D`` symmetric with nonnegative inverse, hence the same bound for every ``p``).
    Returns ``(C, C / min u1^2)``.
    """
    op = op or operator_for(c)
    m = inverse_sup_bound(op, with_absorption=False)
    sa = float(c.sigma_a.max())
    C = sa * (1.0 + sa * m) / (2.0 * float((c.xi * c.sigma_a).min()))
    if u1 is None:
        if g is None:
            return C, math.nan
        rhs = op.boundary_rhs(np.asarray(g, dtype=float)).ravel()
        u1 = conjugate_gradient(op.matrix, rhs, tol=CG_TOL).x.reshape(c.grid.shape)
    return C, C / float(np.min(u1) ** 2)


def diffusion_sigma_b_stability(c, sigma_b, sigma_b_tilde, h2, h2_tilde, u1, p=4.0,
                                weighted=True, constants=None):
    """``||(sigma_b - sigma_b~) u1^2||_p <= C ||h2 - h2~||_{W^{2,p}}`` (``weighted``) or the
    version without ``u1^2``, using the discrete Sobolev surrogate on the right."""
    grid = c.grid
    C_w, C_plain = constants or diffusion_stability_constant(c, u1=u1)
    diff = np.asarray(sigma_b) - np.asarray(sigma_b_tilde)
    lhs = discrete_norms(diff * u1 ** 2 if weighted else diff, "Lp_Omega", grid, p=p)
    dn = discrete_norms(np.asarray(h2) - np.asarray(h2_tilde), "W2p_discrete", grid, p=p)
    C = C_w if weighted else C_plain
    return StabilityCheck(lhs, C * dn, C, dn, bool(lhs <= C * dn),
                          "weighted" if weighted else "plain")


def perturbation_family(c: CoefficientSet, n, amplitude, seed=0):
    """``n`` smooth multiplicative perturbations ``1 + amplitude * bump_k`` with random
    centres and widths (seeded), each a field on the grid."""
    rng = np.random.default_rng(seed)
    X, Y = c.grid.centers()
    out = []
    for _ in range(n):
        cx = c.grid.x0 + c.grid.width * rng.uniform(0.2, 0.8)
        cy = c.grid.y0 + c.grid.height * rng.uniform(0.2, 0.8)
        w = rng.uniform(0.1, 0.3) * min(c.grid.width, c.grid.height)
        sign = rng.choice([-1.0, 1.0])
        out.append(1.0 + sign * amplitude * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * w * w)))
    return out


def stability_study(c: CoefficientSet, g, n=10, amplitude=0.05, seed=0, p=4.0, kernel=None,
                    tol=RECON_TOL):
    """Generate ``n`` perturbed ``sigma_b~``, their second-order data, reconstruct both
    members of each pair and evaluate the stability inequalities.

    Transport uses the certificate constant (``inf`` when ``Pi >= 1``, so the check
    then fails); diffusion uses the explicit psi-identity constants.
    """
    from .data import linearized_data
    from .linearization import linearize

    transport = isinstance(g, BoundarySource)
    free = (0.0, math.inf)  # no clamping: the pairs may leave [c0, C0]
    bundle = linearize(c, g, kernel=kernel)
    base = linearized_data(c, bundle)
    if transport:
        rec = reconstruct_sigma_b_transport(c, g, base.h2, tol=tol, kernel=kernel, u1=bundle.u1,
                                            bounds=free)
        cert = rec.certificate
    else:
        rec = reconstruct_sigma_b_diffusion(c, g, base.h2, u1=bundle.u1)
        consts = diffusion_stability_constant(c, u1=bundle.u1)
    checks = []
    for pert in perturbation_family(c, n, amplitude, seed):
        sb = c.sigma_b * pert
        ct = c.replace(sigma_b=sb, C0=max(c.C0, float(sb.max())),
                       c0=min(c.c0, float(sb[sb > 0].min())) if np.any(sb > 0) else c.c0)
        dt = linearized_data(ct, linearize(ct, g, kernel=kernel))
        if transport:
            rt = reconstruct_sigma_b_transport(ct, g, dt.h2, tol=tol, kernel=kernel,
                                               u1=bundle.u1, bounds=free)
            checks.append((transport_sigma_b_stability(c, g, rec.field, rt.field, base.h2,
                                                       dt.h2, cert, bundle.u1, weighted=True),
                           transport_sigma_b_stability(c, g, rec.field, rt.field, base.h2,
                                                       dt.h2, cert, bundle.u1, weighted=False)))
        else:
            rt = reconstruct_sigma_b_diffusion(ct, g, dt.h2, u1=bundle.u1)
            checks.append((diffusion_sigma_b_stability(c, rec.field, rt.field, base.h2, dt.h2,
                                                       bundle.u1, p=p, weighted=True,
                                                       constants=consts),
                           diffusion_sigma_b_stability(c, rec.field, rt.field, base.h2, dt.h2,
                                                       bundle.u1, p=p, weighted=False,
                                                       constants=consts)))
    return checks
