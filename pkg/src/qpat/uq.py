"""Sensitivity of the (sigma_a, sigma_b) reconstructions to a misspecified
scattering coefficient (transport) or diffusion coefficient (diffusion)."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import make_data
from .diffusion import EllipticOperator, solve_linear_diffusion
from .domain import (
    BoundarySource,
    CoefficientSet,
    ScatteringKernel,
    apply_scattering,
    discrete_norms,
    validate_coefficients,
)
from .errors import QpatError
from .reconstruction import (
    reconstruct_sigma_a_diffusion,
    reconstruct_sigma_a_transport,
    reconstruct_sigma_b_diffusion,
    reconstruct_sigma_b_transport,
)
from .transport import apply_transport_operator

DEFAULT_ETAS = (0.0, 0.01, 0.05, 0.1)
SPREAD_LIMIT = 2.0


def thread_count():
    try:
        return max(1, int(os.environ.get("QPAT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class EtaRecord:
    eta: float
    misspecification: float = math.nan
    err_a: float = math.nan
    err_b: float = math.nan
    sigma_a: np.ndarray | None = None
    sigma_b: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ratio(self):
        if self.misspecification > 0:
            return (self.err_a + self.err_b) / self.misspecification
        return math.nan


@dataclass
class UQSweepResult:
    """Per-eta reconstruction errors against the eta = 0 reconstruction.

    ``lipschitz_max`` is the largest observed ratio (the empirical constant used in
    the inequality check), ``lipschitz_lsq`` the least-squares slope through the
    origin (diagnostic only).
    """

    regime: str
    records: list
    norm: str
    p: float = 2.0
    lipschitz_max: float = math.nan
    lipschitz_lsq: float = math.nan
    spread: float = math.nan
    inequality_holds: bool = False
    zero_bitwise: bool | None = None

    @property
    def etas(self):
        return [r.eta for r in self.records]

    @property
    def ok_records(self):
        return [r for r in self.records if r.error is None]

    def csv_rows(self):
        head = ["eta", "misspecification", "err_sigma_a", "err_sigma_b", "ratio"]
        extra = sorted({k for r in self.records for k in r.diagnostics})
        rows = [head + extra + ["error"]]
        for r in self.records:
            rows.append([f"{r.eta:.6g}", f"{r.misspecification:.12e}", f"{r.err_a:.12e}",
                         f"{r.err_b:.12e}", f"{r.ratio:.12e}"]
                        + [_fmt(r.diagnostics.get(k)) for k in extra] + [r.error or ""])
        return rows

    def summary(self):
        return {"regime": self.regime, "norm": self.norm, "p": self.p,
                "etas": " ".join(f"{e:g}" for e in self.etas),
                "lipschitz_max": self.lipschitz_max, "lipschitz_lsq": self.lipschitz_lsq,
                "spread": self.spread, "inequality_holds": self.inequality_holds,
                "zero_bitwise": self.zero_bitwise,
                "failures": sum(r.error is not None for r in self.records)}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    return f"{v:.12e}" if isinstance(v, (float, np.floating)) else str(v)


def _finish(result: UQSweepResult, reference):
    pos = [r for r in result.ok_records if r.eta != 0 and r.misspecification > 0]
    if pos:
        ratios = np.array([r.ratio for r in pos])
        m = np.array([r.misspecification for r in pos])
        e = np.array([r.err_a + r.err_b for r in pos])
        result.lipschitz_max = float(ratios.max())
        result.lipschitz_lsq = float((m @ e) / (m @ m))
        result.spread = float(ratios.max() / ratios.min()) if ratios.min() > 0 else math.inf
        result.inequality_holds = bool(np.all(e <= result.lipschitz_max * m * (1 + 1e-12)))
    zero = [r for r in result.ok_records if r.eta == 0]
    if zero:
        z = zero[0]
        result.zero_bitwise = bool(np.array_equal(z.sigma_a, reference[0])
                                   and np.array_equal(z.sigma_b, reference[1])
                                   and z.err_a == 0 and z.err_b == 0)
    return result


def _run(fn, etas, threads):
    etas = sorted(float(e) for e in etas)
    if threads > 1 and len(etas) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(fn, etas))
    else:
        records = [fn(e) for e in etas]
    return sorted(records, key=lambda r: r.eta)


def _perturbed(c: CoefficientSet, name, eta, bump):
    base = getattr(c, name)
    new = base * (1.0 + eta * (bump if bump is not None else 1.0))
    C0 = max(c.C0, float(new.max()))
    c0 = min(c.c0, float(new.min()))
    return c.replace(**{name: new}, C0=C0, c0=c0)


def uq_transport_sweep(c_true: CoefficientSet, g: BoundarySource, eta_list=DEFAULT_ETAS,
                       kernel=None, bump=None, threads=None, tol=1e-12):
    """Reconstruct ``(sigma_a, sigma_b)`` from one data set with ``sigma_s~ = (1 + eta
    bump) sigma_s`` and compare with the eta = 0 reconstruction in L2(Omega).

    For each eta the residual identities of the difference fields
    ``w~ = u1 - u1~`` and ``w^ = u2 - u2~`` are checked by applying the discrete
    transport operator, and the first-order bound
    ``||w~|| <= C2~ (||(sa - sa~) u1|| + ||(ss - ss~) K(u1)||)`` is evaluated.
    """
    grid, quad = c_true.grid, g.quad
    kern = kernel if kernel is not None else ScatteringKernel.isotropic_kernel(quad)
    data, _ = make_data(c_true, g, kernel=kern)
    zero = BoundarySource.zeros(grid, quad)

    def one(eta):
        rec = EtaRecord(eta)
        try:
            ct = _perturbed(c_true, "sigma_s", eta, bump) if eta else c_true
            ra = reconstruct_sigma_a_transport(ct, g, data.h1, tol=tol, kernel=kern)
            ca = ct.replace(sigma_a=ra.field)
            rb = reconstruct_sigma_b_transport(ca, g, data.h2, tol=tol, kernel=kern)
            rec.sigma_a, rec.sigma_b = ra.field, rb.field
            rec.diagnostics.update(a_iterations=ra.iterations, b_iterations=rb.iterations,
                                   Pi=rb.certificate.Pi, in_A2=rb.certificate.in_A2,
                                   in_A1=rb.certificate.in_A1)
            rec.diagnostics["_u"] = (rb.extras["u1"], rb.extras["u2"], ca)
        except QpatError as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
        return rec

    records = _run(one, eta_list, threads or thread_count())
    ref = next((r for r in records if r.eta == 0 and r.error is None), None)
    if ref is None:
        ref = one(0.0)
    if ref.error is not None:
        raise QpatError(f"reference reconstruction failed: {ref.error}")
    u1, u2, cref = ref.diagnostics["_u"]
    for r in records:
        if r.error is not None:
            continue
        r.err_a = discrete_norms(ref.sigma_a - r.sigma_a, "L2_Omega", grid)
        r.err_b = discrete_norms(ref.sigma_b - r.sigma_b, "L2_Omega", grid)
        ds = cref.sigma_s - r.diagnostics["_u"][2].sigma_s
        r.misspecification = discrete_norms(ds, "L2_Omega", grid)
        _transport_identities(r, cref, ref.sigma_b, u1, u2, g, zero, kern)
    for r in records:
        r.diagnostics.pop("_u", None)
    res = UQSweepResult("transport", records, "L2_Omega")
    return _finish(res, (ref.sigma_a, ref.sigma_b))


def _transport_identities(rec, c, sigma_b, u1, u2, g, zero, kern):
    grid, quad = c.grid, g.quad
    ut1, ut2, ct = rec.diagnostics["_u"]
    da = (c.sigma_a - ct.sigma_a)[..., None]
    ds = (c.sigma_s - ct.sigma_s)[..., None]
    m = lambda u: (u @ quad.weights)[..., None]  # noqa: E731
    wt = u1 - ut1
    rhs1 = -da * u1 + ds * apply_scattering(u1, kern)
    d1 = apply_transport_operator(ct, wt, zero, kern) - rhs1
    wh = u2 - ut2
    rhs2 = (-da * ut2 + ds * apply_scattering(ut2, kern)
            + 2 * rec.sigma_b[..., None] * m(ut1) * ut1 - 2 * sigma_b[..., None] * m(u1) * u1)
    d2 = apply_transport_operator(c, wh, zero, kern) - rhs2
    scale1 = max(float(np.abs(rhs1).max()), float(np.abs(u1).max()))
    scale2 = max(float(np.abs(rhs2).max()), float(np.abs(u2).max()))
    C2t = validate_coefficients(ct, strict=False).C2
    lhs = discrete_norms(wt, "L2_X", grid, quad)
    bound = C2t * (discrete_norms(da * u1, "L2_X", grid, quad)
                   + discrete_norms(ds * apply_scattering(u1, kern), "L2_X", grid, quad))
    rec.diagnostics.update(
        w1_defect=float(np.abs(d1).max()) / scale1 if scale1 else 0.0,
        w2_defect=float(np.abs(d2).max()) / scale2 if scale2 else 0.0,
        w1_norm=lhs, w1_bound=bound, w1_bound_holds=bool(lhs <= bound * (1 + 1e-12) + 1e-300),
    )


def uq_diffusion_sweep(c_true: CoefficientSet, g, eta_list=DEFAULT_ETAS, p=4.0, bump=None,
                       threads=None, tol=1e-12):
    """Reconstruct ``(sigma_a, sigma_b)`` with ``gamma~ = (1 + eta bump) gamma`` from one
    data set and compare with the eta = 0 reconstruction in ``L^p``.

    Misspecification is ``||(gamma~ - gamma)/gamma~||_{W^{1,p}}``. Per eta the ratio
    ``||u1 - u1~||_{W^{2,p}} / misspecification`` and the defects of the difference
    equations ``-div(gamma grad w) = div((gamma - gamma~) grad u~)`` for ``u1`` and
    ``u2`` are recorded.
    """
    grid = c_true.grid
    g = np.asarray(g, dtype=float)
    data, _ = make_data(c_true, g)

    def one(eta):
        rec = EtaRecord(eta)
        try:
            ct = _perturbed(c_true, "gamma", eta, bump) if eta else c_true
            ra = reconstruct_sigma_a_diffusion(ct, g, data.h1, tol=tol)
            ca = ct.replace(sigma_a=ra.field)
            u1 = ra.extras["u1"]
            rb = reconstruct_sigma_b_diffusion(ca, g, data.h2, u1=u1)
            rec.sigma_a, rec.sigma_b = ra.field, rb.field
            u2 = rb.extras["U"] - rb.extras["psi"]
            rec.diagnostics.update(a_iterations=ra.iterations)
            rec.diagnostics["_u"] = (u1, u2, ca)
        except QpatError as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
        return rec

    records = _run(one, eta_list, threads or thread_count())
    ref = next((r for r in records if r.eta == 0 and r.error is None), None) or one(0.0)
    if ref.error is not None:
        raise QpatError(f"reference reconstruction failed: {ref.error}")
    u1, u2, cref = ref.diagnostics["_u"]
    op_ref = EllipticOperator.assemble(grid, cref.gamma)
    for r in records:
        if r.error is not None:
            continue
        ut1, ut2, ct = r.diagnostics["_u"]
        r.err_a = discrete_norms(ref.sigma_a - r.sigma_a, "Lp_Omega", grid, p=p)
        r.err_b = discrete_norms(ref.sigma_b - r.sigma_b, "Lp_Omega", grid, p=p)
        rel = (ct.gamma - cref.gamma) / ct.gamma
        r.misspecification = discrete_norms(rel, "W1p_discrete", grid, p=p)
        du1 = discrete_norms(u1 - ut1, "W2p_discrete", grid, p=p)
        r.diagnostics["u1_w2p_diff"] = du1
        r.diagnostics["u1_ratio"] = du1 / r.misspecification if r.misspecification else 0.0
        op_t = EllipticOperator.assemble(grid, ct.gamma)
        zero = np.zeros(grid.n_faces)
        # relative to the Dirichlet right-hand side, the quantity the CG tolerance refers to
        scale = float(np.linalg.norm(op_ref.boundary_rhs(g)) + np.linalg.norm(
            op_t.boundary_rhs(g)))
        for name, (u, ut, trace) in (("w1", (u1, ut1, g)), ("w2", (u2, ut2, zero))):
            rhs = op_t.apply(ut, trace, with_absorption=False) - op_ref.apply(
                ut, trace, with_absorption=False)
            lhs = op_ref.apply(u - ut, zero, with_absorption=False)
            r.diagnostics[f"{name}_defect"] = float(np.linalg.norm(lhs - rhs)) / scale
    for r in records:
        r.diagnostics.pop("_u", None)
    res = UQSweepResult("diffusion", records, "Lp_Omega", p=p)
    return _finish(res, (ref.sigma_a, ref.sigma_b))


def u1_sensitivity_check(c: CoefficientSet, g, gamma_tilde, p=4.0):
    """``||u1 - u1~||_{W^{2,p}}`` and the misspecification norm for two diffusion
    coefficients with the same ``sigma_a`` (forward comparison without reconstruction)."""
    u1, _ = solve_linear_diffusion(c, g)
    ct = c.replace(gamma=gamma_tilde)
    ut, _ = solve_linear_diffusion(ct, g)
    m = discrete_norms((ct.gamma - c.gamma) / ct.gamma, "W1p_discrete", c.grid, p=p)
    return discrete_norms(u1 - ut, "W2p_discrete", c.grid, p=p), m

