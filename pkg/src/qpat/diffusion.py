"""Cell-centred finite-volume solver for ``-div(gamma grad u) + sigma_a u = S`` with
Dirichlet data, and the semilinear small-data solver built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .domain import CoefficientSet, SpatialGrid, check_scalar
from .errors import CoefficientError, DivergenceError, PreconditionError
from .transport import certified_ball

CG_TOL = 1e-12
PICARD_TOL = 1e-10
PICARD_MAX_ITER = 200


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    """Five-point discretization of ``-div(gamma grad .) + sigma_a`` with Dirichlet faces.

    Interior faces carry the harmonic mean of the adjacent ``gamma``. A boundary
    face is eliminated through the ghost value ``2 g - u_P``, which contributes
    ``2 gamma_P / h^2`` to the diagonal and ``2 gamma_P g / h^2`` to the right-hand
    side. ``stiffness`` excludes ``sigma_a``; ``matrix`` includes it.
    """

    grid: SpatialGrid
    stiffness: sp.csr_matrix
    sigma_a: np.ndarray
    boundary_coupling: np.ndarray

    @classmethod
    def assemble(cls, grid: SpatialGrid, gamma, sigma_a=None):
        gamma = check_scalar(gamma, grid)
        if np.any(gamma <= 0):
            raise CoefficientError("gamma must be positive")
        sigma_a = np.zeros(grid.shape) if sigma_a is None else check_scalar(sigma_a, grid)
        nx, ny = grid.shape
        idx = np.arange(nx * ny).reshape(nx, ny)
        cx = 1.0 / grid.hx ** 2
        cy = 1.0 / grid.hy ** 2
        gx = _harmonic(gamma[:-1, :], gamma[1:, :]) * cx
        gy = _harmonic(gamma[:, :-1], gamma[:, 1:]) * cy
        diag = np.zeros(grid.shape)
        diag[:-1, :] += gx
        diag[1:, :] += gx
        diag[:, :-1] += gy
        diag[:, 1:] += gy
        f = grid.faces
        coupling = np.where(f.side < 2, 2.0 * cx, 2.0 * cy) * gamma[f.cell_i, f.cell_j]
        np.add.at(diag, (f.cell_i, f.cell_j), coupling)
        rows = [idx.ravel(), idx[:-1, :].ravel(), idx[1:, :].ravel(),
                idx[:, :-1].ravel(), idx[:, 1:].ravel()]
        cols = [idx.ravel(), idx[1:, :].ravel(), idx[:-1, :].ravel(),
                idx[:, 1:].ravel(), idx[:, :-1].ravel()]
        vals = [diag.ravel(), -gx.ravel(), -gx.ravel(), -gy.ravel(), -gy.ravel()]
        K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nx * ny, nx * ny))
        K.sum_duplicates()
        return cls(grid, K, sigma_a, coupling)

    @property
    def matrix(self):
        return self.stiffness + sp.diags(self.sigma_a.ravel())

    def boundary_rhs(self, g):
        """Right-hand-side contribution of Dirichlet data ``g`` (one value per boundary face)."""
        g = np.asarray(g, dtype=float)
        if g.shape != (self.grid.n_faces,):
            raise ValueError(f"boundary trace needs {self.grid.n_faces} values, got {g.shape}")
        out = np.zeros(self.grid.shape)
        f = self.grid.faces
        np.add.at(out, (f.cell_i, f.cell_j), self.coupling_values(g))
        return out

    def coupling_values(self, g):
        return self.boundary_coupling * g

    def apply(self, u, g=None, with_absorption=True):
        """``-div(gamma grad u) (+ sigma_a u)`` with boundary values ``g`` (zero if omitted)."""
        u = check_scalar(u, self.grid)
        A = self.matrix if with_absorption else self.stiffness
        out = (A @ u.ravel()).reshape(self.grid.shape)
        if g is not None:
            out = out - self.boundary_rhs(g)
        return out

    def diagnostics(self):
        """Text summary of the assembled operator (size, symmetry, diagonal dominance)."""
        A = self.matrix
        asym = abs(A - A.T).max()
        d = A.diagonal()
        off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
        return {
            "unknowns": A.shape[0],
            "nonzeros": A.nnz,
            "asymmetry": float(asym),
            "min_diagonal": float(d.min()),
            "min_dominance_margin": float((d - off).min()),
        }


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    energies: list = field(default_factory=list)
    converged: bool = True


def conjugate_gradient(A, b, x0=None, tol=CG_TOL, max_iter=None):
    """Plain conjugate gradients on an SPD matrix.

    Stops when ``||r|| <= tol ||b||``. Records the energy ``x.Ax/2 - b.x`` of each
    iterate, which CG decreases monotonically (equivalently the A-norm error).
    """
    n = b.size
    max_iter = max_iter or 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = float(np.linalg.norm(b))
    res = float(np.linalg.norm(r))
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, [0.0])
    p = r.copy()
    rr = float(r @ r)
    energies = [float(0.5 * x @ (A @ x) - b @ x)]
    it = 0
    while res > tol * bnorm:
        if it >= max_iter:
            raise DivergenceError(f"CG did not converge in {max_iter} iterations "
                                  f"(relative residual {res / bnorm:.3e})",
                                  iterations=it, residual=res / bnorm)
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise CoefficientError("operator is not positive definite (check coefficients)")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        res = math.sqrt(rr)
        it += 1
        energies.append(float(0.5 * x @ (A @ x) - b @ x))
    return CGResult(x, it, res / bnorm, energies)


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = 0.0
    picard_iterations: int = 0
    picard_residuals: list = field(default_factory=list)
    contraction_bound: float | None = None
    ball_radius: float | None = None
    ball_ok: bool | None = None
    inverse_bound: float | None = None
    observed_ratio: float | None = None
    energies: list = field(default_factory=list)

    @property
    def picard_ratios(self):
        r = np.asarray(self.picard_residuals)
        if r.size < 2:
            return np.array([])
        with np.errstate(divide="ignore", invalid="ignore"):
            return r[1:] / r[:-1]

    def as_dict(self):
        out = {k: v for k, v in self.__dict__.items()
               if k not in ("picard_residuals", "energies")}
        out["picard_residuals"] = " ".join(f"{r:.6e}" for r in self.picard_residuals)
        return out


def _diffusion_fields(c: CoefficientSet):
    if c.gamma is None:
        raise CoefficientError("diffusion regime needs gamma")
    if np.any(c.gamma <= 0) or np.any(c.sigma_a <= 0):
        raise CoefficientError("gamma and sigma_a must be positive")
    return c.gamma, c.sigma_a


def operator_for(c: CoefficientSet) -> EllipticOperator:
    gamma, sigma_a = _diffusion_fields(c)
    return EllipticOperator.assemble(c.grid, gamma, sigma_a)


def solve_linear_diffusion(c: CoefficientSet, g, S=None, tol=CG_TOL, op=None, x0=None):
    """Solve ``-div(gamma grad v) + sigma_a v = S`` in the domain, ``v = g`` on the boundary."""
    op = op or operator_for(c)
    grid = c.grid
    rhs = op.boundary_rhs(g)
    if S is not None:
        rhs = rhs + check_scalar(S, grid)
    x0 = None if x0 is None else check_scalar(x0, grid).ravel()
    res = conjugate_gradient(op.matrix, rhs.ravel(), x0=x0, tol=tol)
    return res.x.reshape(grid.shape), SolveReport(iterations=res.iterations,
                                                  residual=res.residual,
                                                  energies=res.energies)


def inverse_sup_bound(op: EllipticOperator, with_absorption=True, tol=CG_TOL):
    """``||A^{-1}||_inf = max(A^{-1} 1)``; exact because ``A^{-1}`` is entrywise nonnegative."""
    A = op.matrix if with_absorption else op.stiffness
    res = conjugate_gradient(A, np.ones(A.shape[0]), tol=tol)
    return float(res.x.max())


def solve_semilinear_diffusion(c: CoefficientSet, g, tol=PICARD_TOL, max_iter=PICARD_MAX_ITER,
                               cg_tol=CG_TOL):
    """Small-data solution of ``-div(gamma grad u) + sigma_a u + sigma_b u^2 = 0``, ``u = g``.

    ``u = u0 + w`` with ``w`` the fixed point of ``w -> T^{-1}(-sigma_b (u0 + w)^2)``.
    The ball radius ``delta`` is the smallest root of ``c (eps + delta)^2 = delta``
    with ``c = ||T^{-1}||_inf sup sigma_b`` and ``eps = ||g||_inf``; the Lipschitz
    constant of the map on that ball is ``2 c (eps + delta) < 1``.
    """
    op = operator_for(c)
    g = np.asarray(g, dtype=float)
    eps = float(np.abs(g).max()) if g.size else 0.0
    m = inverse_sup_bound(op)
    kc = m * float(c.sigma_b.max())
    u0, rep0 = solve_linear_diffusion(c, g, tol=cg_tol, op=op)
    report = SolveReport(iterations=rep0.iterations, residual=rep0.residual, inverse_bound=m)
    if kc == 0.0:
        report.contraction_bound = 0.0
        report.ball_radius = 0.0
        report.ball_ok = True
        report.observed_ratio = float(np.abs(u0).max()) / eps if eps else 0.0
        return u0, report
    delta = certified_ball(kc, eps)
    if delta is None:
        raise PreconditionError(
            f"contraction: c(eps+delta)^2 < delta unattainable for ||g|| = {eps:.4g} "
            f"(need ||g|| < {1 / (4 * kc):.4g})")
    report.ball_radius = delta
    report.contraction_bound = 2 * kc * (eps + delta)
    w = np.zeros(c.grid.shape)
    ball_ok = True
    for _ in range(max_iter):
        rhs = -c.sigma_b * (u0 + w) ** 2
        w_new, rep = solve_linear_diffusion(c, np.zeros(c.grid.n_faces), S=rhs, tol=cg_tol,
                                            op=op, x0=w)
        report.iterations += rep.iterations
        res = float(np.max(np.abs(w_new - w)))
        report.picard_residuals.append(res)
        w = w_new
        ball_ok = ball_ok and float(np.abs(w).max()) <= delta * (1 + 1e-9)
        if res <= tol:
            break
    else:
        raise DivergenceError(f"Picard iteration did not reach tol={tol:g}",
                              iterations=max_iter, residual=report.picard_residuals[-1])
    u = u0 + w
    report.picard_iterations = len(report.picard_residuals)
    report.residual = report.picard_residuals[-1]
    report.ball_ok = ball_ok
    report.observed_ratio = float(np.abs(u).max()) / eps if eps else 0.0
    return u, report
