"""Phase-space discretization: grid, angular quadrature, scattering kernel,
coefficient sets, inflow boundary data and the discrete norms used throughout.

Fields are plain numpy arrays. A scalar field has shape ``(nx, ny)`` (cell
averages, index ``[i, j]`` is the cell whose centre is ``(x_i, y_j)``); a phase
field has shape ``(nx, ny, n_dirs)``.
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import CoefficientError, ShapeError

# Directions whose normal component is below this are treated as tangent to a face.
TANGENT_TOL = 1e-14

LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BoundaryFaces:
    """Cell faces on the rectangle boundary, ordered left, right, bottom, top."""

    side: np.ndarray
    index: np.ndarray
    cell_i: np.ndarray
    cell_j: np.ndarray
    center: np.ndarray
    normal: np.ndarray
    length: np.ndarray

    def __len__(self):
        return len(self.side)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cell-centred grid on the rectangle ``[x0, x0+width] x [y0, y0+height]``."""

    nx: int
    ny: int
    x0: float = 0.0
    y0: float = 0.0
    width: float = 1.0
    height: float = 1.0
    boundary_layer_delta: float = 0.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("nx, ny must be integers")
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs nx, ny >= 3, got nx={self.nx}, ny={self.ny}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("domain width and height must be positive")
        half = 0.5 * min(self.width, self.height)
        if not (0.0 <= self.boundary_layer_delta < half):
            raise ValueError(
                f"boundary_layer_delta must lie in [0, {half}), got {self.boundary_layer_delta}"
            )

    @property
    def hx(self):
        return self.width / self.nx

    @property
    def hy(self):
        return self.height / self.ny

    @property
    def h(self):
        return max(self.hx, self.hy)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def cell_area(self):
        return self.hx * self.hy

    @property
    def area(self):
        return self.width * self.height

    @property
    def diameter(self):
        return float(np.hypot(self.width, self.height))

    @property
    def x1(self):
        return self.x0 + self.width

    @property
    def y1(self):
        return self.y0 + self.height

    @functools.cached_property
    def x_centers(self):
        return self.x0 + (np.arange(self.nx) + 0.5) * self.hx

    @functools.cached_property
    def y_centers(self):
        return self.y0 + (np.arange(self.ny) + 0.5) * self.hy

    def centers(self):
        """Cell-centre coordinate arrays ``X, Y`` of shape ``(nx, ny)``."""
        return np.meshgrid(self.x_centers, self.y_centers, indexing="ij")

    def contains(self, point, tol=1e-12):
        x, y = point
        return (self.x0 - tol <= x <= self.x1 + tol) and (self.y0 - tol <= y <= self.y1 + tol)

    def wall_distance(self):
        """Distance from each cell centre to the boundary."""
        X, Y = self.centers()
        return np.minimum.reduce([X - self.x0, self.x1 - X, Y - self.y0, self.y1 - Y])

    def layer_mask(self):
        """Cells inside the delta-vicinity of the boundary (coefficients known there)."""
        if self.boundary_layer_delta <= 0:
            return np.zeros(self.shape, dtype=bool)
        return self.wall_distance() < self.boundary_layer_delta

    def cell_of(self, x, y):
        """Index of the cell containing each point (points on faces go to the lower cell)."""
        i = np.clip(np.floor((np.asarray(x) - self.x0) / self.hx).astype(int), 0, self.nx - 1)
        j = np.clip(np.floor((np.asarray(y) - self.y0) / self.hy).astype(int), 0, self.ny - 1)
        return i, j

    @functools.cached_property
    def faces(self) -> BoundaryFaces:
        nx, ny = self.nx, self.ny
        jy = np.arange(ny)
        ix = np.arange(nx)
        side = np.concatenate([np.full(ny, LEFT), np.full(ny, RIGHT),
                               np.full(nx, BOTTOM), np.full(nx, TOP)])
        index = np.concatenate([jy, jy, ix, ix])
        cell_i = np.concatenate([np.zeros(ny, int), np.full(ny, nx - 1), ix, ix])
        cell_j = np.concatenate([jy, jy, np.zeros(nx, int), np.full(nx, ny - 1)])
        cx = np.concatenate([np.full(ny, self.x0), np.full(ny, self.x1),
                             self.x_centers, self.x_centers])
        cy = np.concatenate([self.y_centers, self.y_centers,
                             np.full(nx, self.y0), np.full(nx, self.y1)])
        normal = np.zeros((len(side), 2))
        normal[side == LEFT] = (-1.0, 0.0)
        normal[side == RIGHT] = (1.0, 0.0)
        normal[side == BOTTOM] = (0.0, -1.0)
        normal[side == TOP] = (0.0, 1.0)
        length = np.where(side < BOTTOM, self.hy, self.hx)
        return BoundaryFaces(side, index, cell_i, cell_j, np.column_stack([cx, cy]), normal, length)

    @property
    def n_faces(self):
        return 2 * (self.nx + self.ny)

    def face_cell_values(self, f):
        """Value of a scalar field in the cell adjacent to every boundary face."""
        f = check_scalar(f, self)
        return f[self.faces.cell_i, self.faces.cell_j]


@dataclass(frozen=True)
class AngularQuadrature:
    """Equally spaced directions on the unit circle with weights ``1/N``.

    ``theta_k = 2 pi (k + offset) / N``. The default half-step offset keeps every
    direction off the coordinate axes.
    """

    n_dirs: int
    offset: float = 0.5

    def __post_init__(self):
        if self.n_dirs < 4 or self.n_dirs % 2:
            raise ValueError(f"n_dirs must be an even integer >= 4, got {self.n_dirs}")

    @functools.cached_property
    def angles(self):
        return 2.0 * np.pi * (np.arange(self.n_dirs) + self.offset) / self.n_dirs

    @functools.cached_property
    def directions(self):
        d = np.column_stack([np.cos(self.angles), np.sin(self.angles)])
        d.setflags(write=False)
        return d

    @functools.cached_property
    def weights(self):
        w = np.full(self.n_dirs, 1.0 / self.n_dirs)
        w.setflags(write=False)
        return w

    @property
    def opposite(self):
        """Index of ``-v_k`` for every ``k``."""
        return (np.arange(self.n_dirs) + self.n_dirs // 2) % self.n_dirs

    def __len__(self):
        return self.n_dirs


@dataclass(frozen=True, eq=False)
class ScatteringKernel:
    """Kernel matrix ``theta[k, j] = Theta(v_k, v_j)`` with both quadrature normalizations."""

    quad: AngularQuadrature
    theta: np.ndarray
    isotropic: bool = False

    def __post_init__(self):
        th = _readonly(self.theta)
        n = self.quad.n_dirs
        if th.shape != (n, n):
            raise ShapeError(f"kernel shape {th.shape} != ({n}, {n})")
        if np.any(th < 0):
            raise ValueError("scattering kernel must be nonnegative")
        w = self.quad.weights
        rows = th @ w
        cols = w @ th
        if np.max(np.abs(rows - 1)) > 1e-12 or np.max(np.abs(cols - 1)) > 1e-12:
            raise ValueError(
                "scattering kernel is not normalized: "
                f"row error {np.max(np.abs(rows - 1)):.2e}, column error {np.max(np.abs(cols - 1)):.2e}"
            )
        object.__setattr__(self, "theta", th)

    @classmethod
    def isotropic_kernel(cls, quad):
        return cls(quad, np.ones((quad.n_dirs, quad.n_dirs)), isotropic=True)

    @classmethod
    def henyey_greenstein(cls, quad, anisotropy, max_iter=1000):
        """2-D Henyey-Greenstein kernel, Sinkhorn-scaled to satisfy both normalizations."""
        if not -1 < anisotropy < 1:
            raise ValueError("anisotropy must lie in (-1, 1)")
        if anisotropy == 0:
            return cls.isotropic_kernel(quad)
        g = anisotropy
        cosang = quad.directions @ quad.directions.T
        th = (1 - g * g) / (1 + g * g - 2 * g * cosang)
        w = quad.weights
        for _ in range(max_iter):
            th = th / (th @ w)[:, None]
            th = th / (w @ th)[None, :]
            if max(np.max(np.abs(th @ w - 1)), np.max(np.abs(w @ th - 1))) < 1e-15:
                break
        return cls(quad, th)

    @functools.cached_property
    def inscatter(self):
        """Matrix ``M[k, j] = w_j Theta(v_k, v_j)``; ``(u @ M.T)`` is the in-scattering term."""
        return self.theta * self.quad.weights[None, :]

    @functools.cached_property
    def outscatter(self):
        """Column integrals ``sum_k w_k Theta(v_k, v_j)`` (equal to one up to round-off)."""
        return self.quad.weights @ self.theta

    def gain(self, u):
        """In-scattering ``int Theta(v, v') u(x, v') dv'``."""
        if self.isotropic:
            return np.repeat(velocity_average(u, self.quad)[..., None], self.quad.n_dirs, axis=-1)
        return u @ self.inscatter.T


def check_scalar(f, grid):
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ShapeError(f"scalar field shape {f.shape} != grid shape {grid.shape}")
    return f


def check_phase(u, grid, quad):
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.nx, grid.ny, quad.n_dirs):
        raise ShapeError(
            f"phase field shape {u.shape} != ({grid.nx}, {grid.ny}, {quad.n_dirs})"
        )
    return u


def velocity_average(u, quad):
    """``<u>(x) = sum_k w_k u(x, v_k)`` over the last axis."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != quad.n_dirs:
        raise ShapeError(f"last axis {u.shape[-1]} != number of directions {quad.n_dirs}")
    return u @ quad.weights


def apply_scattering(u, kernel):
    """Quadrature form of ``K(u) = int Theta(v,v') u(v') - Theta(v',v) u(v) dv'``."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != kernel.quad.n_dirs:
        raise ShapeError(f"last axis {u.shape[-1]} != number of directions {kernel.quad.n_dirs}")
    if kernel.isotropic:
        return velocity_average(u, kernel.quad)[..., None] - u
    return u @ kernel.inscatter.T - u * kernel.outscatter


def boundary_distance(x, v, grid):
    """Backward exit distance ``tau_-(x, v)``: length along ``-v`` from ``x`` to the boundary."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not grid.contains(x):
        raise ValueError(f"point {tuple(x)} lies outside the domain")
    if abs(np.hypot(*v) - 1) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return float(_exit_distance(x[0], x[1], v[0], v[1], grid))


def _exit_distance(x, y, vx, vy, grid):
    """Vectorised ``tau_-``; broadcasts over points and directions."""
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(vx > TANGENT_TOL, (x - grid.x0) / vx,
                      np.where(vx < -TANGENT_TOL, (grid.x1 - x) / -vx, np.inf))
        ty = np.where(vy > TANGENT_TOL, (y - grid.y0) / vy,
                      np.where(vy < -TANGENT_TOL, (grid.y1 - y) / -vy, np.inf))
    return np.clip(np.minimum(tx, ty), 0.0, None)


@dataclass(frozen=True, eq=False)
class BoundarySource:
    """Inflow data ``g`` on the discrete incoming boundary.

    ``values[f, k]`` is the value on boundary face ``f`` for direction ``k``; entries
    that are not inflow pairs (``-nu . v <= 0``) are stored as zero and ignored.
    """

    grid: SpatialGrid
    quad: AngularQuadrature
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n_faces, self.quad.n_dirs):
            raise ShapeError(
                f"boundary values shape {vals.shape} != ({self.grid.n_faces}, {self.quad.n_dirs})"
            )
        if not np.all(np.isfinite(vals[self.inflow])):
            raise ValueError("boundary values must be finite")
        vals[~self.inflow] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @functools.cached_property
    def normal_component(self):
        """``nu(x) . v`` for every (face, direction)."""
        return self.grid.faces.normal @ self.quad.directions.T

    @functools.cached_property
    def inflow(self):
        m = -self.normal_component > TANGENT_TOL
        m.setflags(write=False)
        return m

    @functools.cached_property
    def measure(self):
        """``d xi = |nu . v| d mu dv`` weight of each inflow pair (zero elsewhere)."""
        dxi = (np.abs(self.normal_component) * self.grid.faces.length[:, None]
               * self.quad.weights[None, :])
        return np.where(self.inflow, dxi, 0.0)

    def inflow_values(self):
        return self.values[self.inflow]

    @property
    def minimum(self):
        return float(self.inflow_values().min())

    @property
    def sup_norm(self):
        return float(np.abs(self.inflow_values()).max())

    def side_arrays(self):
        """Per-side arrays ``left (ny,N), right (ny,N), bottom (nx,N), top (nx,N)``."""
        ny, nx = self.grid.ny, self.grid.nx
        v = self.values
        return (v[:ny], v[ny:2 * ny], v[2 * ny:2 * ny + nx], v[2 * ny + nx:])

    def scaled(self, alpha):
        return BoundarySource(self.grid, self.quad, alpha * self.values)

    def __add__(self, other):
        return BoundarySource(self.grid, self.quad, self.values + other.values)

    @classmethod
    def zeros(cls, grid, quad):
        return cls(grid, quad, np.zeros((grid.n_faces, quad.n_dirs)))

    @classmethod
    def constant(cls, grid, quad, value=1.0):
        return cls(grid, quad, np.full((grid.n_faces, quad.n_dirs), float(value)))

    @classmethod
    def from_function(cls, grid, quad, fn):
        """Sample ``fn(x, y, vx, vy)`` at face centres for every direction."""
        c = grid.faces.center
        d = quad.directions
        vals = fn(c[:, 0:1], c[:, 1:2], d[None, :, 0], d[None, :, 1])
        vals = np.broadcast_to(np.asarray(vals, dtype=float), (grid.n_faces, quad.n_dirs))
        return cls(grid, quad, vals)


def constant_trace(grid, value=1.0):
    """Dirichlet trace on the boundary faces (diffusion regime)."""
    return np.full(grid.n_faces, float(value))


def trace_from_function(grid, fn):
    c = grid.faces.center
    return np.asarray(fn(c[:, 0], c[:, 1]), dtype=float) * np.ones(grid.n_faces)


def gaussian_bump(grid, base, amplitude, center=(0.5, 0.5), width=0.15):
    """``base + amplitude * exp(-|x - center|^2 / (2 width^2))`` at cell centres."""
    X, Y = grid.centers()
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
    return base + amplitude * np.exp(-r2 / (2.0 * width ** 2))


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Optical coefficients on the grid plus the global bounds ``c0 <= f <= C0``.

    ``gamma`` is only needed in the diffusion regime. ``sigma_a_layer`` /
    ``sigma_s_layer`` optionally declare the constant values assumed known in the
    boundary layer; validation checks the fields agree with them there.
    """

    grid: SpatialGrid
    xi: np.ndarray
    sigma_a: np.ndarray
    sigma_s: np.ndarray
    sigma_b: np.ndarray
    gamma: np.ndarray | None = None
    c0: float | None = None
    C0: float | None = None
    sigma_a_layer: float | None = None
    sigma_s_layer: float | None = None

    def __post_init__(self):
        shape = self.grid.shape
        for name in ("xi", "sigma_a", "sigma_s", "sigma_b", "gamma"):
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.broadcast_to(np.asarray(val, dtype=float), shape)
            object.__setattr__(self, name, _readonly(arr))
        fields_ = [f for f in self._bounded_fields().values()]
        positive = np.concatenate([f[f > 0].ravel() for f in fields_] or [np.ones(1)])
        if self.c0 is None:
            object.__setattr__(self, "c0", float(positive.min()) if positive.size else 1.0)
        if self.C0 is None:
            object.__setattr__(self, "C0", float(max(f.max() for f in fields_)))

    def _bounded_fields(self):
        out = {"xi": self.xi, "sigma_a": self.sigma_a, "sigma_s": self.sigma_s,
               "sigma_b": self.sigma_b}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        return out

    @classmethod
    def constant(cls, grid, xi=1.0, sigma_a=1.0, sigma_s=1.0, sigma_b=1.0, gamma=None,
                 c0=None, C0=None):
        return cls(grid, xi, sigma_a, sigma_s, sigma_b, gamma, c0, C0)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def sigma_t(self):
        return self.sigma_a + self.sigma_s


@dataclass(frozen=True)
class CoefficientCertificate:
    """Constants derived from a validated coefficient set."""

    c0: float
    C0: float
    nu: float
    sigma_bar: float
    C2: float
    c_tilde_2: float
    c_tilde_inf: float
    d_omega: float
    strict: bool


def validate_coefficients(c: CoefficientSet, strict=True) -> CoefficientCertificate:
    """Check the standing bounds and return ``nu``, ``sigma_bar`` and ``C2 = 1/(nu c0)``.

    ``strict`` enforces ``c0 <= f <= C0`` for every field. The relaxed mode lets
    ``sigma_s`` and ``sigma_b`` vanish (pure absorption, linear limit), which the
    solvers accept.
    """
    if not (c.c0 > 0 and c.c0 <= c.C0):
        raise CoefficientError(f"need 0 < c0 <= C0, got c0={c.c0}, C0={c.C0}")
    tol = 1e-12 * c.C0
    for name, f in c._bounded_fields().items():
        if not np.all(np.isfinite(f)):
            raise CoefficientError(f"{name} has non-finite values")
        lower = c.c0 if (strict or name not in ("sigma_s", "sigma_b")) else 0.0
        if f.min() <= 0 and lower > 0:
            raise CoefficientError(f"{name} must be positive (min {f.min():.3g})")
        if f.min() < lower - tol or f.max() > c.C0 + tol:
            raise CoefficientError(
                f"{name} violates bounds [{lower:.6g}, {c.C0:.6g}]: "
                f"range [{f.min():.6g}, {f.max():.6g}]"
            )
        if f.min() < 0:
            raise CoefficientError(f"{name} must be nonnegative")

    layer = c.grid.layer_mask()
    for name, value in (("sigma_a", c.sigma_a_layer), ("sigma_s", c.sigma_s_layer)):
        if value is None or not layer.any():
            continue
        f = getattr(c, name)[layer]
        if np.max(np.abs(f - value)) > 1e-12 * max(1.0, abs(value)):
            raise CoefficientError(
                f"{name} differs from its declared known value {value} inside the boundary layer"
            )

    ratio = c.sigma_a / (c.sigma_a + c.sigma_s)
    nu = float(ratio.min())
    if strict and not (0 < nu < 1):
        raise CoefficientError(f"nu = inf sigma_a/(sigma_a+sigma_s) must lie in (0,1), got {nu}")
    return CoefficientCertificate(
        c0=float(c.c0),
        C0=float(c.C0),
        nu=nu,
        sigma_bar=float(c.sigma_t.max()),
        C2=1.0 / (nu * c.c0),
        c_tilde_2=1.0 / np.sqrt(nu * c.c0),
        c_tilde_inf=1.0,
        d_omega=c.grid.diameter,
        strict=strict,
    )


def _derivatives(f, grid, order):
    gx, gy = np.gradient(f, grid.hx, grid.hy, edge_order=2)
    if order == 1:
        return [gx, gy]
    gxx, gxy = np.gradient(gx, grid.hx, grid.hy, edge_order=2)
    gyx, gyy = np.gradient(gy, grid.hx, grid.hy, edge_order=2)
    return [gx, gy, gxx, gxy, gyx, gyy]


NORMS = ("Linf", "L2_X", "L2_Omega", "Lp_Omega", "W1p_discrete", "W2p_discrete",
         "Ldxi_inf_Gamma", "Ldxi_2_Gamma")


def discrete_norms(f, which, grid=None, quad=None, p=2.0):
    """Grid / quadrature weighted norms.

    ``f`` is a scalar field, a phase field, or a :class:`BoundarySource` for the
    ``Ldxi_*_Gamma`` norms. Sobolev surrogates use centred differences with
    second-order one-sided stencils at the boundary.
    """
    if which not in NORMS:
        raise ValueError(f"unsupported norm {which!r}; choose from {NORMS}")
    if which.startswith("Ldxi"):
        if not isinstance(f, BoundarySource):
            raise TypeError(f"{which} needs a BoundarySource")
        if which == "Ldxi_inf_Gamma":
            vals = f.inflow_values()
            return float(np.abs(vals).max()) if vals.size else 0.0
        return float(np.sqrt(np.sum(f.measure * f.values ** 2)))
    f = np.asarray(f, dtype=float)
    if which == "Linf":
        return float(np.abs(f).max()) if f.size else 0.0
    if grid is None:
        raise ValueError(f"{which} needs the grid")
    if which == "L2_X":
        if quad is None:
            raise ValueError("L2_X needs the quadrature")
        f = check_phase(f, grid, quad)
        return float(np.sqrt(grid.cell_area * np.sum((f ** 2) @ quad.weights)))
    f = check_scalar(f, grid)
    if which == "L2_Omega":
        return float(np.sqrt(grid.cell_area * np.sum(f ** 2)))
    if p < 1:
        raise ValueError("p must be >= 1")

    def lp(g):
        return grid.cell_area * np.sum(np.abs(g) ** p)

    if which == "Lp_Omega":
        return float(lp(f) ** (1.0 / p))
    if which == "W1p_discrete":
        parts = [f] + _derivatives(f, grid, 1)
    else:
        if p <= 2:
            raise ValueError("W2p_discrete needs p > 2 (p > dimension)")
        parts = [f] + _derivatives(f, grid, 2)
    return float(sum(lp(g) for g in parts) ** (1.0 / p))
