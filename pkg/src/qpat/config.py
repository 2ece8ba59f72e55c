"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .domain import (
    AngularQuadrature,
    BoundarySource,
    CoefficientSet,
    ScatteringKernel,
    SpatialGrid,
    constant_trace,
    gaussian_bump,
)
from .errors import ConfigError
from .io import read_boundary_source, read_field

REGIMES = ("transport", "diffusion")
REQUIRED = ("regime", "nx", "ny")
COEFFS = ("xi", "sigma_a", "sigma_s", "sigma_b", "gamma")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every key of the config file, with its default.

    Coefficient entries accept ``<number>``, ``bump <base> <amplitude> <cx> <cy> <width>``
    or ``file <path>`` (a qpat-field file). ``source`` is ``constant`` (value
    ``source_value``) or ``file`` (``source_file``); ``amplitude`` scales it for the
    semilinear forward problem.
    """

    regime: str
    nx: int
    ny: int
    x0: float = 0.0
    y0: float = 0.0
    width: float = 1.0
    height: float = 1.0
    boundary_layer_delta: float = 0.0
    n_dirs: int = 16
    quad_offset: float = 0.5
    kernel: str = "isotropic"
    anisotropy: float = 0.0
    xi: str = "1.0"
    sigma_a: str = "1.0"
    sigma_s: str = "1.0"
    sigma_b: str = "1.0"
    gamma: str = "1.0"
    c0: float | None = None
    C0: float | None = None
    sigma_a_layer: float | None = None
    sigma_s_layer: float | None = None
    source: str = "constant"
    source_value: float = 1.0
    source_file: str = ""
    amplitude: float = 1e-2
    tol: float = 1e-10
    max_iter: int = 200
    source_max_iter: int = 10000
    recon_tol: float = 1e-12
    recon_max_iter: int = 500
    require_admissible: bool = False
    eps_list: tuple = (1e-2, 5e-3, 2.5e-3)
    eta_list: tuple = (0.0, 0.01, 0.05, 0.1)
    uq_p: float = 4.0
    noise: float = 0.0
    seed: int = 0
    stability_pairs: int = 10
    stability_amplitude: float = 0.05
    out: str = "out"
    base_dir: str = field(default=".", compare=False, repr=False)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_KEYS = [f.name for f in fields(ExperimentConfig) if f.name != "base_dir"]


def _convert(key, raw):
    t = _TYPES[key]
    if t == "int":
        return int(raw)
    if t == "float":
        return float(raw)
    if t == "float | None":
        return None if raw.lower() == "none" else float(raw)
    if t == "bool":
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if t == "tuple":
        return tuple(float(x) for x in raw.replace(",", " ").split())
    return raw


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(repr(float(x)) for x in v)
    return str(v)


def parse_config(text, base_dir=".", overrides=()):
    """Parse config text; ``overrides`` are extra ``key=value`` strings applied last."""
    values, errors = {}, []
    lines = [(n, line) for n, line in enumerate(text.splitlines(), 1)]
    lines += [(f"override {i + 1}", o) for i, o in enumerate(overrides)]
    for n, line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {n}: expected 'key = value', got {line!r}")
            continue
        key, _, raw = (s.strip() for s in line.partition("="))
        if key not in _TYPES or key == "base_dir":
            errors.append(f"line {n}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            errors.append(f"line {n}: bad value for {key}: {exc}")
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        errors.append("missing required keys: " + ", ".join(missing))
    if errors:
        raise ConfigError("; ".join(errors))
    cfg = ExperimentConfig(**values, base_dir=str(base_dir))
    problems = semantic_errors(cfg)
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def load_config(path, overrides=()):
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent, overrides=overrides)


def to_text(cfg: ExperimentConfig):
    return "".join(f"{k} = {_format(getattr(cfg, k))}\n" for k in _KEYS)


def semantic_errors(cfg: ExperimentConfig):
    out = []
    if cfg.regime not in REGIMES:
        out.append(f"regime must be one of {REGIMES}, got {cfg.regime!r}")
    try:
        build_grid(cfg)
    except ValueError as exc:
        out.append(f"grid: {exc}")
    if cfg.regime == "transport":
        try:
            build_quadrature(cfg)
        except ValueError as exc:
            out.append(f"quadrature: {exc}")
    if cfg.kernel not in ("isotropic", "henyey-greenstein"):
        out.append(f"kernel must be isotropic or henyey-greenstein, got {cfg.kernel!r}")
    for name in COEFFS:
        spec = getattr(cfg, name).split()
        if not spec:
            out.append(f"{name}: empty value")
        elif spec[0] == "bump":
            if len(spec) != 6:
                out.append(f"{name}: bump needs base amplitude cx cy width")
        elif spec[0] == "file":
            if len(spec) != 2 or not _resolve(cfg, spec[1]).is_file():
                out.append(f"{name}: file not found")
        else:
            try:
                float(spec[0])
            except ValueError:
                out.append(f"{name}: expected number, 'bump ...' or 'file <path>'")
    if cfg.source not in ("constant", "file"):
        out.append(f"source must be constant or file, got {cfg.source!r}")
    if cfg.source == "file" and not _resolve(cfg, cfg.source_file).is_file():
        out.append(f"source_file {cfg.source_file!r} not found")
    for key in ("tol", "recon_tol", "amplitude"):
        if not getattr(cfg, key) > 0:
            out.append(f"{key} must be positive")
    for key in ("max_iter", "source_max_iter", "recon_max_iter"):
        if getattr(cfg, key) < 1:
            out.append(f"{key} must be >= 1")
    if cfg.noise < 0:
        out.append("noise must be nonnegative")
    if cfg.uq_p <= 2:
        out.append("uq_p must exceed 2")
    if any(e <= 0 for e in cfg.eps_list):
        out.append("eps_list entries must be positive")
    if any(e <= -1 for e in cfg.eta_list):
        out.append("eta_list entries must exceed -1")
    return out


def _resolve(cfg, p):
    p = Path(p)
    return p if p.is_absolute() else Path(cfg.base_dir) / p


def build_grid(cfg: ExperimentConfig) -> SpatialGrid:
    return SpatialGrid(cfg.nx, cfg.ny, cfg.x0, cfg.y0, cfg.width, cfg.height,
                       cfg.boundary_layer_delta)


def build_quadrature(cfg: ExperimentConfig) -> AngularQuadrature:
    return AngularQuadrature(cfg.n_dirs, cfg.quad_offset)


def build_kernel(cfg: ExperimentConfig, quad):
    if cfg.kernel == "henyey-greenstein":
        return ScatteringKernel.henyey_greenstein(quad, cfg.anisotropy)
    return ScatteringKernel.isotropic_kernel(quad)


def build_field(cfg: ExperimentConfig, grid, spec):
    parts = spec.split()
    if parts[0] == "bump":
        base, amp, cx, cy, width = (float(x) for x in parts[1:])
        return gaussian_bump(grid, base, amp, (cx, cy), width)
    if parts[0] == "file":
        a = read_field(_resolve(cfg, parts[1]))
        if a.shape != grid.shape:
            raise ConfigError(f"{parts[1]}: shape {a.shape} != grid {grid.shape}")
        return a
    return np.full(grid.shape, float(parts[0]))


def build_coefficients(cfg: ExperimentConfig, grid=None) -> CoefficientSet:
    grid = grid or build_grid(cfg)
    f = {name: build_field(cfg, grid, getattr(cfg, name)) for name in COEFFS}
    if cfg.regime == "transport":
        f["gamma"] = None
    return CoefficientSet(grid, f["xi"], f["sigma_a"], f["sigma_s"], f["sigma_b"], f["gamma"],
                          cfg.c0, cfg.C0, cfg.sigma_a_layer, cfg.sigma_s_layer)


def build_source(cfg: ExperimentConfig, grid=None, quad=None):
    """Unit-amplitude boundary source (BoundarySource or Dirichlet trace)."""
    grid = grid or build_grid(cfg)
    if cfg.regime == "transport":
        quad = quad or build_quadrature(cfg)
        if cfg.source == "file":
            return read_boundary_source(_resolve(cfg, cfg.source_file), grid, quad)
        return BoundarySource.constant(grid, quad, cfg.source_value)
    if cfg.source == "file":
        a = read_field(_resolve(cfg, cfg.source_file)).ravel()
        if a.size != grid.n_faces:
            raise ConfigError(f"trace file needs {grid.n_faces} values, got {a.size}")
        return a
    return constant_trace(grid, cfg.source_value)


def replace(cfg: ExperimentConfig, **changes):
    return dataclasses.replace(cfg, **changes)
