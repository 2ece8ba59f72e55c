"""Field files, CSV export, key-value reports and artifact manifests."""

from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path

import numpy as np

from .domain import AngularQuadrature, BoundarySource, SpatialGrid
from .errors import ShapeError

MAGIC = "qpat-field v1"
MANIFEST = "manifest.txt"


def write_field(path, values):
    """Write a 2-D or 3-D array as ``qpat-field v1 nx ny [nv]`` + little-endian float64."""
    a = np.asarray(values, dtype="<f8")
    if a.ndim not in (2, 3):
        raise ShapeError(f"fields are 2-D or 3-D, got shape {a.shape}")
    header = f"{MAGIC} " + " ".join(str(n) for n in a.shape) + "\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes(order="C"))
    return path


def read_field(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) < 4 or " ".join(header[:2]) != MAGIC:
            raise ValueError(f"{path}: not a {MAGIC} file")
        dims = tuple(int(n) for n in header[2:])
        if len(dims) not in (2, 3) or min(dims) <= 0:
            raise ValueError(f"{path}: bad dimensions {dims}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != math.prod(dims):
        raise ValueError(f"{path}: expected {math.prod(dims)} values, found {data.size}")
    return data.reshape(dims).astype(float)


def write_boundary_source(path, g: BoundarySource):
    """Stored as a ``n_faces x 1 x n_dirs`` field."""
    return write_field(path, g.values[:, None, :])


def read_boundary_source(path, grid: SpatialGrid, quad: AngularQuadrature):
    a = read_field(path)
    if a.ndim != 3 or a.shape[1] != 1:
        raise ShapeError(f"{path}: boundary source files have shape (n_faces, 1, n_dirs)")
    return BoundarySource(grid, quad, a[:, 0, :])


def write_csv(path, values):
    """Rows ``i, j[, k], value`` in the same row-major order as the binary format."""
    a = np.asarray(values, dtype=float)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["i", "j", "k"][: a.ndim] + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for idx in np.ndindex(a.shape):
            w.writerow([*idx, repr(float(a[idx]))])
    return path


def write_rows(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    return path


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return "none"
    return str(v)


def write_report(path, items: dict, title=None):
    """``key = value`` lines, in insertion order."""
    lines = [f"# {title}"] if title else []
    lines += [f"{k} = {format_value(v)}" for k, v in items.items()]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_report(path):
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir):
    """List every file under ``out_dir`` (except the manifest) with its SHA-256."""
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != MANIFEST)
    lines = [f"{sha256(p)}  {p.relative_to(out_dir).as_posix()}" for p in files]
    path = out_dir / MANIFEST
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def read_manifest(out_dir):
    out = {}
    for line in (Path(out_dir) / MANIFEST).read_text(encoding="utf-8").splitlines():
        digest, _, name = line.partition("  ")
        out[name] = digest
    return out
