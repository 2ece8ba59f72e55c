"""Inverse-crime round trips for sigma_a and sigma_b, with optional data noise.

    python scripts/round_trip.py --config configs/transport.cfg --noise 0 1e-4 1e-3
"""

import argparse
from pathlib import Path

from qpat.config import build_coefficients, build_grid, build_kernel, build_quadrature
from qpat.config import build_source, load_config
from qpat.data import make_data
from qpat.errors import QpatError
from qpat.io import write_rows
from qpat.reconstruction import (
    reconstruct_sigma_a_diffusion,
    reconstruct_sigma_a_transport,
    reconstruct_sigma_b_diffusion,
    reconstruct_sigma_b_transport,
)


def run(cfg, noise):
    grid = build_grid(cfg)
    transport = cfg.regime == "transport"
    quad = build_quadrature(cfg) if transport else None
    kernel = build_kernel(cfg, quad) if transport else None
    c = build_coefficients(cfg, grid)
    g = build_source(cfg, grid, quad)
    clean, _ = make_data(c, g, kernel=kernel)
    rows = []
    for level in noise:
        d = clean.with_noise(level, cfg.seed) if level > 0 else clean
        try:
            if transport:
                ra = reconstruct_sigma_a_transport(c, g, d.h1, kernel=kernel)
                rb = reconstruct_sigma_b_transport(c.replace(sigma_a=ra.field), g, d.h2,
                                                   kernel=kernel)
                extra = f"Pi={rb.certificate.Pi:.4g}"
            else:
                ra = reconstruct_sigma_a_diffusion(c, g, d.h1)
                rb = reconstruct_sigma_b_diffusion(c.replace(sigma_a=ra.field), g, d.h2)
                extra = ""
            rows.append([level, f"{ra.error(c.sigma_a, grid):.6e}",
                         f"{rb.error(c.sigma_b, grid):.6e}", ra.iterations, rb.iterations, extra])
        except QpatError as exc:
            rows.append([level, "", "", "", "", f"{type(exc).__name__}: {exc}"])
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 1e-4, 1e-3, 1e-2])
    ap.add_argument("--out", type=Path, default=Path("out/round_trip"))
    args = ap.parse_args()
    cfg = load_config(args.config)
    rows = run(cfg, args.noise)
    head = ["noise", "err_sigma_a", "err_sigma_b", "iter_a", "iter_b", "note"]
    write_rows(args.out / f"round_trip_{cfg.regime}.csv", [head] + rows)
    for r in rows:
        print(*r, sep="\t")


if __name__ == "__main__":
    main()
