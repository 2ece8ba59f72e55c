"""Misspecification sweep: error of (sigma_a, sigma_b) against the size of the
perturbation of sigma_s (transport) or gamma (diffusion).

    QPAT_THREADS=4 python scripts/uq_sweep.py --config configs/diffusion.cfg
"""

import argparse
from pathlib import Path

from qpat.config import build_coefficients, build_grid, build_kernel, build_quadrature
from qpat.config import build_source, load_config
from qpat.io import write_report, write_rows
from qpat.uq import uq_diffusion_sweep, uq_transport_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--eta", type=float, nargs="+", default=None)
    ap.add_argument("--out", type=Path, default=Path("out/uq"))
    args = ap.parse_args()
    cfg = load_config(args.config)
    etas = args.eta if args.eta is not None else cfg.eta_list
    grid = build_grid(cfg)
    c = build_coefficients(cfg, grid)
    if cfg.regime == "transport":
        quad = build_quadrature(cfg)
        res = uq_transport_sweep(c, build_source(cfg, grid, quad), etas,
                                 kernel=build_kernel(cfg, quad))
    else:
        res = uq_diffusion_sweep(c, build_source(cfg, grid), etas, p=cfg.uq_p)
    write_rows(args.out / f"uq_{cfg.regime}.csv", res.csv_rows())
    write_report(args.out / f"uq_{cfg.regime}.txt", res.summary())
    for k, v in res.summary().items():
        print(f"{k} = {v}")


if __name__ == "__main__":
    main()
