"""Grid-convergence study for both forward solvers.

Transport: pure absorption with the plane-wave inflow exp(-sigma_a x.v), whose exact
solution is smooth, plus the constant-inflow case (kinked along corner
characteristics). Diffusion: manufactured sin(pi x) sin(pi y) and the cosh profile.

    python scripts/convergence.py --out out/convergence
"""

import argparse
import math
from pathlib import Path

import numpy as np

from qpat.diffusion import solve_linear_diffusion
from qpat.domain import (
    AngularQuadrature,
    BoundarySource,
    CoefficientSet,
    SpatialGrid,
    trace_from_function,
)
from qpat.io import write_rows
from qpat.transport import pure_absorption_solution, solve_linear_rte


def transport_errors(sizes, n_dirs, sigma):
    quad = AngularQuadrature(n_dirs)
    plane = lambda x, y, vx, vy: np.exp(-sigma * (x * vx + y * vy))  # noqa: E731
    rows = []
    for n in sizes:
        g = SpatialGrid(n, n)
        c = CoefficientSet.constant(g, sigma_a=sigma, sigma_s=0.0, sigma_b=0.0, c0=sigma,
                                    C0=sigma)
        for name, inflow in (("plane-wave", plane), ("constant", 1.0)):
            src = (BoundarySource.from_function(g, quad, plane) if callable(inflow)
                   else BoundarySource.constant(g, quad, inflow))
            u, _ = solve_linear_rte(c, src)
            err = np.abs(u - pure_absorption_solution(c, inflow, quad)).max()
            rows.append(("transport", name, n, float(err)))
    return rows


def diffusion_errors(sizes):
    rows = []
    for n in sizes:
        g = SpatialGrid(n, n)
        c = CoefficientSet.constant(g, sigma_a=1.0, gamma=1.0, c0=1.0, C0=1.0)
        X, Y = g.centers()
        exact = np.sin(np.pi * X) * np.sin(np.pi * Y)
        u, _ = solve_linear_diffusion(c, np.zeros(g.n_faces), S=(2 * np.pi ** 2 + 1) * exact)
        rows.append(("diffusion", "manufactured", n, float(np.abs(u - exact).max())))
        prof = lambda x, y: np.cosh(x - 0.5) / np.cosh(0.5)  # noqa: E731
        u, _ = solve_linear_diffusion(c, trace_from_function(g, prof))
        rows.append(("diffusion", "cosh", n, float(np.abs(u - prof(X, Y)).max())))
    return rows


def with_orders(rows):
    out, last = [], {}
    for regime, case, n, err in rows:
        prev = last.get((regime, case))
        order = math.log(prev[1] / err) / math.log(n / prev[0]) if prev else float("nan")
        last[(regime, case)] = (n, err)
        out.append([regime, case, n, f"{err:.6e}", f"{order:.4f}"])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--n-dirs", type=int, default=16)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--out", type=Path, default=Path("out/convergence"))
    args = ap.parse_args()
    rows = with_orders(transport_errors(args.sizes, args.n_dirs, args.sigma)
                       + diffusion_errors(args.sizes))
    write_rows(args.out / "convergence.csv", [["regime", "case", "n", "linf_error", "order"]]
               + rows)
    for r in rows:
        print(*r, sep="\t")


if __name__ == "__main__":
    main()
