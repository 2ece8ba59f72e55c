"""Command-line pipeline: ``qpat --config run.cfg --cmd <name> [--out DIR] [--override k=v]``.

Exit status 0 on success, 2 when a precondition fails (bad config, invalid
coefficients, data too large, admissibility), 3 when an iteration diverges.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .config import (
    ExperimentConfig,
    build_coefficients,
    build_grid,
    build_kernel,
    build_quadrature,
    build_source,
    load_config,
)
from .data import internal_data, linearized_data
from .diffusion import operator_for, solve_linear_diffusion, solve_semilinear_diffusion
from .domain import validate_coefficients, velocity_average
from .errors import ConfigError, DivergenceError, PreconditionError, QpatError
from .linearization import linearize, verify_derivatives
from .reconstruction import (
    certify_admissibility,
    diffusion_stability_constant,
    reconstruct_sigma_a_diffusion,
    reconstruct_sigma_a_transport,
    reconstruct_sigma_b_diffusion,
    reconstruct_sigma_b_transport,
    stability_study,
)
from .transport import solve_linear_rte, solve_semilinear_rte
from .uq import uq_diffusion_sweep, uq_transport_sweep

COMMANDS = ("forward-transport", "forward-diffusion", "linearize", "make-data", "certify",
            "recon-sigma-a", "recon-sigma-b", "uq-sweep", "verify-derivatives")
EXIT_OK, EXIT_PRECONDITION, EXIT_DIVERGENCE = 0, 2, 3


class Context:
    """Objects built once from the config."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.grid = build_grid(cfg)
        self.transport = cfg.regime == "transport"
        self.quad = build_quadrature(cfg) if self.transport else None
        self.kernel = build_kernel(cfg, self.quad) if self.transport else None
        self.c = build_coefficients(cfg, self.grid)
        self.g = build_source(cfg, self.grid, self.quad)

    def scaled_source(self):
        a = self.cfg.amplitude
        return self.g.scaled(a) if self.transport else a * self.g

    def field(self, name, values):
        io.write_field(self.out / f"{name}.qpf", values)

    def report(self, name, items, title=None):
        io.write_report(self.out / f"{name}.txt", items, title)

    def data(self):
        bundle = linearize(self.c, self.g, kernel=self.kernel)
        d = linearized_data(self.c, bundle)
        if self.cfg.noise > 0:
            d = d.with_noise(self.cfg.noise, self.cfg.seed)
        return d, bundle


def _require(ctx, regime):
    if ctx.cfg.regime != regime:
        raise ConfigError(f"command needs regime = {regime}, config has {ctx.cfg.regime}")


def cmd_forward_transport(ctx: Context):
    _require(ctx, "transport")
    cfg = ctx.cfg
    g = ctx.scaled_source()
    u, rep = solve_semilinear_rte(ctx.c, g, tol=cfg.tol, max_iter=cfg.max_iter,
                                  kernel=ctx.kernel, inner_max_iter=cfg.source_max_iter)
    u0, _ = solve_linear_rte(ctx.c, g, tol=1e-3 * cfg.tol, max_iter=cfg.source_max_iter,
                             kernel=ctx.kernel)
    ctx.field("u", u)
    ctx.field("u_linear", u0)
    ctx.field("mean_u", velocity_average(u, ctx.quad))
    ctx.field("H", internal_data(ctx.c, u, g))
    ctx.report("forward", rep.as_dict(), "semilinear transport solve")


def cmd_forward_diffusion(ctx: Context):
    _require(ctx, "diffusion")
    cfg = ctx.cfg
    g = ctx.scaled_source()
    u, rep = solve_semilinear_diffusion(ctx.c, g, tol=cfg.tol, max_iter=cfg.max_iter)
    u0, _ = solve_linear_diffusion(ctx.c, g)
    ctx.field("u", u)
    ctx.field("u_linear", u0)
    ctx.field("H", internal_data(ctx.c, u, g))
    items = rep.as_dict()
    items.update(operator_for(ctx.c).diagnostics())
    ctx.report("forward", items, "semilinear diffusion solve")


def cmd_linearize(ctx: Context):
    b = linearize(ctx.c, ctx.g, kernel=ctx.kernel)
    ctx.field("u1", b.u1)
    ctx.field("u2", b.u2)
    if ctx.transport:
        ctx.field("mean_u1", b.mean_u1)
        ctx.field("mean_u2", b.mean_u2)
    ctx.report("linearize", {"regime": b.regime, "max_u1": float(b.u1.max()),
                             "min_u1": float(b.u1.min()), "max_u2": float(b.u2.max()),
                             "min_u2": float(b.u2.min())})


def cmd_make_data(ctx: Context):
    d, _ = ctx.data()
    g = ctx.scaled_source()
    if ctx.transport:
        u, _ = solve_semilinear_rte(ctx.c, g, tol=ctx.cfg.tol, kernel=ctx.kernel)
    else:
        u, _ = solve_semilinear_diffusion(ctx.c, g, tol=ctx.cfg.tol)
    ctx.field("H", internal_data(ctx.c, u, g))
    ctx.field("h1", d.h1)
    ctx.field("h2", d.h2)
    io.write_csv(ctx.out / "h1.csv", d.h1)
    io.write_csv(ctx.out / "h2.csv", d.h2)
    ctx.report("data", {"regime": d.regime, "source": d.source_id, "noise": ctx.cfg.noise,
                        "seed": ctx.cfg.seed, "amplitude": ctx.cfg.amplitude,
                        "min_h1": float(d.h1.min()), "max_h2": float(d.h2.max())})


def cmd_certify(ctx: Context):
    d, b = ctx.data()
    if not ctx.transport:
        C, C_plain = diffusion_stability_constant(ctx.c, u1=b.u1)
        ctx.report("certificate", {"regime": "diffusion", "stability_constant_weighted": C,
                                   "stability_constant": C_plain,
                                   "min_u1": float(b.u1.min())})
        return
    cert = certify_admissibility(ctx.c, ctx.g, d.h1, u1=b.u1, kernel=ctx.kernel)
    items = cert.as_dict()
    items["failures"] = "; ".join(cert.failures())
    ctx.report("certificate", items, "admissibility")
    if not cert.in_A2 or not cert.in_A1:
        raise PreconditionError("; ".join(cert.failures()))


def _recon_report(ctx, res, truth, extra=None):
    items = res.summary()
    items["relative_l2_error"] = res.error(truth, ctx.grid)
    items.update(extra or {})
    return items


def cmd_recon_sigma_a(ctx: Context):
    cfg = ctx.cfg
    d, _ = ctx.data()
    if ctx.transport:
        res = reconstruct_sigma_a_transport(ctx.c, ctx.g, d.h1, tol=cfg.recon_tol,
                                            max_iter=cfg.recon_max_iter, kernel=ctx.kernel)
    else:
        res = reconstruct_sigma_a_diffusion(ctx.c, ctx.g, d.h1, tol=cfg.recon_tol,
                                            max_iter=cfg.recon_max_iter)
        io.write_field(ctx.out / "sigma_a_boundary.qpf", res.extras["boundary_trace"][:, None])
    ctx.field("sigma_a", res.field)
    ctx.report("recon_sigma_a", _recon_report(ctx, res, ctx.c.sigma_a))


def cmd_recon_sigma_b(ctx: Context):
    cfg = ctx.cfg
    d, b = ctx.data()
    if ctx.transport:
        res = reconstruct_sigma_b_transport(ctx.c, ctx.g, d.h2, tol=cfg.recon_tol,
                                            max_iter=cfg.recon_max_iter, kernel=ctx.kernel,
                                            require_admissible=cfg.require_admissible,
                                            u1=b.u1)
        extra = {"Pi": res.certificate.Pi, "in_A1": res.certificate.in_A1,
                 "in_A2": res.certificate.in_A2}
    else:
        res = reconstruct_sigma_b_diffusion(ctx.c, ctx.g, d.h2, u1=b.u1)
        ctx.field("psi", res.extras["psi"])
        extra = {}
    ctx.field("sigma_b", res.field)
    if cfg.stability_pairs > 0:
        checks = stability_study(ctx.c, ctx.g, n=cfg.stability_pairs,
                                 amplitude=cfg.stability_amplitude, seed=cfg.seed, p=cfg.uq_p,
                                 kernel=ctx.kernel)
        rows = [["pair", "form", "lhs", "constant", "data_norm", "rhs", "holds"]]
        for i, pair in enumerate(checks):
            for chk in pair:
                rows.append([i, chk.label, repr(chk.lhs), repr(chk.constant),
                             repr(chk.data_norm), repr(chk.rhs), chk.holds])
        io.write_rows(ctx.out / "stability.csv", rows)
        extra["stability_pairs"] = len(checks)
        extra["stability_holds"] = all(c.holds for pair in checks for c in pair)
    ctx.report("recon_sigma_b", _recon_report(ctx, res, ctx.c.sigma_b, extra))


def cmd_uq_sweep(ctx: Context):
    cfg = ctx.cfg
    if ctx.transport:
        res = uq_transport_sweep(ctx.c, ctx.g, cfg.eta_list, kernel=ctx.kernel,
                                 tol=cfg.recon_tol)
    else:
        res = uq_diffusion_sweep(ctx.c, ctx.g, cfg.eta_list, p=cfg.uq_p, tol=cfg.recon_tol)
    io.write_rows(ctx.out / "uq.csv", res.csv_rows())
    ctx.report("uq_summary", res.summary(), "uncertainty sweep")


def cmd_verify_derivatives(ctx: Context):
    rep = verify_derivatives(ctx.c, ctx.g, ctx.cfg.eps_list, kernel=ctx.kernel)
    ctx.report("derivatives", rep.as_dict())
    if not rep.ok:
        raise PreconditionError(
            "derivative check: Richardson ratios outside [1.5, 2.5] (eps not in the "
            "asymptotic range)")


HANDLERS = {
    "forward-transport": cmd_forward_transport,
    "forward-diffusion": cmd_forward_diffusion,
    "linearize": cmd_linearize,
    "make-data": cmd_make_data,
    "certify": cmd_certify,
    "recon-sigma-a": cmd_recon_sigma_a,
    "recon-sigma-b": cmd_recon_sigma_b,
    "uq-sweep": cmd_uq_sweep,
    "verify-derivatives": cmd_verify_derivatives,
}


def run_pipeline(cmd, cfg: ExperimentConfig, out=None, stream=sys.stderr):
    """Run one command, write artifacts and ``manifest.txt``; return the exit status."""
    if cmd not in HANDLERS:
        print(f"unknown command {cmd!r}; choose from {', '.join(COMMANDS)}", file=stream)
        return EXIT_PRECONDITION
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    status, message = EXIT_OK, "ok"
    try:
        ctx = Context(cfg, out)
        validate_coefficients(ctx.c, strict=False)
        HANDLERS[cmd](ctx)
    except DivergenceError as exc:
        status, message = EXIT_DIVERGENCE, f"divergence: {exc}"
    except (PreconditionError, ValueError, QpatError) as exc:
        status, message = EXIT_PRECONDITION, f"precondition: {exc}"
    io.write_report(out / "status.txt", {"command": cmd, "exit": status, "message": message})
    io.write_manifest(out)
    if status:
        print(message, file=stream)
    return status


def main(argv=None):
    ap = argparse.ArgumentParser(prog="qpat", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="key = value config file")
    ap.add_argument("--cmd", required=True, choices=COMMANDS)
    ap.add_argument("--out", default=None, help="output directory (default: config 'out')")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key (repeatable)")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, overrides=args.override)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    out = args.out
    if out is None:
        p = Path(cfg.out)
        out = p if p.is_absolute() else Path(args.config).parent / p
    return run_pipeline(args.cmd, cfg, out)


if __name__ == "__main__":
    sys.exit(main())

