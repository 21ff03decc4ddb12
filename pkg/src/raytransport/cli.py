"""Configuration-driven experiment runner.

Usage: ``raytransport run CONFIG [--workers N] [--allow-unconverged]``.
The subcommand is the ``run.command`` key of the config.  Exit codes:
0 success, 2 config error, 3 numerical failure, 4 non-convergence (unless
``--allow-unconverged``).  The environment variable ``RAYTRANSPORT_OUTPUT``
overrides the configured output directory.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import exports
from .config import ExperimentConfig, load_config
from .errors import ConfigError, NonConvergenceError, NumericalError, TraceLimitError
from .geodesic import IntegratorConfig, angle_phase_point, trace
from .phasegrid import build_grid, classify_boundary
from .refractive import coercivity_margin, parse_model
from .solve import assemble, discrete_coercivity, solve_dynamic, solve_static
from .tensorfield import parse_field
from .transport import (
    QuadratureConfig,
    dynamic_boundary_table,
    interior_solution_grid,
    parse_attenuation,
)
from .verify import (
    calibrate_identity_convention,
    check_fiber_identity,
    epsilon_sweep,
    standard_fiber_functions,
)

IDENTITY_POINTS = [(0.2, 0.1, -0.3), (-0.4, 0.25, 0.1), (0.0, 0.0, 0.5)]


def _setup(cfg: ExperimentConfig):
    try:
        model = parse_model(cfg.model_spec, dim=cfg.dim)
        att = parse_attenuation(cfg.alpha_spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    q = QuadratureConfig(rule=cfg.quad_rule, step=cfg.quad_step)
    icfg = IntegratorConfig(step=cfg.int_step, max_steps=cfg.max_steps, boundary_tol=cfg.boundary_tol)
    return model, att, q, icfg


def _field(cfg: ExperimentConfig):
    try:
        return parse_field(cfg.field_spec, dim=cfg.dim, switch_on=cfg.switch_on)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _outdir(cfg: ExperimentConfig) -> str:
    out = os.environ.get("RAYTRANSPORT_OUTPUT", cfg.output_dir)
    os.makedirs(out, exist_ok=True)
    return out


def _check_converged(reports, allow: bool):
    bad = [r for r in reports if not r.converged]
    if bad and not allow:
        raise NonConvergenceError(
            f"{len(bad)} solve(s) stopped at residual {max(r.final_residual for r in bad):.3e}"
        )


def _cmd_trace(cfg, args) -> int:
    model, _, _, icfg = _setup(cfg)
    if cfg.dim != 2:
        raise ConfigError("trace.x: the trace command is 2D")
    p = angle_phase_point(model, np.asarray(cfg.trace_x), cfg.trace_theta)
    path = trace(model, p, icfg)
    out = os.path.join(_outdir(cfg), "path.csv")
    exports.write_path_csv(path, out)
    print(
        f"trace: tau- = {path.tau_minus:.9g}, tau+ = {path.tau_plus:.9g}, "
        f"{len(path)} nodes, wrote {out}"
    )
    return 0


def _cmd_transform_table(cfg, args) -> int:
    model, att, q, icfg = _setup(cfg)
    f = _field(cfg)
    grid = build_grid(model, cfg.grid_i, cfg.grid_j, cfg.grid_k)
    mask = classify_boundary(grid, model)
    idx = mask.outflow_idx
    if f.time_dependent or f.switch_on:
        n_steps = int(np.floor(cfg.t_final / cfg.dt + 1e-9))
        times = [s * cfg.dt for s in range(n_steps + 1)]
    else:
        times = [0.0]
    table = dynamic_boundary_table(model, f, att, grid.x[idx], grid.xi[idx], times, q, icfg)
    rows = [
        (t, grid.phi[i], grid.theta[i], table[r, c])
        for r, t in enumerate(times)
        for c, i in enumerate(idx)
    ]
    out = os.path.join(_outdir(cfg), "table.csv")
    exports.write_rows_csv(out, ["t", "phi", "theta", "value"], rows)
    print(f"transform-table: {len(times)} time(s) x {idx.size} outflow nodes, wrote {out}")
    return 0


def _cmd_solve_static(cfg, args) -> int:
    model, att, q, icfg = _setup(cfg)
    f = _field(cfg)
    grid = build_grid(model, cfg.grid_i, cfg.grid_j, cfg.grid_k)
    u_ref = interior_solution_grid(model, f, att, grid, q=q, cfg=icfg, workers=args.workers)
    eps = cfg.epsilons[0]
    system = assemble(grid, model, f, att, eps, u_ref)
    sol, rep = solve_static(
        system, tol=cfg.tol, max_iter=cfg.max_iter, method=cfg.method,
        preconditioner=cfg.preconditioner,
    )
    out = _outdir(cfg)
    exports.write_gridfunction_csv(sol, os.path.join(out, "solution.csv"))
    for k in range(grid.K):
        exports.write_pgm_slice(sol, k, os.path.join(out, f"solution_k{k:02d}.pgm"))
    print(
        f"solve-static: eps = {eps:g}, iters = {rep.iterations}, "
        f"residual = {rep.final_residual:.3e}, converged = {str(rep.converged).lower()}"
    )
    _check_converged([rep], args.allow_unconverged)
    return 0


def _cmd_solve_dynamic(cfg, args) -> int:
    model, att, q, icfg = _setup(cfg)
    f = _field(cfg)
    grid = build_grid(model, cfg.grid_i, cfg.grid_j, cfg.grid_k)
    mask = classify_boundary(grid, model)
    n_steps = int(np.floor(cfg.t_final / cfg.dt + 1e-9))
    times = [s * cfg.dt for s in range(n_steps + 1)]
    idx = mask.outflow_idx
    table = dynamic_boundary_table(model, f, att, grid.x[idx], grid.xi[idx], times, q, icfg)
    states, reports = solve_dynamic(
        grid, model, f, att, cfg.epsilons[0], cfg.dt, cfg.t_final, table,
        tol=cfg.tol, max_iter=cfg.max_iter, preconditioner=cfg.preconditioner,
        allow_unconverged=args.allow_unconverged,
    )
    out = _outdir(cfg)
    exports.write_gridfunction_csv(states[-1], os.path.join(out, "final.csv"))
    total_iters = sum(r.iterations for r in reports)
    print(
        f"solve-dynamic: {len(states) - 1} steps to t = {n_steps * cfg.dt:g}, "
        f"total iters = {total_iters}, max residual = {max(r.final_residual for r in reports):.3e}"
    )
    return 0


def _cmd_sweep(cfg, args) -> int:
    model, att, q, icfg = _setup(cfg)
    f = _field(cfg)
    grid = build_grid(model, cfg.grid_i, cfg.grid_j, cfg.grid_k)
    sweep = epsilon_sweep(
        model, f, att, grid, cfg.epsilons, q=q, cfg=icfg, tol=cfg.tol,
        max_iter=cfg.max_iter, preconditioner=cfg.preconditioner, method=cfg.method,
        workers=args.workers,
    )
    out = _outdir(cfg)
    exports.write_sweep_csv(sweep, os.path.join(out, "sweep.csv"))
    for e_idx, (field_fn, sol_fn) in enumerate(zip(sweep.error_fields, sweep.solutions)):
        if sol_fn is None:
            continue
        for k in range(grid.K):
            exports.write_pgm_slice(sol_fn, k, os.path.join(out, f"solution_eps{e_idx}_k{k:02d}.pgm"))
            exports.write_pgm_slice(field_fn, k, os.path.join(out, f"relerr_eps{e_idx}_k{k:02d}.pgm"))
    for eps, l2, linf, rep in zip(sweep.epsilons, sweep.l2, sweep.linf, sweep.reports):
        print(
            f"sweep: eps = {eps:g}, l2 = {l2:.6e}, linf = {linf:.6e}, "
            f"iters = {rep.iterations}, converged = {str(rep.converged).lower()}"
        )
    _check_converged(sweep.reports, args.allow_unconverged)
    return 0


def _cmd_check_prop1(cfg, args) -> int:
    model, _, _, _ = _setup(cfg)
    fns = standard_fiber_functions()
    convention, record = calibrate_identity_convention([model], fns, IDENTITY_POINTS)
    rows = []
    worst = 0.0
    for pi, x in enumerate(IDENTITY_POINTS):
        for fi, fn in enumerate(fns):
            chk = check_fiber_identity(model, fn, x, cfg.n_theta, cfg.n_phi, convention)
            worst = max(worst, chk.abs_diff / (1.0 + abs(chk.rhs)))
            rows.append((pi, fi, chk.lhs, chk.rhs, chk.abs_diff))
    out = os.path.join(_outdir(cfg), "prop1.csv")
    exports.write_rows_csv(out, ["point", "fn", "lhs", "rhs", "abs_diff"], rows)
    print(
        f"check-prop1: convention = {convention} "
        f"(refinement record {record[convention][0]:.3e} -> {record[convention][1]:.3e}), "
        f"worst scaled discrepancy = {worst:.3e}, wrote {out}"
    )
    return 0


def _cmd_coercivity(cfg, args) -> int:
    model, att, q, icfg = _setup(cfg)
    rep = coercivity_margin(model, att.alpha0)
    print(
        f"coercivity: sup_riemannian = {rep.sup_riemannian:.6g}, "
        f"sup_euclidean = {rep.sup_euclidean:.6g}, alpha0 = {rep.alpha0:g}, "
        f"satisfied={str(rep.satisfied).lower()}"
    )
    if cfg.dim == 2:
        f = _field(cfg)
        grid = build_grid(model, cfg.grid_i, cfg.grid_j, cfg.grid_k)
        system = assemble(grid, model, f, att, cfg.epsilons[0], np.zeros(grid.size))
        est = discrete_coercivity(system, probes=4, seed=cfg.seed)
        print(
            f"coercivity: discrete lambda_min = {est.lambda_min:.6g} "
            f"(eps = {cfg.epsilons[0]:g}, reliable = {str(est.reliable).lower()})"
        )
    return 0


_COMMANDS = {
    "trace": _cmd_trace,
    "transform-table": _cmd_transform_table,
    "solve-static": _cmd_solve_static,
    "solve-dynamic": _cmd_solve_dynamic,
    "sweep": _cmd_sweep,
    "check-prop1": _cmd_check_prop1,
    "coercivity": _cmd_coercivity,
}


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="raytransport", description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True)
    runp = sub.add_parser("run", help="execute the command named in a config file")
    runp.add_argument("config", help="path to the experiment config")
    runp.add_argument("--workers", type=int, default=None, help="override run.workers")
    runp.add_argument(
        "--allow-unconverged", action="store_true",
        help="report non-converged solves instead of failing with exit 4",
    )
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.workers is None:
            args.workers = cfg.workers
        code = _COMMANDS[cfg.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, TraceLimitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc} (pass --allow-unconverged to accept)", file=sys.stderr)
        return 4
    return code


def main() -> None:
    sys.exit(run())
