"""Batch front end: solve, check, verify, export.

Exit codes: 0 success, 1 a requested check or property failed, 2 config
error, 3 the solver did not converge (artifacts are still written from
the last good iterate).  STARCURV_SERIAL=1 forces fully serial execution
for reproducible test runs.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .export import (field_from_node_table, write_mesh, write_node_table,
                     write_report)
from .geometry import assemble
from .prescription import check_barriers, check_monotonicity, default_rho_samples
from .solver import NoConvergence, SolveReport, continuity_solve, residual
from .verify import run_all

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3


def _write_solution_artifacts(cfg: RunConfig, fieldv, report: SolveReport | None) -> None:
    state = assemble(cfg.model, fieldv)
    res = residual(cfg.model, fieldv, cfg.psi, cfg.k,
                   normalized=cfg.solver.use_normalized).values
    write_node_table(cfg.node_table_path, state, res)
    write_mesh(cfg.mesh_path, cfg.grid, fieldv.values)
    mapping = {
        "K": cfg.model.K,
        "k": cfg.k,
        "n_theta": cfg.grid.n_theta,
        "n_phi": cfg.grid.n_phi,
        "psi_family": cfg.psi.family,
    }
    if report is not None:
        mapping.update(report.summary())
        if report.message:
            mapping["message"] = report.message
    else:
        # re-export from a node table: solver history is not available
        mapping.update({
            "residual_inf": float(np.abs(res).max()),
            "rho_min": float(fieldv.values.min()),
            "rho_max": float(fieldv.values.max()),
            "grad_inf": float(np.sqrt(state.jet.grad_sq.max())),
            "kappa_max": float(np.maximum(np.abs(state.kappa1),
                                          np.abs(state.kappa2)).max()),
            "u_min": float(state.u.min()),
            "source": "node_table",
        })
    write_report(cfg.report_path, mapping)


def cmd_solve(cfg: RunConfig) -> int:
    try:
        fieldv, report = continuity_solve(cfg.model, cfg.grid, cfg.psi, cfg.k, cfg.solver)
    except NoConvergence as exc:
        if exc.field is not None:
            _write_solution_artifacts(cfg, exc.field, exc.report)
        print(f"solve: no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    _write_solution_artifacts(cfg, fieldv, report)
    print(f"solve: converged in {report.iterations} iterations, "
          f"residual_inf = {report.residual_inf:.3e}")
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    mapping = {"psi_family": cfg.psi.family, "K": cfg.model.K, "k": cfg.k}
    all_ok = True
    ran_any = False
    if cfg.check_barriers:
        if cfg.barriers is None:
            raise ConfigError("barrier check requested without barriers.R1/R2")
        rep = check_barriers(cfg.psi, cfg.model, cfg.barriers[0], cfg.barriers[1],
                             cfg.grid.n_theta, cfg.grid.n_phi)
        mapping.update({
            "R1": rep.R1, "R2": rep.R2,
            "barrier_low_ok": rep.barrier_low_ok,
            "barrier_high_ok": rep.barrier_high_ok,
            "barrier_low_margin": rep.barrier_low_margin,
            "barrier_high_margin": rep.barrier_high_margin,
            "barrier_samples": rep.barrier_samples,
        })
        all_ok = all_ok and rep.barrier_low_ok and rep.barrier_high_ok
        ran_any = True
    if cfg.check_monotonicity:
        samples = None
        if cfg.check_rho_lo is not None and cfg.check_rho_hi is not None:
            samples = np.linspace(cfg.check_rho_lo, cfg.check_rho_hi, cfg.check_samples)
        elif cfg.barriers is not None:
            samples = np.linspace(cfg.barriers[0], cfg.barriers[1], cfg.check_samples)
        else:
            samples = default_rho_samples(cfg.model, cfg.check_samples)
        rep = check_monotonicity(cfg.psi, cfg.model, rho_samples=samples, tol=cfg.check_tol)
        mapping.update({
            "monotone_ok": rep.monotone_ok,
            "monotone_max_derivative": rep.monotone_max_derivative,
            "monotone_tol": rep.monotone_tol,
            "monotone_samples": rep.monotone_samples,
        })
        all_ok = all_ok and rep.monotone_ok
        ran_any = True
    if not ran_any:
        raise ConfigError("check: nothing requested "
                          "(enable check.barriers or check.monotonicity)")
    mapping["all_ok"] = all_ok
    write_report(cfg.report_path, mapping)
    for key, value in mapping.items():
        print(f"{key} = {value}")
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def cmd_verify(cfg: RunConfig) -> int:
    results = run_all(cfg.grid.n_theta, cfg.grid.n_phi,
                      flip_christoffel=cfg.flip_christoffel)
    mapping = {}
    for r in results:
        mapping[r.name] = "pass" if r.ok else "fail"
        mapping[f"{r.name}_value"] = r.value
    all_ok = all(r.ok for r in results)
    mapping["all"] = "pass" if all_ok else "fail"
    write_report(cfg.report_path, mapping)
    for r in results:
        print(f"{r.name} = {'pass' if r.ok else 'fail'} ({r.value})")
    print(f"all = {'pass' if all_ok else 'fail'}")
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def cmd_export(cfg: RunConfig) -> int:
    try:
        fieldv = field_from_node_table(cfg.node_table_path, cfg.grid)
    except (OSError, ValueError) as exc:
        print(f"export: cannot load solution from {cfg.node_table_path}: {exc}",
              file=sys.stderr)
        return EXIT_CONFIG
    _write_solution_artifacts(cfg, fieldv, None)
    print(f"export: wrote {cfg.node_table_path}, {cfg.mesh_path}, {cfg.report_path}")
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "check": cmd_check,
    "verify": cmd_verify,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="starcurv",
        description="Prescribed-curvature workbench for starshaped radial graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("solve", "run the continuation solver and write artifacts"),
            ("check", "evaluate the solvability-condition checkers"),
            ("verify", "run the discrete property suites"),
            ("export", "re-export artifacts from an existing node table")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a key = value run configuration")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
