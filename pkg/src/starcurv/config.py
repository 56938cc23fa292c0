"""Flat key = value run configuration.

The format is one dotted key per line, `#` comments, blank lines ignored:

    model.K = 0
    grid.n_theta = 16
    grid.n_phi = 32
    problem.k = 2
    psi.family = round_target
    psi.r_bar = 1.5
    psi.m = 4
    barriers.R1 = 1.2
    barriers.R2 = 1.8
    outputs.node_table_path = nodes.csv

Unknown keys are rejected so typos fail loudly.  Output paths resolve
relative to the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .grid import GridError, SphereGrid, build_grid
from .prescription import Prescription, builtin
from .solver import SolverOptions
from .spaceform import SpaceFormModel, spaceform


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


_MODEL_KEYS = {"model.K", "model.domain_cap"}
_GRID_KEYS = {"grid.n_theta", "grid.n_phi"}
_PROBLEM_KEYS = {"problem.k"}
_PSI_KEYS = {"psi.family", "psi.c", "psi.m", "psi.r_bar", "psi.epsilon",
             "psi.base_family", "psi.axis_x", "psi.axis_y", "psi.axis_z"}
_SOLVER_KEYS = {"solver.newton_tol", "solver.max_newton_iters", "solver.damping",
                "solver.max_backtracks", "solver.homotopy_steps",
                "solver.min_homotopy_step", "solver.cone_margin", "solver.fd_step",
                "solver.normalized"}
_BARRIER_KEYS = {"barriers.R1", "barriers.R2"}
_CHECK_KEYS = {"check.barriers", "check.monotonicity", "check.rho_lo",
               "check.rho_hi", "check.samples", "check.tol"}
_OUTPUT_KEYS = {"outputs.node_table_path", "outputs.mesh_path", "outputs.report_path"}
_DEBUG_KEYS = {"debug.flip_christoffel"}
KNOWN_KEYS = (_MODEL_KEYS | _GRID_KEYS | _PROBLEM_KEYS | _PSI_KEYS | _SOLVER_KEYS
              | _BARRIER_KEYS | _CHECK_KEYS | _OUTPUT_KEYS | _DEBUG_KEYS)


@dataclass
class RunConfig:
    model: SpaceFormModel
    grid: SphereGrid
    k: int
    psi: Prescription
    solver: SolverOptions
    barriers: Optional[tuple] = None
    check_barriers: bool = False
    check_monotonicity: bool = True
    check_rho_lo: Optional[float] = None
    check_rho_hi: Optional[float] = None
    check_samples: int = 64
    check_tol: float = 1e-8
    node_table_path: Path = Path("nodes.csv")
    mesh_path: Path = Path("mesh.obj")
    report_path: Path = Path("report.txt")
    flip_christoffel: bool = False
    raw: dict = field(default_factory=dict)


def _parse_lines(text: str) -> dict:
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _get(entries: dict, key: str, coerce, default=None, required: bool = False):
    if key not in entries:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    raw = entries[key]
    try:
        return coerce(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r}: {exc}") from None


def _to_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {raw!r}")


def _build_psi(entries: dict, model: SpaceFormModel, k: int) -> Prescription:
    family = _get(entries, "psi.family", str, required=True)

    def family_params(fam: str) -> dict:
        if fam == "constant":
            return {"c": _get(entries, "psi.c", float, required=True)}
        if fam == "radial_power":
            return {"c": _get(entries, "psi.c", float, required=True),
                    "m": _get(entries, "psi.m", float, required=True)}
        if fam == "round_target":
            return {"r_bar": _get(entries, "psi.r_bar", float, required=True),
                    "m": _get(entries, "psi.m", float, required=True)}
        raise ConfigError(f"unknown prescription family {fam!r}")

    try:
        if family == "anisotropic":
            base_family = _get(entries, "psi.base_family", str, required=True)
            base = builtin(model, base_family, k=k, n=2, **family_params(base_family))
            axis = (_get(entries, "psi.axis_x", float, default=0.0),
                    _get(entries, "psi.axis_y", float, default=0.0),
                    _get(entries, "psi.axis_z", float, default=1.0))
            eps = _get(entries, "psi.epsilon", float, required=True)
            return builtin(model, "anisotropic", k=k, n=2,
                           base=base, epsilon=eps, axis=axis)
        return builtin(model, family, k=k, n=2, **family_params(family))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"prescription: {exc}") from None


def parse_config(path) -> RunConfig:
    """Load and validate a run configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    entries = _parse_lines(text)

    K = _get(entries, "model.K", int, required=True)
    cap = _get(entries, "model.domain_cap", float, default=50.0)
    try:
        model = spaceform(K, domain_cap=cap)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None

    n_theta = _get(entries, "grid.n_theta", int, required=True)
    n_phi = _get(entries, "grid.n_phi", int, required=True)
    try:
        grid = build_grid(n_theta, n_phi)
    except GridError as exc:
        raise ConfigError(f"grid: {exc}") from None

    k = _get(entries, "problem.k", int, default=2)
    if not 1 <= k <= 2:
        raise ConfigError(f"problem.k must be 1 or 2 for surface graphs, got {k}")

    psi = _build_psi(entries, model, k)

    solver_kwargs = {}
    for key, attr, coerce in (
            ("solver.newton_tol", "newton_tol", float),
            ("solver.max_newton_iters", "max_newton_iters", int),
            ("solver.damping", "damping", float),
            ("solver.max_backtracks", "max_backtracks", int),
            ("solver.homotopy_steps", "homotopy_steps", int),
            ("solver.min_homotopy_step", "min_homotopy_step", float),
            ("solver.cone_margin", "cone_margin", float),
            ("solver.fd_step", "fd_step", float),
            ("solver.normalized", "use_normalized", _to_bool)):
        if key in entries:
            solver_kwargs[attr] = _get(entries, key, coerce)
    try:
        opts = SolverOptions(**solver_kwargs)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None

    R1 = _get(entries, "barriers.R1", float)
    R2 = _get(entries, "barriers.R2", float)
    if (R1 is None) != (R2 is None):
        raise ConfigError("barriers.R1 and barriers.R2 must be given together")
    barriers = None if R1 is None else (R1, R2)
    if barriers is not None and not (0.0 < R1 < R2 < model.a):
        raise ConfigError(f"barriers must satisfy 0 < R1 < R2 < a, got ({R1}, {R2})")

    check_barriers = _get(entries, "check.barriers", _to_bool, default=barriers is not None)
    if check_barriers and barriers is None:
        raise ConfigError("check.barriers requested but barriers.R1/R2 are missing")

    base_dir = path.resolve().parent

    def out_path(key, default):
        value = _get(entries, key, str, default=default)
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    return RunConfig(
        model=model, grid=grid, k=k, psi=psi, solver=opts, barriers=barriers,
        check_barriers=check_barriers,
        check_monotonicity=_get(entries, "check.monotonicity", _to_bool, default=True),
        check_rho_lo=_get(entries, "check.rho_lo", float),
        check_rho_hi=_get(entries, "check.rho_hi", float),
        check_samples=_get(entries, "check.samples", int, default=64),
        check_tol=_get(entries, "check.tol", float, default=1e-8),
        node_table_path=out_path("outputs.node_table_path", "nodes.csv"),
        mesh_path=out_path("outputs.mesh_path", "mesh.obj"),
        report_path=out_path("outputs.report_path", "report.txt"),
        flip_christoffel=_get(entries, "debug.flip_christoffel", _to_bool, default=False),
        raw=entries)
