"""Damped Newton and homotopy continuation for the curvature equation.

The discrete equation is, per node, sigma_k of the principal curvatures
minus the prescription evaluated at (z, rho, nu).  The Jacobian is
assembled by central finite differences with stencil coloring: a node's
residual reads rho only inside the 3x3 stencil footprint (mapped across
poles), so columns that never share an affected row can be perturbed
together.  Every accepted Newton iterate must stay strictly inside the
radial domain and keep the principal curvatures inside the degree-k
positivity cone with a configurable margin; the report carries the
a priori bound monitors (radius range, gradient sup, largest curvature,
support minimum, cone margin) for every accepted iterate.

Deterministic: given identical inputs and options the iterate sequence is
reproducible; setting STARCURV_SERIAL=1 additionally forces the Jacobian
color sweeps onto the calling thread.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .geometry import GeometryError, GeometryState, assemble
from .grid import ScalarField, SphereGrid, constant_field
from .prescription import Prescription, builtin
from .spaceform import DomainError, SpaceFormModel
from .symfunc import sigma, sigma_all

SERIAL_ENV = "STARCURV_SERIAL"

# dense fallback threshold for the linear solve
_DENSE_FALLBACK_NODES = 3000


class NoConvergence(RuntimeError):
    """Solver budget exhausted; carries the last good field and report."""

    def __init__(self, message: str, field: Optional[ScalarField] = None,
                 report: Optional["SolveReport"] = None):
        super().__init__(message)
        self.field = field
        self.report = report


class ConeBreach(NoConvergence):
    """No step length keeps the iterate admissible: left the solvable regime."""


@dataclass
class SolverOptions:
    newton_tol: float = 1e-10
    max_newton_iters: int = 50
    damping: float = 0.5
    max_backtracks: int = 30
    homotopy_steps: int = 10
    min_homotopy_step: float = 1e-4
    cone_margin: float = 1e-10
    fd_step: float = 1e-6
    use_normalized: bool = False
    check_jacobian: bool = False

    def __post_init__(self):
        if not 0.0 < self.newton_tol < 1.0:
            raise ValueError("newton_tol must be in (0, 1)")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must be in (0, 1)")
        for name in ("max_newton_iters", "max_backtracks", "homotopy_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("min_homotopy_step", "cone_margin", "fd_step"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SolveReport:
    """Convergence trace plus the a priori bound monitors.

    The monitor lists hold one entry per accepted iterate (the seed
    counts as iterate zero).  homotopy_t has one entry per accepted
    continuation stage.
    """

    converged: bool = False
    iterations: int = 0
    message: str = ""
    residual_trace: list = field(default_factory=list)
    homotopy_t: list = field(default_factory=list)
    rho_min: list = field(default_factory=list)
    rho_max: list = field(default_factory=list)
    grad_inf: list = field(default_factory=list)
    kappa_max: list = field(default_factory=list)
    u_min: list = field(default_factory=list)
    cone_margin: list = field(default_factory=list)
    jacobian_checks: list = field(default_factory=list)

    @property
    def residual_inf(self) -> float:
        return self.residual_trace[-1] if self.residual_trace else math.inf

    @property
    def homotopy_t_final(self) -> float:
        return self.homotopy_t[-1] if self.homotopy_t else 1.0

    @property
    def final_admissible(self) -> bool:
        return bool(self.cone_margin) and self.cone_margin[-1] > 0.0

    def record(self, rnorm: float, state: GeometryState, margin: float):
        self.residual_trace.append(float(rnorm))
        self.rho_min.append(float(state.rho.min()))
        self.rho_max.append(float(state.rho.max()))
        self.grad_inf.append(float(np.sqrt(state.jet.grad_sq.max())))
        kmax = np.maximum(np.abs(state.kappa1), np.abs(state.kappa2)).max()
        self.kappa_max.append(float(kmax))
        self.u_min.append(float(state.u.min()))
        self.cone_margin.append(float(margin))

    def absorb(self, other: "SolveReport"):
        """Append another solve's accepted-iterate traces (homotopy stages)."""
        self.iterations += other.iterations
        for name in ("residual_trace", "rho_min", "rho_max", "grad_inf",
                     "kappa_max", "u_min", "cone_margin", "jacobian_checks"):
            getattr(self, name).extend(getattr(other, name))

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_inf": self.residual_inf,
            "rho_min": self.rho_min[-1] if self.rho_min else math.nan,
            "rho_max": self.rho_max[-1] if self.rho_max else math.nan,
            "grad_inf": self.grad_inf[-1] if self.grad_inf else math.nan,
            "kappa_max": self.kappa_max[-1] if self.kappa_max else math.nan,
            "u_min": self.u_min[-1] if self.u_min else math.nan,
            "cone_margin": self.cone_margin[-1] if self.cone_margin else math.nan,
            "homotopy_t_final": self.homotopy_t_final,
        }


# ---------------------------------------------------------------------------
# residual

def _evaluate(model: SpaceFormModel, fieldv: ScalarField, psi: Optional[Prescription],
              k: int, normalized: bool = False):
    """Geometry, residual values, and cone margin in one pass."""
    state = assemble(model, fieldv)
    lam = state.kappa
    sigs = sigma_all(lam, k)
    margin = float(sigs.min())
    sk = sigs[..., -1]
    if psi is None:
        psival = 0.0
    else:
        z, _, _ = state.grid.unit_vectors()
        psival = np.asarray(psi(z, state.rho, state.nu), dtype=float)
    if normalized:
        if k != 2:
            raise ValueError("normalized residual is defined for degree k = 2 only")
        cnk = comb(psi.n if psi is not None else lam.shape[-1], 2)
        if margin <= 0.0:
            raise GeometryError("normalized residual requested outside the cone")
        res = np.sqrt(sk / cnk) - np.sqrt(np.maximum(psival, 0.0) / cnk)
    else:
        res = sk - psival
    return state, res, margin


def residual(model: SpaceFormModel, fieldv: ScalarField, psi: Optional[Prescription],
             k: int, normalized: bool = False) -> ScalarField:
    """Per-node defect sigma_k(kappa) - psi(z, rho, nu).

    psi=None evaluates the pure curvature part (used by scaling tests).
    The normalized flag switches to the concave square-root form, which
    has the same zero set on the admissibility cone.
    """
    _, res, _ = _evaluate(model, fieldv, psi, k, normalized)
    return ScalarField(fieldv.grid, res)


# ---------------------------------------------------------------------------
# Jacobian by colored finite differences

def _stencil_deps(nt: int, nphi: int, i: int, j: int):
    """Column ids read by the residual at row (i, j): the 3x3 footprint
    with cross-pole ghost rows mapped back to interior nodes."""
    half = nphi // 2
    for di in (-1, 0, 1):
        ii = i + di
        jshift = 0
        if ii == -1:
            ii, jshift = 0, half
        elif ii == nt:
            ii, jshift = nt - 1, half
        for dj in (-1, 0, 1):
            yield ii * nphi + (j + dj + jshift) % nphi


_coloring_cache: dict = {}


def _coloring(nt: int, nphi: int):
    """Greedy distance coloring of the columns.

    Two columns may share a color only if no residual row depends on both;
    colors are built by blocking the affected-row sets.  Returns, per
    color: the column ids, and parallel (rows, cols) index arrays listing
    every nonzero this color determines.
    """
    key = (nt, nphi)
    if key in _coloring_cache:
        return _coloring_cache[key]
    n = nt * nphi
    affected = [[] for _ in range(n)]
    for i in range(nt):
        for j in range(nphi):
            row = i * nphi + j
            for col in set(_stencil_deps(nt, nphi, i, j)):
                affected[col].append(row)
    blocked: list = []
    members: list = []
    for col in range(n):
        rows = affected[col]
        for cidx, block in enumerate(blocked):
            if not block.intersection(rows):
                block.update(rows)
                members[cidx].append(col)
                break
        else:
            blocked.append(set(rows))
            members.append([col])
    colors = []
    for cols in members:
        rows_flat = np.concatenate([np.asarray(affected[c], dtype=np.int64) for c in cols])
        cols_flat = np.concatenate([np.full(len(affected[c]), c, dtype=np.int64) for c in cols])
        colors.append((np.asarray(cols, dtype=np.int64), rows_flat, cols_flat))
    _coloring_cache[key] = colors
    return colors


def jacobian(model: SpaceFormModel, fieldv: ScalarField, psi: Optional[Prescription],
             k: int, opts: Optional[SolverOptions] = None) -> sp.csr_matrix:
    """Sparse residual Jacobian assembled color by color.

    Each color perturbs its columns simultaneously with per-column steps
    fd_step * (1 + |rho|) and reads the induced residual changes off the
    known sparsity pattern.
    """
    opts = opts or SolverOptions()
    g = fieldv.grid
    n = g.n_nodes
    base = fieldv.values.ravel()
    colors = _coloring(g.n_theta, g.n_phi)
    normalized = opts.use_normalized

    def sweep(color):
        cols, rows_flat, cols_flat = color
        eps = opts.fd_step * (1.0 + np.abs(base[cols]))
        pert = np.zeros(n)
        pert[cols] = eps
        fp = ScalarField(g, (base + pert).reshape(g.shape))
        fm = ScalarField(g, (base - pert).reshape(g.shape))
        rp = _evaluate(model, fp, psi, k, normalized)[1].ravel()
        rm = _evaluate(model, fm, psi, k, normalized)[1].ravel()
        eps_of = np.zeros(n)
        eps_of[cols] = eps
        vals = (rp[rows_flat] - rm[rows_flat]) / (2.0 * eps_of[cols_flat])
        return rows_flat, cols_flat, vals

    serial = os.environ.get(SERIAL_ENV, "") not in ("", "0")
    if serial or len(colors) <= 2:
        results = [sweep(c) for c in colors]
    else:
        with ThreadPoolExecutor(max_workers=min(8, len(colors))) as pool:
            results = list(pool.map(sweep, colors))

    rows = np.concatenate([r for r, _, _ in results])
    cols = np.concatenate([c for _, c, _ in results])
    vals = np.concatenate([v for _, _, v in results])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _linear_solve(J: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse factorization with one step of iterative refinement;
    dense fallback for small systems if the factorization degenerates."""
    n = J.shape[0]
    try:
        lu = splu(J.tocsc())
        x = lu.solve(rhs)
        x += lu.solve(rhs - J @ x)
        if np.all(np.isfinite(x)):
            return x
    except RuntimeError:
        pass
    if n <= _DENSE_FALLBACK_NODES:
        dense = J.toarray()
        x = np.linalg.solve(dense, rhs)
        x += np.linalg.solve(dense, rhs - dense @ x)
        if np.all(np.isfinite(x)):
            return x
    raise NoConvergence("linear solve failed: singular Jacobian")


# ---------------------------------------------------------------------------
# damped Newton

def _in_domain(model: SpaceFormModel, values: np.ndarray) -> bool:
    try:
        model.check_domain(values)
    except DomainError:
        return False
    return True


def newton_solve(model: SpaceFormModel, rho0: ScalarField, psi: Prescription,
                 k: int, opts: Optional[SolverOptions] = None,
                 report: Optional[SolveReport] = None):
    """Damped Newton iteration constrained to the admissibility cone.

    Backtracking accepts a step only when the candidate stays strictly
    inside the radial domain, keeps the curvatures inside the cone with
    margin >= cone_margin, and strictly decreases the residual sup norm.
    Raises ConeBreach when no step length is even admissible and
    NoConvergence when budgets run out; both carry the partial report.
    """
    opts = opts or SolverOptions()
    report = report if report is not None else SolveReport()
    fieldv = rho0
    state, res, margin = _evaluate(model, fieldv, psi, k, opts.use_normalized)
    if margin < opts.cone_margin:
        raise ConeBreach(
            f"seed is not admissible: cone margin {margin!r} < {opts.cone_margin!r}",
            field=fieldv, report=report)
    rnorm = float(np.abs(res).max())
    report.record(rnorm, state, margin)

    for _ in range(opts.max_newton_iters):
        if rnorm <= opts.newton_tol:
            report.converged = True
            report.message = "converged"
            return fieldv, report
        J = jacobian(model, fieldv, psi, k, opts)
        try:
            delta = _linear_solve(J, -res.ravel()).reshape(fieldv.grid.shape)
        except NoConvergence as exc:
            raise NoConvergence(str(exc), field=fieldv, report=report) from None

        alpha = 1.0
        accepted = False
        admissible_seen = False
        for _ in range(opts.max_backtracks + 1):
            cand = fieldv.values + alpha * delta
            if _in_domain(model, cand):
                cf = ScalarField(fieldv.grid, cand)
                try:
                    cstate, cres, cmargin = _evaluate(model, cf, psi, k, opts.use_normalized)
                except (GeometryError, DomainError):
                    cstate = None
                if cstate is not None and cmargin >= opts.cone_margin:
                    admissible_seen = True
                    cnorm = float(np.abs(cres).max())
                    if cnorm < rnorm:
                        fieldv, state, res, margin, rnorm = cf, cstate, cres, cmargin, cnorm
                        accepted = True
                        break
            alpha *= opts.damping
        if not accepted:
            if not admissible_seen:
                raise ConeBreach(
                    "no step length keeps the iterate admissible",
                    field=fieldv, report=report)
            raise NoConvergence(
                f"line search stalled at residual {rnorm!r}",
                field=fieldv, report=report)
        report.iterations += 1
        report.record(rnorm, state, margin)
        if opts.check_jacobian:
            report.jacobian_checks.append(
                _jacobian_consistency(model, fieldv, psi, k, opts))

    if rnorm <= opts.newton_tol:
        report.converged = True
        report.message = "converged"
        return fieldv, report
    raise NoConvergence(
        f"iteration budget exhausted at residual {rnorm!r}",
        field=fieldv, report=report)


def _jacobian_consistency(model: SpaceFormModel, fieldv: ScalarField,
                           psi: Optional[Prescription], k: int,
                           opts: SolverOptions) -> float:
    """Relative gap between the assembled Jacobian and a directional
    central difference of the residual, along a fixed smooth direction."""
    g = fieldv.grid
    tt, pp = g.mesh()
    v = np.cos(tt) + 0.5 * np.sin(tt) * np.cos(pp)
    J = jacobian(model, fieldv, psi, k, opts)
    eps = opts.fd_step
    rp = _evaluate(model, ScalarField(g, fieldv.values + eps * v), psi, k,
                   opts.use_normalized)[1]
    rm = _evaluate(model, ScalarField(g, fieldv.values - eps * v), psi, k,
                   opts.use_normalized)[1]
    dirfd = ((rp - rm) / (2.0 * eps)).ravel()
    jv = J @ v.ravel()
    return float(np.abs(jv - dirfd).max() / max(np.abs(jv).max(), 1e-30))


# ---------------------------------------------------------------------------
# homotopy continuation

def _radial_start(model: SpaceFormModel, grid: SphereGrid, psi: Prescription,
                  k: int) -> float:
    """Radius r0 whose centered sphere solves the radial problem at the
    target's mean scale: C(n,k) q(r0)^k = mean_z psi(z, r0, radial)."""
    z, _, _ = grid.unit_vectors()
    z = z.reshape(-1, 3)
    cnk = comb(psi.n, psi.k)

    def gap(r):
        vals = psi(z, np.full(len(z), r), z)
        return cnk * model.sphere_curvature(r) ** k - float(np.mean(vals))

    hi = model.a - 1e-6 if model.K == 1 else min(model.a * 0.98, 30.0)
    rs = np.geomspace(1e-3, hi, 240)
    prev_r, prev_g = rs[0], gap(rs[0])
    for r in rs[1:]:
        cur = gap(r)
        if prev_g == 0.0:
            return float(prev_r)
        if prev_g * cur < 0.0:
            return float(brentq(gap, prev_r, r, xtol=1e-14, rtol=8.9e-16))
        prev_r, prev_g = r, cur
    raise NoConvergence("no radial start radius: the radial problem "
                        "C(n,k) q(r)^k = mean(psi) has no root in the domain")


def continuity_solve(model: SpaceFormModel, grid: SphereGrid, psi_target: Prescription,
                     k: int, opts: Optional[SolverOptions] = None):
    """Homotopy continuation from an exactly solvable radial prescription.

    The start is the round-sphere-targeting family with exponent k + 2
    (strictly radially monotone) anchored at the radius solving the radial
    problem at the target's mean scale; the path is the convex blend with
    the target, marched with adaptive step halving and Newton correction.
    """
    opts = opts or SolverOptions()
    r0 = _radial_start(model, grid, psi_target, k)
    psi0 = builtin(model, "round_target", k=psi_target.k, n=psi_target.n,
                   r_bar=r0, m=k + 2)
    fieldv = constant_field(grid, r0)
    report = SolveReport()

    t = 0.0
    dt_base = 1.0 / opts.homotopy_steps
    dt = dt_base
    fieldv, sub = newton_solve(model, fieldv, psi0, k, opts)
    report.absorb(sub)
    report.homotopy_t.append(0.0)
    while t < 1.0:
        t_next = min(t + dt, 1.0)
        psi_t = psi0.blend(psi_target, t_next)
        try:
            cand, sub = newton_solve(model, fieldv, psi_t, k, opts)
        except NoConvergence:
            dt *= 0.5
            if dt < opts.min_homotopy_step:
                report.message = f"homotopy stalled at t = {t!r}"
                raise NoConvergence(report.message, field=fieldv, report=report) from None
            continue
        fieldv = cand
        t = t_next
        report.absorb(sub)
        report.homotopy_t.append(t)
        dt = min(dt * 2.0, dt_base)

    report.converged = True
    report.message = "converged"
    return fieldv, report


def uniqueness_probe(model: SpaceFormModel, grid: SphereGrid, psi: Prescription,
                     k: int, opts: Optional[SolverOptions] = None,
                     seeds=(0.8, 1.2)) -> float:
    """Max pairwise sup deviation of Newton solutions from radial seeds.

    Numerical evidence for uniqueness, not certification: each seed radius
    is solved independently and the solutions are compared."""
    opts = opts or SolverOptions()
    solutions = []
    for r in seeds:
        fieldv, _ = newton_solve(model, constant_field(grid, float(r)), psi, k, opts)
        solutions.append(fieldv.values)
    worst = 0.0
    for i in range(len(solutions)):
        for j in range(i + 1, len(solutions)):
            worst = max(worst, float(np.abs(solutions[i] - solutions[j]).max()))
    return worst
