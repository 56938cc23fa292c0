import math

import numpy as np
import pytest

from starcurv.grid import ScalarField, build_grid, constant_field, field_from_function
from starcurv.prescription import builtin
from starcurv.solver import (ConeBreach, NoConvergence, SolverOptions,
                             continuity_solve, jacobian, newton_solve,
                             residual, uniqueness_probe)
from starcurv.spaceform import spaceform

TIGHT = SolverOptions(newton_tol=1e-11)


def coth(x):
    return math.cosh(x) / math.sinh(x)


@pytest.fixture(scope="module")
def grid16():
    return build_grid(16, 32)


def test_residual_round_sphere_examples(grid16):
    m = spaceform(0)
    r = residual(m, constant_field(grid16, 1.0), builtin(m, "constant", c=1.0), 2)
    assert np.abs(r.values).max() < 1e-13
    r = residual(m, constant_field(grid16, 1.0), builtin(m, "constant", c=2.0), 2)
    assert np.abs(r.values + 1.0).max() < 1e-13
    mh = spaceform(-1)
    r = residual(mh, constant_field(grid16, 0.5),
                 builtin(mh, "constant", c=coth(0.5) ** 2), 2)
    assert np.abs(r.values).max() < 1e-12


def test_residual_degree_one(grid16):
    # mean curvature equation: sigma_1 of the round sphere is 2 q(r)
    m = spaceform(-1)
    r = residual(m, constant_field(grid16, 0.7),
                 builtin(m, "constant", c=2.0 * coth(0.7), k=1), 1)
    assert np.abs(r.values).max() < 1e-12


def test_normalized_residual_same_zero_set(grid16):
    m = spaceform(0)
    psi = builtin(m, "constant", c=1.0)
    raw = residual(m, constant_field(grid16, 1.0), psi, 2)
    nrm = residual(m, constant_field(grid16, 1.0), psi, 2, normalized=True)
    assert np.abs(raw.values).max() < 1e-13
    assert np.abs(nrm.values).max() < 1e-13
    with pytest.raises(ValueError):
        residual(m, constant_field(grid16, 1.0), builtin(m, "constant", c=1.0, k=1), 1,
                 normalized=True)


def test_jacobian_radial_direction(grid16):
    # on a round sphere, J applied to the all-ones field is the radial
    # derivative of the residual: d/dr [q(r)^2] = -2/r^3 for K=0, psi const
    m = spaceform(0)
    r = 1.3
    J = jacobian(m, constant_field(grid16, r), builtin(m, "constant", c=1.0), 2)
    ones = np.ones(grid16.n_nodes)
    assert np.abs(J @ ones - (-2.0 / r**3)).max() < 1e-4


def test_jacobian_directional_consistency(grid16):
    rng = np.random.default_rng(21)
    m = spaceform(0)
    tt, pp = grid16.mesh()
    vals = 1.2 * (1.0 + 0.03 * np.cos(tt) + 0.02 * np.sin(tt) * np.cos(pp))
    f = ScalarField(grid16, vals)
    base = builtin(m, "round_target", r_bar=1.2, m=4.0)
    psi = builtin(m, "anisotropic", base=base, epsilon=0.15, axis=(0.0, 0.0, 1.0))
    J = jacobian(m, f, psi, 2)
    for _ in range(3):
        v = rng.standard_normal(grid16.shape)
        eps = 1e-6
        rp = residual(m, ScalarField(grid16, vals + eps * v), psi, 2).values
        rm = residual(m, ScalarField(grid16, vals - eps * v), psi, 2).values
        dirfd = ((rp - rm) / (2 * eps)).ravel()
        jv = J @ v.ravel()
        assert np.abs(jv - dirfd).max() / np.abs(jv).max() < 1e-5


def test_jacobian_ignores_constant_psi_level(grid16):
    # a constant prescription contributes nothing to the Jacobian
    m = spaceform(0)
    f = field_from_function(grid16, lambda tt, pp: 1.0 + 0.05 * np.cos(tt))
    J1 = jacobian(m, f, builtin(m, "constant", c=1.0), 2)
    J2 = jacobian(m, f, builtin(m, "constant", c=2.0), 2)
    assert abs(J1 - J2).max() < 1e-8


def test_jacobian_sparsity(grid16):
    m = spaceform(0)
    J = jacobian(m, constant_field(grid16, 1.0), builtin(m, "constant", c=1.0), 2)
    per_row = np.diff(J.tocsr().indptr)
    assert per_row.max() <= 9


@pytest.mark.parametrize("K,r_star,seed", [(0, 1.0, 1.3), (-1, 0.5, 0.65), (1, 0.6, 0.78)])
def test_newton_round_sphere_recovery(K, r_star, seed, grid16):
    m = spaceform(K)
    psi = builtin(m, "constant", c=m.sphere_curvature(r_star) ** 2)
    fieldv, report = newton_solve(m, constant_field(grid16, seed), psi, 2, TIGHT)
    assert report.converged
    assert np.abs(fieldv.values - r_star).max() < 1e-8
    assert report.residual_inf < 1e-10
    # admissibility margin held at every accepted iterate
    assert all(mg >= TIGHT.cone_margin for mg in report.cone_margin)


def test_newton_rejects_inadmissible_seed(grid16):
    # a saddle-like seed with curvatures outside the degree-2 cone
    m = spaceform(0)
    f = field_from_function(grid16, lambda tt, pp: 1.0 + 0.9 * np.sin(tt) * np.cos(2 * pp))
    psi = builtin(m, "constant", c=1.0)
    with pytest.raises(ConeBreach):
        newton_solve(m, f, psi, 2, TIGHT)


def test_newton_budget_exhaustion_returns_report(grid16):
    m = spaceform(0)
    psi = builtin(m, "constant", c=1.0)
    opts = SolverOptions(newton_tol=1e-11, max_newton_iters=1)
    with pytest.raises(NoConvergence) as info:
        newton_solve(m, constant_field(grid16, 1.9), psi, 2, opts)
    assert info.value.report is not None
    assert info.value.field is not None
    assert not info.value.report.converged


def test_newton_monitors_recorded(grid16):
    m = spaceform(0)
    psi = builtin(m, "constant", c=1.0)
    _, report = newton_solve(m, constant_field(grid16, 1.3), psi, 2, TIGHT)
    n = len(report.residual_trace)
    assert n == report.iterations + 1
    for name in ("rho_min", "rho_max", "grad_inf", "kappa_max", "u_min", "cone_margin"):
        assert len(getattr(report, name)) == n
    assert report.final_admissible
    assert min(report.u_min) > 0.0
    assert all(np.isfinite(report.kappa_max))


def test_residual_rotation_equivariance(grid16):
    m = spaceform(0)
    psi = builtin(m, "radial_power", c=1.0, m=4.0)
    f = field_from_function(grid16, lambda tt, pp: 1.0 + 0.1 * np.cos(tt)
                            + 0.04 * np.sin(tt) * np.sin(pp))
    shift = 8
    r0 = residual(m, f, psi, 2).values
    r1 = residual(m, ScalarField(grid16, np.roll(f.values, shift, axis=1)), psi, 2).values
    assert np.array_equal(np.roll(r0, shift, axis=1), r1)


def test_sigma2_scaling_law(grid16):
    # K=0: curvatures scale as 1/c, so sigma_2 scales as 1/c^2
    m = spaceform(0)
    f = field_from_function(grid16, lambda tt, pp: 1.0 + 0.06 * np.sin(tt) * np.cos(pp))
    c = 2.3
    s = residual(m, f, None, 2).values
    sc = residual(m, ScalarField(grid16, c * f.values), None, 2).values
    assert np.abs(sc - s / c**2).max() < 1e-11 * np.abs(s).max()


def test_continuity_solve_constant_target(grid16):
    m = spaceform(0)
    fieldv, report = continuity_solve(m, grid16, builtin(m, "constant", c=1.0), 2, TIGHT)
    assert report.converged
    assert report.homotopy_t_final == 1.0
    assert np.abs(fieldv.values - 1.0).max() < 1e-8
    assert report.homotopy_t[0] == 0.0


def test_continuity_solve_round_target_family(grid16):
    m = spaceform(0)
    psi = builtin(m, "round_target", r_bar=1.5, m=4.0)
    fieldv, report = continuity_solve(m, grid16, psi, 2, TIGHT)
    assert report.converged
    assert np.abs(fieldv.values - 1.5).max() < 1e-8
    assert report.rho_min[-1] == pytest.approx(1.5, abs=1e-8)
    assert report.rho_max[-1] == pytest.approx(1.5, abs=1e-8)
    assert report.kappa_max[-1] == pytest.approx(m.sphere_curvature(1.5), abs=1e-6)


def test_continuity_matches_newton_for_coincident_endpoints(grid16):
    # with epsilon = 0 the anisotropic target is its own homotopy base
    m = spaceform(0)
    base = builtin(m, "round_target", r_bar=1.0, m=4.0)
    f1, _ = continuity_solve(m, grid16, base, 2, TIGHT)
    f2, _ = newton_solve(m, constant_field(grid16, 1.1), base, 2, TIGHT)
    assert np.abs(f1.values - f2.values).max() < 1e-10


def test_continuity_solve_anisotropic(grid16):
    m = spaceform(0)
    base = builtin(m, "round_target", r_bar=1.0, m=4.0)
    psi = builtin(m, "anisotropic", base=base, epsilon=0.2, axis=(0.0, 0.0, 1.0))
    fieldv, report = continuity_solve(m, grid16, psi, 2, TIGHT)
    assert report.converged
    assert report.residual_inf < 1e-10
    assert report.u_min[-1] > 0.0
    assert np.isfinite(report.kappa_max[-1])
    # non-round solution
    assert fieldv.values.max() - fieldv.values.min() > 1e-2


def test_uniqueness_probe_round(grid16):
    m = spaceform(0)
    psi = builtin(m, "constant", c=1.0)
    dev = uniqueness_probe(m, grid16, psi, 2, TIGHT, seeds=(0.7, 1.0, 1.4))
    assert dev < 1e-8


def test_uniqueness_probe_constructed(grid16):
    m = spaceform(0)
    psi = builtin(m, "round_target", r_bar=1.5, m=4.0)
    dev = uniqueness_probe(m, grid16, psi, 2, TIGHT, seeds=(1.1, 1.5, 1.9))
    assert dev < 1e-8


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(newton_tol=0.0)
    with pytest.raises(ValueError):
        SolverOptions(damping=1.0)
    with pytest.raises(ValueError):
        SolverOptions(max_newton_iters=0)
    with pytest.raises(ValueError):
        SolverOptions(fd_step=-1e-6)


def test_homotopy_jacobian_debug_flag(grid16):
    m = spaceform(0)
    base = builtin(m, "round_target", r_bar=1.0, m=4.0)
    psi = builtin(m, "anisotropic", base=base, epsilon=0.2, axis=(0.0, 0.0, 1.0))
    opts = SolverOptions(newton_tol=1e-11, check_jacobian=True)
    _, report = continuity_solve(m, grid16, psi, 2, opts)
    assert report.jacobian_checks, "debug flag must record per-iterate checks"
    assert max(report.jacobian_checks) < 1e-5


def test_jacobian_serial_and_threaded_paths_agree(grid16, monkeypatch):
    m = spaceform(0)
    f = field_from_function(grid16, lambda tt, pp: 1.0 + 0.05 * np.cos(tt))
    psi = builtin(m, "constant", c=1.0)
    monkeypatch.setenv("STARCURV_SERIAL", "1")
    J_serial = jacobian(m, f, psi, 2)
    monkeypatch.delenv("STARCURV_SERIAL")
    J_threaded = jacobian(m, f, psi, 2)
    assert (J_serial != J_threaded).nnz == 0


def test_newton_with_normalized_residual(grid16):
    # the concave square-root form has the same zero set; the full Newton
    # path (jacobian, line search) must work through that flag too
    m = spaceform(0)
    psi = builtin(m, "constant", c=1.0)
    opts = SolverOptions(newton_tol=1e-11, use_normalized=True)
    fieldv, report = newton_solve(m, constant_field(grid16, 1.3), psi, 2, opts)
    assert report.converged
    assert np.abs(fieldv.values - 1.0).max() < 1e-8


def test_newton_mean_curvature_equation(grid16):
    # degree is runtime data: k = 1 solves sigma_1(kappa) = 2 q(r_star)
    m = spaceform(-1)
    r_star = 0.9
    psi = builtin(m, "constant", c=2.0 * math.cosh(r_star) / math.sinh(r_star), k=1)
    fieldv, report = newton_solve(m, constant_field(grid16, 1.2), psi, 1,
                                  SolverOptions(newton_tol=1e-11))
    assert report.converged
    assert np.abs(fieldv.values - r_star).max() < 1e-8


@pytest.mark.parametrize("nt,nphi", [(9, 10), (8, 14), (11, 16)])
def test_jacobian_coloring_irregular_grids(nt, nphi):
    # grids whose longitude count is not a multiple of 4 (and odd half
    # turns) stress the cross-pole column mapping in the coloring
    m = spaceform(0)
    g = build_grid(nt, nphi)
    tt, pp = g.mesh()
    vals = 1.1 * (1.0 + 0.03 * np.cos(tt) + 0.02 * np.sin(tt) * np.sin(pp))
    f = ScalarField(g, vals)
    psi = builtin(m, "radial_power", c=1.0, m=4.0)
    J = jacobian(m, f, psi, 2)
    rng = np.random.default_rng(nt * 100 + nphi)
    v = rng.standard_normal(g.shape)
    eps = 1e-6
    rp = residual(m, ScalarField(g, vals + eps * v), psi, 2).values
    rm = residual(m, ScalarField(g, vals - eps * v), psi, 2).values
    dirfd = ((rp - rm) / (2 * eps)).ravel()
    jv = J @ v.ravel()
    assert np.abs(jv - dirfd).max() / np.abs(jv).max() < 1e-5


@pytest.mark.parametrize("K,r_bar", [(1, 0.6), (-1, 0.8)])
def test_continuity_solve_curved_ambients(K, r_bar, grid16):
    # the continuation machinery is space-form-agnostic: anisotropic
    # targets in the spherical and hyperbolic models converge too
    m = spaceform(K)
    base = builtin(m, "round_target", r_bar=r_bar, m=4.0)
    psi = builtin(m, "anisotropic", base=base, epsilon=0.15, axis=(0.0, 0.0, 1.0))
    fieldv, report = continuity_solve(m, grid16, psi, 2, TIGHT)
    assert report.converged
    assert report.residual_inf < 1e-10
    assert report.u_min[-1] > 0.0
    assert min(report.cone_margin) >= TIGHT.cone_margin
    if K == 1:
        assert fieldv.values.max() < m.a
