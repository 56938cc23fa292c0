import math

import numpy as np
import pytest

from starcurv.geometry import (GeometryError, assemble, codazzi_residual,
                               hessian_identity_residual, starshape_margin,
                               support_gradient_residual,
                               support_hessian_residual)
from starcurv.grid import ScalarField, build_grid, constant_field, field_from_function
from starcurv.spaceform import DomainError, spaceform

ALL_K = (-1, 0, 1)


def radius_for(K):
    return {0: 1.0, 1: 0.6, -1: 0.5}[K]


@pytest.mark.parametrize("K", ALL_K)
def test_round_sphere_geometry(K):
    m = spaceform(K)
    g = build_grid(16, 32)
    r = radius_for(K)
    state = assemble(m, constant_field(g, r))
    phi, dphi, q = m.warp(r), m.warp_deriv(r), m.sphere_curvature(r)
    st2 = np.sin(g.theta)[:, None] ** 2
    assert np.abs(state.h_tt - phi * dphi).max() < 1e-13
    assert np.abs(state.h_tp).max() == 0.0
    assert np.abs(state.h_pp - phi * dphi * st2).max() < 1e-13
    assert np.abs(state.b_tt - q).max() < 1e-12
    assert np.abs(state.b_pp - q).max() < 1e-12
    assert np.abs(state.kappa1 - q).max() < 1e-12
    assert np.abs(state.kappa2 - q).max() < 1e-12
    assert np.abs(state.u - phi).max() < 1e-14
    # normal is the radial direction
    z, _, _ = g.unit_vectors()
    assert np.abs(state.nu - z).max() < 1e-13


def test_equator_metric_and_support_hand_values():
    # rho = 1 + 0.1 cos(theta) at the node nearest the equator:
    # g_tt ~ phi^2 + rho_t^2 ~ 1.01 and u ~ 1/sqrt(1.01), both within O(h^2)
    m = spaceform(0)
    g = build_grid(32, 64)
    f = field_from_function(g, lambda tt, pp: 1.0 + 0.1 * np.cos(tt))
    state = assemble(m, f)
    i = int(np.argmin(np.abs(g.theta - math.pi / 2)))
    th = g.theta[i]
    rho, rho_t = 1.0 + 0.1 * math.cos(th), -0.1 * math.sin(th)
    g_tt_exact = rho**2 + rho_t**2
    u_exact = rho**2 / math.sqrt(rho**2 + rho_t**2)
    assert abs(state.g_tt[i, 0] - g_tt_exact) < 1e-3
    assert abs(state.u[i, 0] - u_exact) < 1e-3
    assert abs(g_tt_exact - 1.01) < 2e-2
    assert abs(u_exact - 0.9950371902099892) < 2e-2


def test_metric_inverse_matches_sherman_morrison_form():
    # closed 2x2 inverse agrees with the rank-one update form
    # g^{ij} = phi^-2 (e^{ij} - rho^i rho^j / (phi^2 + |grad rho|^2))
    m = spaceform(-1)
    g = build_grid(16, 32)
    f = field_from_function(g, lambda tt, pp: 1.0 + 0.1 * np.cos(tt) + 0.05 * np.sin(tt) * np.sin(pp))
    state = assemble(m, f)
    st2 = np.sin(g.theta)[:, None] ** 2
    phi2 = state.phi**2
    denom = phi2 + state.jet.grad_sq
    up_t = state.jet.d_t
    up_p = state.jet.d_p / st2
    alt_tt = (1.0 - up_t * up_t / denom) / phi2
    alt_tp = (0.0 - up_t * up_p / denom) / phi2
    alt_pp = (1.0 / st2 - up_p * up_p / denom) / phi2
    assert np.abs(state.ginv_tt - alt_tt).max() < 1e-12
    assert np.abs(state.ginv_tp - alt_tp).max() < 1e-12
    assert np.abs(state.ginv_pp - alt_pp).max() < 1e-10


def test_shape_matrix_eigenvalues_match_g_inv_h():
    # b = g^{-1/2} h g^{-1/2} shares eigenvalues with g^{-1} h
    m = spaceform(0)
    g = build_grid(16, 32)
    f = field_from_function(g, lambda tt, pp: 1.2 + 0.08 * np.sin(tt) * np.cos(pp))
    state = assemble(m, f)
    for (i, j) in ((0, 0), (5, 13), (8, 20), (15, 31)):
        A = np.array([[state.ginv_tt[i, j], state.ginv_tp[i, j]],
                      [state.ginv_tp[i, j], state.ginv_pp[i, j]]])
        H = np.array([[state.h_tt[i, j], state.h_tp[i, j]],
                      [state.h_tp[i, j], state.h_pp[i, j]]])
        ev = np.sort(np.linalg.eigvals(A @ H).real)[::-1]
        assert state.kappa1[i, j] == pytest.approx(ev[0], rel=1e-10, abs=1e-12)
        assert state.kappa2[i, j] == pytest.approx(ev[1], rel=1e-10, abs=1e-12)


def test_kappa_trace_and_determinant():
    m = spaceform(0)
    g = build_grid(16, 32)
    f = field_from_function(g, lambda tt, pp: 1.0 + 0.1 * np.cos(tt))
    s = assemble(m, f)
    tr = s.b_tt + s.b_pp
    det = s.b_tt * s.b_pp - s.b_tp**2
    assert np.abs(s.kappa1 + s.kappa2 - tr).max() < 1e-13 * max(1.0, np.abs(tr).max())
    assert np.abs(s.kappa1 * s.kappa2 - det).max() < 1e-12 * max(1.0, np.abs(det).max())


def test_support_function_bounded_by_warp():
    m = spaceform(0)
    g = build_grid(16, 32)
    rng = np.random.default_rng(12)
    vals = 1.5 + 0.1 * rng.standard_normal(g.shape)
    s = assemble(m, ScalarField(g, vals))
    assert np.all(s.u <= s.phi + 1e-14)
    # equality exactly where the discrete gradient vanishes
    srad = assemble(m, constant_field(g, 1.3))
    assert np.abs(srad.u - srad.phi).max() == 0.0


def test_starshape_margins():
    g = build_grid(16, 32)
    assert starshape_margin(assemble(spaceform(0), constant_field(g, 1.0))) == pytest.approx(1.0, abs=1e-15)
    # frozen sinh(0.5)
    assert starshape_margin(assemble(spaceform(-1), constant_field(g, 0.5))) == pytest.approx(
        0.5210953054937474, abs=1e-14)
    m = starshape_margin(assemble(spaceform(0), field_from_function(
        build_grid(32, 64), lambda tt, pp: 1.0 + 0.1 * np.cos(tt))))
    assert 0.9 < m < 1.0


def test_euclidean_scaling_covariance():
    m = spaceform(0)
    g = build_grid(16, 32)
    f = field_from_function(g, lambda tt, pp: 1.0 + 0.07 * np.sin(tt) * np.cos(pp))
    c = 2.75
    s1 = assemble(m, f)
    s2 = assemble(m, ScalarField(g, c * f.values))
    for name, power in (("g_tt", 2), ("g_tp", 2), ("g_pp", 2),
                        ("h_tt", 1), ("h_tp", 1), ("h_pp", 1),
                        ("b_tt", -1), ("b_tp", -1), ("b_pp", -1),
                        ("kappa1", -1), ("kappa2", -1), ("u", 1)):
        a = getattr(s2, name)
        b = c**power * getattr(s1, name)
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-14, err_msg=name)


def test_rotation_equivariance_bitwise():
    m = spaceform(-1)
    g = build_grid(16, 32)
    f = field_from_function(g, lambda tt, pp: 1.0 + 0.1 * np.cos(tt) + 0.05 * np.sin(tt) * np.cos(pp))
    shift = 8
    s1 = assemble(m, f)
    s2 = assemble(m, ScalarField(g, np.roll(f.values, shift, axis=1)))
    for name in ("g_tt", "g_tp", "g_pp", "h_tt", "h_tp", "h_pp",
                 "b_tt", "b_tp", "b_pp", "kappa1", "kappa2", "u"):
        assert np.array_equal(np.roll(getattr(s1, name), shift, axis=1), getattr(s2, name)), name


def test_domain_and_geometry_errors():
    m = spaceform(1)
    g = build_grid(8, 16)
    with pytest.raises(DomainError):
        assemble(m, constant_field(g, 1.7))  # beyond pi/2
    with pytest.raises(DomainError):
        assemble(spaceform(0), constant_field(g, -1.0))


def test_round_sphere_identities_machine_zero():
    for K in ALL_K:
        m = spaceform(K)
        g = build_grid(16, 32)
        f = constant_field(g, radius_for(K))
        assert hessian_identity_residual(m, f) < 1e-13
        assert support_gradient_residual(m, f) < 1e-13
        assert support_hessian_residual(m, f) < 1e-13
        assert codazzi_residual(m, f) < 1e-13


@pytest.mark.parametrize("K", ALL_K)
@pytest.mark.parametrize("fieldcase", ["axisym", "tilt"])
def test_identity_residuals_second_order(K, fieldcase):
    fn = {"axisym": lambda tt, pp: 1.0 + 0.1 * np.cos(tt),
          "tilt": lambda tt, pp: 1.0 + 0.05 * np.sin(tt) * np.cos(pp)}[fieldcase]
    m = spaceform(K)
    for check in (hessian_identity_residual, support_gradient_residual,
                  support_hessian_residual):
        res = [check(m, field_from_function(build_grid(nt, 2 * nt), fn)) for nt in (16, 32)]
        ratio = res[0] / res[1]
        assert 3.0 <= ratio <= 5.0, (check.__name__, ratio)


@pytest.mark.parametrize("K", ALL_K)
def test_codazzi_symmetry_converges(K):
    m = spaceform(K)
    fn = lambda tt, pp: 1.0 + 0.05 * np.sin(tt) * np.cos(pp)
    res = [codazzi_residual(m, field_from_function(build_grid(nt, 2 * nt), fn)) for nt in (16, 32)]
    # converges at least at the discretization order
    assert res[0] / res[1] >= 3.0


def test_flipped_christoffel_breaks_identity():
    m = spaceform(0)
    fn = lambda tt, pp: 1.0 + 0.1 * np.cos(tt)
    res = [hessian_identity_residual(m, field_from_function(build_grid(nt, 2 * nt), fn),
                                     flip_christoffel=True) for nt in (16, 32)]
    # broken covariant derivative: residual does not converge
    assert res[0] / res[1] < 1.5
    assert res[1] > 1e-3
