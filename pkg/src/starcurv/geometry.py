"""Induced geometry of a radial graph over the sphere.

From a height field rho the hypersurface {(z, rho(z))} inherits, per node:
the induced metric g, its inverse, the second fundamental form h taken
with respect to the outward normal, the symmetric shape matrix
b = g^{-1/2} h g^{-1/2}, its eigenvalues (the principal curvatures), the
support function u, and the chart-embedded unit normal.  Component
conventions: symmetric 2x2 tensors are stored as the (tt, tp, pp) triple
of coordinate components on the (theta, phi) chart.

The *_identity_residual functions are discrete diagnostics: they compare
independent finite-difference evaluations of both sides of structural
identities tying the radial potential, the support function, and the
second fundamental form together.  Residuals shrink at second order under
refinement for smooth fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (ScalarField, SphereGrid, covariant_jet, d_phi, d_theta,
                   d2_phi, d2_theta, d_theta_phi)
from .spaceform import SpaceFormModel


class GeometryError(RuntimeError):
    """Broken per-node geometry (NaN propagation or loss of positivity)."""


@dataclass(frozen=True, eq=False)
class GeometryState:
    grid: SphereGrid
    rho: np.ndarray
    jet: object                     # CovariantJet of rho
    phi: np.ndarray                 # warp factor at rho
    dphi: np.ndarray                # warp derivative at rho
    pot: np.ndarray                 # warp integral at rho
    g_tt: np.ndarray
    g_tp: np.ndarray
    g_pp: np.ndarray
    ginv_tt: np.ndarray
    ginv_tp: np.ndarray
    ginv_pp: np.ndarray
    h_tt: np.ndarray
    h_tp: np.ndarray
    h_pp: np.ndarray
    b_tt: np.ndarray
    b_tp: np.ndarray
    b_pp: np.ndarray
    kappa1: np.ndarray              # larger principal curvature
    kappa2: np.ndarray
    u: np.ndarray                   # support function
    nu: np.ndarray                  # (nt, nphi, 3) chart-embedded unit normal

    @property
    def kappa(self):
        """Principal curvatures stacked on a last axis, descending."""
        return np.stack([self.kappa1, self.kappa2], axis=-1)


def _screen_finite(grid, name, arr):
    if np.all(np.isfinite(arr)):
        return
    i, j = np.unravel_index(int(np.argmin(np.isfinite(arr).ravel())), grid.shape)
    raise GeometryError(
        f"non-finite {name} at node (theta={grid.theta[i]:.6f}, phi={grid.phi[j]:.6f})"
    )


def assemble(model: SpaceFormModel, field: ScalarField, order: int = 2) -> GeometryState:
    """Build the full per-node geometry of the radial graph of rho.

    Raises DomainError if rho leaves (0, a) and GeometryError if the
    induced metric fails to be positive definite (a symptom of a broken
    input field, not of an inadmissible but valid geometry).
    """
    g = field.grid
    rho = field.values
    model.check_domain(rho)
    jet = covariant_jet(field, order=order)

    phi = np.asarray(model.warp(rho))
    dphi = np.asarray(model.warp_deriv(rho))
    pot = np.asarray(model.warp_integral(rho))
    w = jet.grad_sq
    sroot = np.sqrt(phi * phi + w)

    st = g.sin_t
    st2 = st * st
    dt, dp = jet.d_t, jet.d_p

    g_tt = phi * phi + dt * dt
    g_tp = dt * dp
    g_pp = phi * phi * st2 + dp * dp
    for name, arr in (("metric", g_tt), ("metric", g_tp), ("metric", g_pp)):
        _screen_finite(g, name, arr)
    det_g = g_tt * g_pp - g_tp * g_tp
    if np.any(det_g <= 0.0) or np.any(g_tt <= 0.0):
        raise GeometryError("induced metric lost positive-definiteness")
    ginv_tt = g_pp / det_g
    ginv_tp = -g_tp / det_g
    ginv_pp = g_tt / det_g

    pref = phi / sroot
    two_q = 2.0 * dphi / phi
    h_tt = pref * (-jet.hess_tt + two_q * dt * dt + phi * dphi)
    h_tp = pref * (-jet.hess_tp + two_q * dt * dp)
    h_pp = pref * (-jet.hess_pp + two_q * dp * dp + phi * dphi * st2)
    for arr in (h_tt, h_tp, h_pp):
        _screen_finite(g, "second fundamental form", arr)

    # Symmetric inverse square root of g, closed form for SPD 2x2:
    # sqrt(g) = (g + sqrt(det g) I) / t with t = sqrt(tr g + 2 sqrt(det g)),
    # so    g^{-1/2} = adj(g + sqrt(det g) I) / (sqrt(det g) t).
    s = np.sqrt(det_g)
    t = np.sqrt(g_tt + g_pp + 2.0 * s)
    denom = s * t
    gam_tt = (g_pp + s) / denom
    gam_tp = -g_tp / denom
    gam_pp = (g_tt + s) / denom

    ah_11 = gam_tt * h_tt + gam_tp * h_tp
    ah_12 = gam_tt * h_tp + gam_tp * h_pp
    ah_21 = gam_tp * h_tt + gam_pp * h_tp
    ah_22 = gam_tp * h_tp + gam_pp * h_pp
    b_tt = ah_11 * gam_tt + ah_12 * gam_tp
    b_pp = ah_21 * gam_tp + ah_22 * gam_pp
    b_tp = 0.5 * ((ah_11 * gam_tp + ah_12 * gam_pp) + (ah_21 * gam_tt + ah_22 * gam_tp))
    _screen_finite(g, "shape matrix", b_tp)

    mean = 0.5 * (b_tt + b_pp)
    disc = np.sqrt(np.maximum((0.5 * (b_tt - b_pp)) ** 2 + b_tp * b_tp, 0.0))
    kappa1 = mean + disc
    kappa2 = mean - disc

    u = phi * phi / sroot

    z, e_t, e_p = g.unit_vectors()
    coef = 1.0 / sroot
    nu = coef[..., None] * (-dt[..., None] * e_t
                            - (dp / st)[..., None] * e_p
                            + phi[..., None] * z)

    return GeometryState(grid=g, rho=rho, jet=jet, phi=phi, dphi=dphi, pot=pot,
                         g_tt=g_tt, g_tp=g_tp, g_pp=g_pp,
                         ginv_tt=ginv_tt, ginv_tp=ginv_tp, ginv_pp=ginv_pp,
                         h_tt=h_tt, h_tp=h_tp, h_pp=h_pp,
                         b_tt=b_tt, b_tp=b_tp, b_pp=b_pp,
                         kappa1=kappa1, kappa2=kappa2, u=u, nu=nu)


def starshape_margin(state: GeometryState) -> float:
    """Minimum of the support function; positive certifies strict starshape."""
    return float(state.u.min())


# ---------------------------------------------------------------------------
# surface covariant derivatives (diagnostic path only)
#
# The identity residuals below are meant to converge at second order in
# max-norm over all nodes.  Raised indices put 1/sin(theta)^2 weights on
# coordinate components, which at the rows next to a pole amplifies
# second-order errors in the *ingredients* (g, h, u, Christoffels, grad h)
# to O(1).  The diagnostics therefore derive every ingredient with
# fourth-order stencils, while the identity "probe" derivatives stay
# second-order so the residual itself remains cleanly O(h^2).

_DIAG_ORDER = 4


def _surface_christoffels(state: GeometryState, flip_sign_bug: bool = False):
    """Christoffel symbols of the induced metric, by finite differences of g.

    flip_sign_bug negates one symbol; it exists solely so the verification
    harness can prove it detects a broken covariant derivative.
    """
    g = state.grid
    d1_tt = d_theta(g, state.g_tt, 1, order=_DIAG_ORDER)
    d1_tp = d_theta(g, state.g_tp, -1, order=_DIAG_ORDER)
    d1_pp = d_theta(g, state.g_pp, 1, order=_DIAG_ORDER)
    d2_tt = d_phi(g, state.g_tt, order=_DIAG_ORDER)
    d2_tp = d_phi(g, state.g_tp, order=_DIAG_ORDER)
    d2_pp = d_phi(g, state.g_pp, order=_DIAG_ORDER)
    itt, itp, ipp = state.ginv_tt, state.ginv_tp, state.ginv_pp

    G_t_tt = 0.5 * (itt * d1_tt + itp * (2.0 * d1_tp - d2_tt))
    G_t_tp = 0.5 * (itt * d2_tt + itp * d1_pp)
    G_t_pp = 0.5 * (itt * (2.0 * d2_tp - d1_pp) + itp * d2_pp)
    G_p_tt = 0.5 * (itp * d1_tt + ipp * (2.0 * d1_tp - d2_tt))
    G_p_tp = 0.5 * (itp * d2_tt + ipp * d1_pp)
    G_p_pp = 0.5 * (itp * (2.0 * d2_tp - d1_pp) + ipp * d2_pp)
    if flip_sign_bug:
        G_t_pp = -G_t_pp
    return G_t_tt, G_t_tp, G_t_pp, G_p_tt, G_p_tp, G_p_pp


def _surface_hessian(state: GeometryState, values: np.ndarray, chris) -> tuple:
    """Covariant Hessian of a scalar on the graph, coordinate components.

    Second-order pure second derivatives (the probe being tested) combined
    with fourth-order first derivatives inside the Christoffel products
    (ingredients, see the note above).
    """
    g = state.grid
    G_t_tt, G_t_tp, G_t_pp, G_p_tt, G_p_tp, G_p_pp = chris
    ft = d_theta(g, values, order=_DIAG_ORDER)
    fp = d_phi(g, values, order=_DIAG_ORDER)
    H_tt = d2_theta(g, values) - G_t_tt * ft - G_p_tt * fp
    H_tp = d_theta_phi(g, values) - G_t_tp * ft - G_p_tp * fp
    H_pp = d2_phi(g, values) - G_t_pp * ft - G_p_pp * fp
    return H_tt, H_tp, H_pp


def _grad_pot(state: GeometryState):
    """Surface gradient of the radial potential: chain rule, phi * d(rho)."""
    return state.phi * state.jet.d_t, state.phi * state.jet.d_p


def _raise_index(state: GeometryState, v_t, v_p):
    up_t = state.ginv_tt * v_t + state.ginv_tp * v_p
    up_p = state.ginv_tp * v_t + state.ginv_pp * v_p
    return up_t, up_p


def _cov_deriv_h(state: GeometryState, chris):
    """Covariant derivative of h: T[k][(i,j)] coordinate components."""
    g = state.grid
    G_t_tt, G_t_tp, G_t_pp, G_p_tt, G_p_tp, G_p_pp = chris
    h_tt, h_tp, h_pp = state.h_tt, state.h_tp, state.h_pp
    d1h_tt = d_theta(g, h_tt, 1, order=_DIAG_ORDER)
    d1h_tp = d_theta(g, h_tp, -1, order=_DIAG_ORDER)
    d1h_pp = d_theta(g, h_pp, 1, order=_DIAG_ORDER)
    d2h_tt = d_phi(g, h_tt, order=_DIAG_ORDER)
    d2h_tp = d_phi(g, h_tp, order=_DIAG_ORDER)
    d2h_pp = d_phi(g, h_pp, order=_DIAG_ORDER)

    T_t_tt = d1h_tt - 2.0 * (G_t_tt * h_tt + G_p_tt * h_tp)
    T_t_tp = d1h_tp - (G_t_tt * h_tp + G_p_tt * h_pp) - (G_t_tp * h_tt + G_p_tp * h_tp)
    T_t_pp = d1h_pp - 2.0 * (G_t_tp * h_tp + G_p_tp * h_pp)
    T_p_tt = d2h_tt - 2.0 * (G_t_tp * h_tt + G_p_tp * h_tp)
    T_p_tp = d2h_tp - (G_t_tp * h_tp + G_p_tp * h_pp) - (G_t_pp * h_tt + G_p_pp * h_tp)
    T_p_pp = d2h_pp - 2.0 * (G_t_pp * h_tp + G_p_pp * h_pp)
    return (T_t_tt, T_t_tp, T_t_pp), (T_p_tt, T_p_tp, T_p_pp)


def hessian_identity_residual(model: SpaceFormModel, field: ScalarField,
                              flip_christoffel: bool = False) -> float:
    """Max-norm defect of: surface Hessian of the radial potential
    equals warp_deriv * g - u * h."""
    state = assemble(model, field, order=_DIAG_ORDER)
    chris = _surface_christoffels(state, flip_christoffel)
    H_tt, H_tp, H_pp = _surface_hessian(state, state.pot, chris)
    r_tt = H_tt - (state.dphi * state.g_tt - state.u * state.h_tt)
    r_tp = H_tp - (state.dphi * state.g_tp - state.u * state.h_tp)
    r_pp = H_pp - (state.dphi * state.g_pp - state.u * state.h_pp)
    return float(max(np.abs(r_tt).max(), np.abs(r_tp).max(), np.abs(r_pp).max()))


def support_gradient_residual(model: SpaceFormModel, field: ScalarField) -> float:
    """Max-norm defect of: grad u = h contracted with the raised potential
    gradient, grad_i u = g^{kl} h_{ik} grad_l(potential)."""
    state = assemble(model, field, order=_DIAG_ORDER)
    g = state.grid
    lhs_t = d_theta(g, state.u)
    lhs_p = d_phi(g, state.u)
    p_t, p_p = _grad_pot(state)
    up_t, up_p = _raise_index(state, p_t, p_p)
    rhs_t = state.h_tt * up_t + state.h_tp * up_p
    rhs_p = state.h_tp * up_t + state.h_pp * up_p
    return float(max(np.abs(lhs_t - rhs_t).max(), np.abs(lhs_p - rhs_p).max()))


def support_hessian_residual(model: SpaceFormModel, field: ScalarField,
                             flip_christoffel: bool = False) -> float:
    """Max-norm defect of the support function Hessian identity:
    Hess u = (grad h contracted with raised potential gradient)
             + warp_deriv * h - u * h g^{-1} h."""
    state = assemble(model, field, order=_DIAG_ORDER)
    chris = _surface_christoffels(state, flip_christoffel)
    H_tt, H_tp, H_pp = _surface_hessian(state, state.u, chris)
    T_t, T_p = _cov_deriv_h(state, chris)
    p_t, p_p = _grad_pot(state)
    up_t, up_p = _raise_index(state, p_t, p_p)

    m_11 = state.h_tt * state.ginv_tt + state.h_tp * state.ginv_tp
    m_12 = state.h_tt * state.ginv_tp + state.h_tp * state.ginv_pp
    m_21 = state.h_tp * state.ginv_tt + state.h_pp * state.ginv_tp
    m_22 = state.h_tp * state.ginv_tp + state.h_pp * state.ginv_pp
    hgh_tt = m_11 * state.h_tt + m_12 * state.h_tp
    hgh_tp = m_11 * state.h_tp + m_12 * state.h_pp
    hgh_pp = m_21 * state.h_tp + m_22 * state.h_pp

    res = []
    for Tt, Tp, H, h, hgh in zip(T_t, T_p,
                                 (H_tt, H_tp, H_pp),
                                 (state.h_tt, state.h_tp, state.h_pp),
                                 (hgh_tt, hgh_tp, hgh_pp)):
        rhs = Tt * up_t + Tp * up_p + state.dphi * h - state.u * hgh
        res.append(np.abs(H - rhs).max())
    return float(max(res))


def codazzi_residual(model: SpaceFormModel, field: ScalarField) -> float:
    """Max-norm defect of total symmetry of grad h (ambient curvature is
    constant, so the mixed covariant derivatives of h must agree)."""
    state = assemble(model, field, order=_DIAG_ORDER)
    chris = _surface_christoffels(state)
    (T_t_tt, T_t_tp, T_t_pp), (T_p_tt, T_p_tp, T_p_pp) = _cov_deriv_h(state, chris)
    r1 = np.abs(T_t_tp - T_p_tt).max()
    r2 = np.abs(T_t_pp - T_p_tp).max()
    return float(max(r1, r2))
