"""Structured latitude-longitude discretization of the unit sphere.

Colatitudes are cell-centered (no node sits on a pole) and longitudes are
uniform and periodic.  Values just beyond a pole are obtained from the
cross-pole chart identification (theta, phi) -> (-theta, phi + pi): ghost
rows are the first/last interior row rolled by half a turn, with a sign
flip for tensor components carrying an odd number of theta indices.
All stencils are second-order centered differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    """Invalid grid construction parameters."""


@dataclass(frozen=True, eq=False)
class SphereGrid:
    n_theta: int
    n_phi: int
    theta: np.ndarray      # (n_theta,) cell-centered colatitudes
    phi: np.ndarray        # (n_phi,) periodic longitudes
    dtheta: float
    dphi: float

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    @property
    def n_nodes(self):
        return self.n_theta * self.n_phi

    # Row-shaped trig factors, shape (n_theta, 1) so they broadcast over phi.
    @property
    def sin_t(self):
        return np.sin(self.theta)[:, None]

    @property
    def cos_t(self):
        return np.cos(self.theta)[:, None]

    def mesh(self):
        """(theta, phi) meshes of shape (n_theta, n_phi)."""
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    def unit_vectors(self):
        """Node directions z and the local tangent frame (e_theta, e_phi).

        Returned arrays have shape (n_theta, n_phi, 3) in Cartesian
        components of the embedding chart.  Cached after the first call.
        """
        cached = getattr(self, "_frames", None)
        if cached is None:
            tt, pp = self.mesh()
            st, ct = np.sin(tt), np.cos(tt)
            sp, cp = np.sin(pp), np.cos(pp)
            z = np.stack([st * cp, st * sp, ct], axis=-1)
            e_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
            e_p = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
            cached = (z, e_t, e_p)
            object.__setattr__(self, "_frames", cached)
        return cached


def build_grid(n_theta: int, n_phi: int) -> SphereGrid:
    """Cell-centered grid with n_theta x n_phi nodes.

    n_phi must be even so that the cross-pole identification
    phi -> phi + pi maps grid columns to grid columns.
    """
    if n_theta < 8 or n_phi < 8:
        raise GridError(f"grid too small: need n_theta >= 8 and n_phi >= 8, got {n_theta}x{n_phi}")
    if n_phi % 2 != 0:
        raise GridError(f"n_phi must be even for the cross-pole identification, got {n_phi}")
    dtheta = math.pi / n_theta
    dphi = 2.0 * math.pi / n_phi
    theta = (np.arange(n_theta) + 0.5) * dtheta
    phi = np.arange(n_phi) * dphi
    return SphereGrid(n_theta=n_theta, n_phi=n_phi, theta=theta, phi=phi,
                      dtheta=dtheta, dphi=dphi)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real value per grid node, stored as an (n_theta, n_phi) array."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)


def constant_field(grid: SphereGrid, value: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)))


def field_from_function(grid: SphereGrid, fn) -> ScalarField:
    """Sample fn(theta, phi) (vectorized over meshes) at the nodes."""
    tt, pp = grid.mesh()
    return ScalarField(grid, np.asarray(fn(tt, pp), dtype=float))


# ---------------------------------------------------------------------------
# centered stencils with cross-pole ghosting
#
# order=2 is the production discretization.  order=4 exists for the
# geometry diagnostics: coordinate components of raised/contracted
# quantities carry 1/sin(theta)^2 weights, and at the cell-centered rows
# next to a pole those weights amplify second-order ingredient errors to
# O(1).  Fourth-order ingredients keep every diagnostic term at or below
# O(h^2) there.

def pad_poles(grid: SphereGrid, v: np.ndarray, parity: int = 1, depth: int = 1) -> np.ndarray:
    """Add `depth` ghost rows beyond each pole.

    parity is +1 for scalars and tensor components with an even number of
    theta indices, -1 otherwise (the chart map flips d/dtheta).  Ghost row
    m beyond a pole is interior row m-1 rolled by half a turn.
    """
    half = grid.n_phi // 2
    p = np.empty((grid.n_theta + 2 * depth, grid.n_phi), dtype=float)
    p[depth:p.shape[0] - depth] = v
    for mrow in range(depth):
        p[depth - 1 - mrow] = parity * np.roll(v[mrow], -half)
        p[p.shape[0] - depth + mrow] = parity * np.roll(v[-1 - mrow], -half)
    return p


def d_theta(grid: SphereGrid, v: np.ndarray, parity: int = 1, order: int = 2) -> np.ndarray:
    if order == 2:
        p = pad_poles(grid, v, parity)
        return (p[2:] - p[:-2]) / (2.0 * grid.dtheta)
    p = pad_poles(grid, v, parity, depth=2)
    return (p[:-4] - 8.0 * p[1:-3] + 8.0 * p[3:-1] - p[4:]) / (12.0 * grid.dtheta)


def d2_theta(grid: SphereGrid, v: np.ndarray, parity: int = 1, order: int = 2) -> np.ndarray:
    if order == 2:
        p = pad_poles(grid, v, parity)
        return (p[2:] - 2.0 * p[1:-1] + p[:-2]) / grid.dtheta**2
    p = pad_poles(grid, v, parity, depth=2)
    return (-p[:-4] + 16.0 * p[1:-3] - 30.0 * p[2:-2] + 16.0 * p[3:-1] - p[4:]) / (12.0 * grid.dtheta**2)


def _roll_diff1(v: np.ndarray, step: float, order: int) -> np.ndarray:
    if order == 2:
        return (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2.0 * step)
    return (np.roll(v, 2, axis=1) - 8.0 * np.roll(v, 1, axis=1)
            + 8.0 * np.roll(v, -1, axis=1) - np.roll(v, -2, axis=1)) / (12.0 * step)


def d_phi(grid: SphereGrid, v: np.ndarray, order: int = 2) -> np.ndarray:
    return _roll_diff1(v, grid.dphi, order)


def d2_phi(grid: SphereGrid, v: np.ndarray, order: int = 2) -> np.ndarray:
    if order == 2:
        return (np.roll(v, -1, axis=1) - 2.0 * v + np.roll(v, 1, axis=1)) / grid.dphi**2
    return (-np.roll(v, 2, axis=1) + 16.0 * np.roll(v, 1, axis=1) - 30.0 * v
            + 16.0 * np.roll(v, -1, axis=1) - np.roll(v, -2, axis=1)) / (12.0 * grid.dphi**2)


def d_theta_phi(grid: SphereGrid, v: np.ndarray, parity: int = 1, order: int = 2) -> np.ndarray:
    depth = 1 if order == 2 else 2
    p = pad_poles(grid, v, parity, depth=depth)
    dp = _roll_diff1(p, grid.dphi, order)
    if order == 2:
        return (dp[2:] - dp[:-2]) / (2.0 * grid.dtheta)
    return (dp[:-4] - 8.0 * dp[1:-3] + 8.0 * dp[3:-1] - dp[4:]) / (12.0 * grid.dtheta)


# ---------------------------------------------------------------------------
# covariant jet on the unit sphere

@dataclass(frozen=True, eq=False)
class CovariantJet:
    """Value, gradient, and covariant Hessian of a scalar on the unit sphere.

    Components are taken in (theta, phi) coordinates of the round metric
    e = dtheta^2 + sin(theta)^2 dphi^2; grad_sq is the invariant
    e^{ij} f_i f_j.
    """

    value: np.ndarray
    d_t: np.ndarray
    d_p: np.ndarray
    hess_tt: np.ndarray
    hess_tp: np.ndarray
    hess_pp: np.ndarray
    grad_sq: np.ndarray


def covariant_jet(field: ScalarField, order: int = 2) -> CovariantJet:
    """Finite-difference jet of a scalar field, second-order by default.

    The covariant Hessian corrects the raw partials with the sphere
    Christoffel symbols:

        H_tt = f_tt
        H_tp = f_tp - cot(theta) f_p
        H_pp = f_pp + sin(theta) cos(theta) f_t

    order=4 is reserved for the identity diagnostics (see the stencil
    notes above); everything the solver touches uses order=2.
    """
    g = field.grid
    v = field.values
    ft = d_theta(g, v, order=order)
    fp = d_phi(g, v, order=order)
    ftt = d2_theta(g, v, order=order)
    fpp = d2_phi(g, v, order=order)
    ftp = d_theta_phi(g, v, order=order)
    st, ct = g.sin_t, g.cos_t
    hess_tt = ftt
    hess_tp = ftp - (ct / st) * fp
    hess_pp = fpp + st * ct * ft
    grad_sq = ft * ft + (fp / st) ** 2
    return CovariantJet(value=v, d_t=ft, d_p=fp, hess_tt=hess_tt,
                        hess_tp=hess_tp, hess_pp=hess_pp, grad_sq=grad_sq)


def refinement_order(field_fn, exact_fn, derived_fn, n_theta: int, n_phi: int,
                     norm: str = "rms") -> float:
    """log2 error ratio of a derived quantity between grids (n, 2n).

    field_fn(theta, phi) samples the analytic field, exact_fn(theta, phi)
    its exact derived quantity, and derived_fn(jet, grid) the discrete
    counterpart.  Returns +inf when both errors vanish (field resolved
    exactly), else log2(err_coarse / err_fine); ~2 for smooth fields.

    norm="rms" (area-weighted) is the default: quantities carrying
    1/sin(theta)^2 weights lose one order pointwise at the cell-centered
    rows next to a pole, but those rows have O(h^2) area, so the weighted
    norm sees clean second order.  norm="max" is the plain sup norm.
    """
    if norm not in ("rms", "max"):
        raise ValueError(f"norm must be 'rms' or 'max', got {norm!r}")
    errs = []
    scale = 1.0
    for nt, np_ in ((n_theta, n_phi), (2 * n_theta, 2 * n_phi)):
        g = build_grid(nt, np_)
        f = field_from_function(g, field_fn)
        tt, pp = g.mesh()
        exact = np.asarray(exact_fn(tt, pp), dtype=float)
        approx = np.asarray(derived_fn(covariant_jet(f), g), dtype=float)
        diff = np.abs(approx - exact)
        if norm == "max":
            errs.append(float(diff.max()))
        else:
            weight = np.sin(tt) * g.dtheta * g.dphi
            errs.append(float(np.sqrt((weight * diff**2).sum() / weight.sum())))
        scale = max(1.0, float(np.max(np.abs(exact))))
    if errs[0] < 1e-13 * scale and errs[1] < 1e-13 * scale:
        return math.inf
    return math.log2(errs[0] / errs[1])
