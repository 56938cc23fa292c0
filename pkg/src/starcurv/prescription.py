"""Right-hand sides for the prescribed curvature equation, plus checkers.

A Prescription is an evaluable, strictly positive function of the node
direction z, the radius rho, and the chart-embedded unit normal nu
(all vectorized).  Built-in families:

    constant       psi = c
    radial_power   psi = c * warp(rho)^-m
    round_target   psi = C(n,k) q(rbar)^k (warp(rbar)/warp(rho))^m, m >= k,
                   constructed so the centered sphere of radius rbar is an
                   exact solution of the degree-k equation
    anisotropic    psi = base * (1 + eps <nu, axis>), |eps| < 1

The checkers report on the two solvability conditions used by the solver
monitors: the two-radius barrier inequalities comparing psi against the
curvature of centered spheres, and radial monotonicity of warp^k * psi at
frozen normal.  Checkers never gate anything; they only report faithfully.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable, Optional

import numpy as np

from .grid import build_grid
from .spaceform import DomainError, SpaceFormModel

FAMILIES = ("constant", "radial_power", "round_target", "anisotropic")

# 4th-order stencil for the monotonicity derivative: keeps the reported
# margin within ~1e-12 of the symbolic value for smooth families.
_MONO_STEP = 3e-4


class Prescription:
    """Positive right-hand side psi(z, rho, nu) paired with a degree k."""

    def __init__(self, eval_fn: Callable, family: str, params: dict,
                 k: int = 2, n: int = 2, model: Optional[SpaceFormModel] = None,
                 validate: bool = True):
        if not 1 <= k <= n:
            raise ValueError(f"degree k={k} outside 1..{n}")
        self.eval_fn = eval_fn
        self.family = family
        self.params = dict(params)
        self.k = k
        self.n = n
        self.model = model
        if validate:
            self._positivity_probe()

    def __call__(self, z, rho, nu):
        return self.eval_fn(np.asarray(z, dtype=float),
                            np.asarray(rho, dtype=float),
                            np.asarray(nu, dtype=float))

    def _probe_radii(self, count=24):
        if self.model is not None:
            hi = self.model.a - 1e-9 if self.model.K == 1 else min(self.model.a, 10.0)
        else:
            hi = 10.0
        return np.linspace(0.05 * hi, 0.95 * hi, count)

    def _positivity_probe(self):
        g = build_grid(8, 16)
        z, _, _ = g.unit_vectors()
        z = z.reshape(-1, 3)
        for r in self._probe_radii():
            vals = self(z, np.full(len(z), r), z)
            if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
                raise ValueError(
                    f"prescription {self.family!r} is not strictly positive "
                    f"(min {np.nanmin(vals)!r} at rho={r!r})")

    def blend(self, other: "Prescription", t: float) -> "Prescription":
        """Convex combination (1-t) self + t other; positivity is inherited."""
        if not (self.k == other.k and self.n == other.n):
            raise ValueError("cannot blend prescriptions of different degree")
        f0, f1 = self.eval_fn, other.eval_fn
        tv = float(t)
        return Prescription(
            lambda z, rho, nu: (1.0 - tv) * f0(z, rho, nu) + tv * f1(z, rho, nu),
            family="blend",
            params={"t": tv, "low": self.family, "high": other.family},
            k=self.k, n=self.n, model=self.model or other.model, validate=False)


def builtin(model: SpaceFormModel, family: str, k: int = 2, n: int = 2,
            **params) -> Prescription:
    """Construct one of the built-in prescription families."""
    if family == "constant":
        c = float(params.pop("c"))
        if c <= 0.0:
            raise ValueError(f"constant prescription needs c > 0, got {c}")
        fn = lambda z, rho, nu: np.full_like(np.asarray(rho, dtype=float), c)
        out_params = {"c": c}
    elif family == "radial_power":
        c = float(params.pop("c"))
        m = float(params.pop("m"))
        if c <= 0.0:
            raise ValueError(f"radial_power prescription needs c > 0, got {c}")
        fn = lambda z, rho, nu: c * model.warp(rho) ** (-m)
        out_params = {"c": c, "m": m}
    elif family == "round_target":
        r_bar = float(params.pop("r_bar"))
        m = float(params.pop("m"))
        if m < k:
            raise ValueError(f"round_target needs m >= k, got m={m} k={k}")
        model.check_domain(r_bar)
        amp = comb(n, k) * model.sphere_curvature(r_bar) ** k
        wr = model.warp(r_bar)
        fn = lambda z, rho, nu: amp * (wr / model.warp(rho)) ** m
        out_params = {"r_bar": r_bar, "m": m}
    elif family == "anisotropic":
        base = params.pop("base")
        eps = float(params.pop("epsilon"))
        axis = np.asarray(params.pop("axis", (0.0, 0.0, 1.0)), dtype=float)
        if not isinstance(base, Prescription):
            raise TypeError("anisotropic needs base=Prescription")
        if abs(eps) >= 1.0:
            raise ValueError(f"anisotropic needs |epsilon| < 1, got {eps}")
        norm = np.linalg.norm(axis)
        if not norm > 0.0:
            raise ValueError("anisotropic axis must be nonzero")
        axis = axis / norm
        bfn = base.eval_fn
        fn = lambda z, rho, nu: bfn(z, rho, nu) * (1.0 + eps * (nu @ axis))
        out_params = {"base": base.family, "epsilon": eps, "axis": tuple(axis),
                      **{f"base_{key}": val for key, val in base.params.items()}}
    else:
        raise ValueError(f"unknown prescription family {family!r}; choose from {FAMILIES}")
    if params:
        raise ValueError(f"unused parameters for family {family!r}: {sorted(params)}")
    return Prescription(fn, family, out_params, k=k, n=n, model=model)


@dataclass
class ConditionReport:
    """Outcome of the solvability-condition checkers.

    Barrier margins are the signed slack of the inequalities (>= 0 passes).
    The monotonicity field stores the worst (largest) radial derivative of
    warp^k * psi over the sample set; the check passes when it does not
    exceed the tolerance.
    """

    barrier_low_ok: Optional[bool] = None
    barrier_high_ok: Optional[bool] = None
    monotone_ok: Optional[bool] = None
    barrier_low_margin: Optional[float] = None
    barrier_high_margin: Optional[float] = None
    monotone_max_derivative: Optional[float] = None
    monotone_tol: float = 1e-8
    barrier_samples: int = 0
    monotone_samples: int = 0
    R1: Optional[float] = None
    R2: Optional[float] = None

    @property
    def all_ok(self) -> bool:
        flags = [f for f in (self.barrier_low_ok, self.barrier_high_ok, self.monotone_ok)
                 if f is not None]
        return bool(flags) and all(flags)

    def merged_with(self, other: "ConditionReport") -> "ConditionReport":
        out = ConditionReport(**self.__dict__)
        for key, val in other.__dict__.items():
            if val is not None and getattr(out, key) in (None, 0):
                setattr(out, key, val)
        return out


def check_barriers(psi: Prescription, model: SpaceFormModel, R1: float, R2: float,
                   n_theta: int = 16, n_phi: int = 32) -> ConditionReport:
    """Report the two-radius barrier inequalities.

    At the inner radius the prescription evaluated at the radial normal
    must dominate the curvature C(n,k) q(R1)^k of the centered sphere; at
    the outer radius it must be dominated by C(n,k) q(R2)^k.  Margins are
    worst-case over the sampled directions.
    """
    if not (0.0 < R1 < R2 < model.a):
        raise ValueError(f"need 0 < R1 < R2 < a, got R1={R1}, R2={R2}, a={model.a}")
    g = build_grid(n_theta, n_phi)
    z, _, _ = g.unit_vectors()
    z = z.reshape(-1, 3)
    cnk = comb(psi.n, psi.k)
    low_vals = psi(z, np.full(len(z), float(R1)), z)
    high_vals = psi(z, np.full(len(z), float(R2)), z)
    low_margin = float(np.min(low_vals - cnk * model.sphere_curvature(R1) ** psi.k))
    high_margin = float(np.min(cnk * model.sphere_curvature(R2) ** psi.k - high_vals))
    return ConditionReport(
        barrier_low_ok=low_margin >= 0.0,
        barrier_high_ok=high_margin >= 0.0,
        barrier_low_margin=low_margin,
        barrier_high_margin=high_margin,
        barrier_samples=len(z),
        R1=float(R1), R2=float(R2))


def default_rho_samples(model: SpaceFormModel, count: int = 64) -> np.ndarray:
    hi = model.a - 1e-6 if model.K == 1 else min(model.a, 3.0)
    lo = 0.05 * hi
    return np.linspace(lo, 0.95 * hi, count)


def check_monotonicity(psi: Prescription, model: SpaceFormModel,
                       rho_samples=None, directions=None, normals=None,
                       tol: float = 1e-8) -> ConditionReport:
    """Report the radial monotonicity condition at frozen normal.

    For each sampled (z, nu) pair and radius rho, the derivative
    d/d(rho) [warp(rho)^k psi(z, rho, nu)] is estimated with a 4th-order
    centered stencil; the condition requires it to stay <= tol everywhere.
    The normal components are held fixed in the chart while rho varies.
    """
    if rho_samples is None:
        rho_samples = default_rho_samples(model)
    rho_samples = np.asarray(rho_samples, dtype=float)
    if directions is None:
        g = build_grid(8, 16)
        z, _, _ = g.unit_vectors()
        directions = z.reshape(-1, 3)[::4]
    directions = np.asarray(directions, dtype=float)
    normals = directions if normals is None else np.asarray(normals, dtype=float)
    if normals.shape != directions.shape:
        raise ValueError("normals must pair one-to-one with directions")
    k = psi.k

    rr = rho_samples[None, :]
    zz = directions[:, None, :]
    nn = normals[:, None, :]
    h = _MONO_STEP * np.maximum(np.abs(rr), 0.1)
    hmax = h.max()
    model.check_domain(rho_samples - 2 * hmax)
    model.check_domain(rho_samples + 2 * hmax)

    def f(r):
        return model.warp(r) ** k * psi(zz, r, nn)

    deriv = (f(rr - 2 * h) - 8.0 * f(rr - h) + 8.0 * f(rr + h) - f(rr + 2 * h)) / (12.0 * h)
    worst = float(deriv.max())
    return ConditionReport(
        monotone_ok=worst <= tol,
        monotone_max_derivative=worst,
        monotone_tol=tol,
        monotone_samples=int(deriv.size))


def _tangent_basis(nu: np.ndarray):
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(nu)))] = 1.0
    t1 = axis - (axis @ nu) * nu
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(nu, t1)
    return t1, t2


def directional_derivatives(psi: Prescription, z, rho: float, nu,
                            rho_step: Optional[float] = None,
                            nu_step: float = 1e-6):
    """Centered-difference partials of psi at one point.

    Returns (d psi / d rho, tangential gradient of psi in nu) where the
    normal gradient is a 3-vector orthogonal to nu, built from central
    differences along two renormalized tangent perturbations.
    """
    z = np.asarray(z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    rho = float(rho)
    h = rho_step if rho_step is not None else 1e-6 * (1.0 + abs(rho))
    if psi.model is not None:
        a = psi.model.a
        lo_ok = rho - h > 0.0
        hi = a - 1e-12 if psi.model.K == 1 else a
        if not (lo_ok and rho + h < hi):
            raise DomainError(
                f"finite-difference step {h!r} underflows the domain at rho={rho!r}")
    d_rho = float(psi(z, rho + h, nu) - psi(z, rho - h, nu)) / (2.0 * h)

    t1, t2 = _tangent_basis(nu)
    grad = np.zeros(3)
    for t in (t1, t2):
        p_plus = nu + nu_step * t
        p_plus /= np.linalg.norm(p_plus)
        p_minus = nu - nu_step * t
        p_minus /= np.linalg.norm(p_minus)
        slope = float(psi(z, rho, p_plus) - psi(z, rho, p_minus)) / (2.0 * nu_step)
        grad += slope * t
    return d_rho, grad


def smoothness_probe(psi: Prescription, z, rho: float, nu,
                     steps=(1e-2, 5e-3)) -> float:
    """Relative agreement of second radial differences at two step sizes.

    Near 0 for twice continuously differentiable prescriptions; order-one
    values flag a kink in the sampled region.
    """
    z = np.asarray(z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    second = []
    for h in steps:
        vals = [float(psi(z, rho + s * h, nu)) for s in (-1, 0, 1)]
        second.append((vals[0] - 2.0 * vals[1] + vals[2]) / h**2)
    scale = max(1.0, abs(second[1]))
    return abs(second[0] - second[1]) / scale
