"""Closed-form data of the three rotationally symmetric model spaces.

The ambient metric is ``d(rho)^2 + warp(rho)^2 dz^2`` over the unit sphere,
with warp(rho) = rho, sin(rho), sinh(rho) for curvature K = 0, +1, -1.
Everything here is a pure function of (model, rho) and is safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Open-interval guard at the pi/2 cap of the spherical model: the
# geodesic-sphere curvature cot(rho) degenerates to 0 there, so radii
# within 1e-12 of the cap are rejected outright.
SPHERE_CAP_GUARD = 1e-12

# Practical stand-in for an unbounded radial domain (K = 0, -1).
DEFAULT_DOMAIN_CAP = 50.0


class DomainError(ValueError):
    """Radius outside the admissible interval (0, a) of the model."""


@dataclass(frozen=True)
class SpaceFormModel:
    """Ambient space of constant sectional curvature K in {-1, 0, +1}.

    Attributes
    ----------
    K : int
        Sectional curvature of the ambient space.
    a : float
        Right endpoint of the admissible radial interval.  pi/2 for
        K = +1, a finite practical cap otherwise (radii must stay
        strictly inside (0, a)).
    """

    K: int
    a: float

    def check_domain(self, rho, allow_zero: bool = False) -> None:
        """Raise DomainError unless every entry of rho lies in (0, a)."""
        r = np.asarray(rho, dtype=float)
        if not np.all(np.isfinite(r)):
            raise DomainError("radius contains non-finite values")
        lo_ok = r >= 0.0 if allow_zero else r > 0.0
        hi = self.a - SPHERE_CAP_GUARD if self.K == 1 else self.a
        if not (np.all(lo_ok) and np.all(r < hi)):
            bad = float(r.min()) if not np.all(lo_ok) else float(r.max())
            raise DomainError(
                f"radius {bad!r} outside admissible interval (0, {hi!r}) for K={self.K}"
            )

    def warp(self, rho):
        """Warping factor: rho, sin(rho), or sinh(rho)."""
        self.check_domain(rho)
        r = np.asarray(rho, dtype=float)
        if self.K == 0:
            out = r
        elif self.K == 1:
            out = np.sin(r)
        else:
            out = np.sinh(r)
        return out if out.ndim else float(out)

    def warp_deriv(self, rho):
        """Derivative of the warping factor: 1, cos(rho), or cosh(rho)."""
        self.check_domain(rho)
        r = np.asarray(rho, dtype=float)
        if self.K == 0:
            out = np.ones_like(r)
        elif self.K == 1:
            out = np.cos(r)
        else:
            out = np.cosh(r)
        return out if out.ndim else float(out)

    def warp_integral(self, rho):
        """Antiderivative of the warp vanishing at 0: rho^2/2, 1-cos, cosh-1."""
        self.check_domain(rho, allow_zero=True)
        r = np.asarray(rho, dtype=float)
        if self.K == 0:
            out = 0.5 * r * r
        elif self.K == 1:
            out = 1.0 - np.cos(r)
        else:
            out = np.cosh(r) - 1.0
        return out if out.ndim else float(out)

    def sphere_curvature(self, rho):
        """Principal curvature of the centered geodesic sphere of radius rho.

        Equals warp_deriv/warp: 1/rho, cot(rho), or coth(rho).  Strictly
        decreasing on (0, a) for every K.
        """
        self.check_domain(rho)
        r = np.asarray(rho, dtype=float)
        if self.K == 0:
            out = 1.0 / r
        elif self.K == 1:
            out = np.cos(r) / np.sin(r)
        else:
            out = np.cosh(r) / np.sinh(r)
        return out if out.ndim else float(out)


def spaceform(K: int, domain_cap: float = DEFAULT_DOMAIN_CAP) -> SpaceFormModel:
    """Build the model space of curvature K with a finite domain endpoint."""
    if K not in (-1, 0, 1):
        raise ValueError(f"K must be -1, 0 or +1, got {K!r}")
    if not (domain_cap > 0.0 and math.isfinite(domain_cap)):
        raise ValueError(f"domain_cap must be positive and finite, got {domain_cap!r}")
    a = math.pi / 2.0 if K == 1 else float(domain_cap)
    return SpaceFormModel(K=K, a=a)
