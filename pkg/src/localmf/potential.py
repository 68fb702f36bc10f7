"""Confining polynomial potential, Gibbs weight, and weighted quadrature.

All densities in this package are taken relative to the Gibbs measure
``exp(-2 psi(theta)) dtheta``; the inner product implemented here is the
one every other module uses for norms, moments and normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

__all__ = [
    "Potential",
    "ThetaGrid",
    "weighted_inner",
    "normalize_density",
    "tilted_density",
]

# Truncating the theta axis at +-theta_max is legitimate only while the
# Gibbs weight at the cut is negligible against its peak.
TAIL_MASS_RATIO = 1e-12


@dataclass(frozen=True)
class Potential:
    """Monic polynomial confinement psi of even degree >= 4.

    ``coefficients[k]`` multiplies ``theta**k``.  The monic even leading
    term guarantees psi -> +inf in both directions, so exp(-2 psi) is a
    finite reference weight.
    """

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if c.ndim != 1 or c.size < 5:
            raise ValueError("potential needs coefficients up to degree >= 4")
        degree = c.size - 1
        if degree % 2 != 0:
            raise ValueError(f"potential degree must be even, got {degree}")
        if c[-1] != 1.0:
            raise ValueError("leading coefficient must be exactly 1 (monic)")
        if not np.all(np.isfinite(c)):
            raise ValueError("potential coefficients must be finite")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "_dc", npoly.polyder(c))
        object.__setattr__(self, "_ddc", npoly.polyder(c, 2))

    @property
    def degree(self) -> int:
        return self.coefficients.size - 1

    def psi(self, theta):
        return npoly.polyval(theta, self.coefficients)

    def psi_prime(self, theta):
        return npoly.polyval(theta, self._dc)

    def psi_second(self, theta):
        return npoly.polyval(theta, self._ddc)

    def gibbs_factor(self, theta):
        """exp(-2 psi(theta)), the pointwise reference weight."""
        return np.exp(-2.0 * self.psi(theta))


@dataclass(frozen=True)
class ThetaGrid:
    """Uniform symmetric grid on [-theta_max, theta_max] with Gibbs-weighted
    trapezoid quadrature.

    ``gibbs_weights[j] = exp(-2 psi(theta_j)) * cell_widths[j]`` so that
    ``sum(f * g * gibbs_weights)`` approximates the weighted inner product.
    Construction fails if the weight at the boundary is not negligible
    (tail-mass criterion), since every solver here pretends the axis ends
    at +-theta_max.
    """

    potential: Potential
    theta_max: float
    n_points: int

    def __post_init__(self):
        if self.theta_max <= 0:
            raise ValueError("theta_max must be positive")
        if self.n_points < 64:
            raise ValueError("need at least 64 grid points")
        nodes = np.linspace(-self.theta_max, self.theta_max, self.n_points)
        psi_values = self.potential.psi(nodes)
        if not self.potential.psi(self.theta_max) > self.potential.psi(0.0):
            raise ValueError("potential is not confining on this grid")
        gibbs_factor = np.exp(-2.0 * psi_values)
        if gibbs_factor[0] >= TAIL_MASS_RATIO * gibbs_factor.max():
            raise ValueError(
                "tail-mass criterion violated: increase theta_max "
                f"(boundary/peak weight ratio {gibbs_factor[0] / gibbs_factor.max():.3e})"
            )
        widths = np.full(self.n_points, nodes[1] - nodes[0])
        widths[0] *= 0.5
        widths[-1] *= 0.5
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "psi_values", psi_values)
        object.__setattr__(self, "gibbs_factor", gibbs_factor)
        object.__setattr__(self, "cell_widths", widths)
        object.__setattr__(self, "gibbs_weights", gibbs_factor * widths)

    @property
    def spacing(self) -> float:
        return self.nodes[1] - self.nodes[0]


def weighted_inner(grid: ThetaGrid, f, g) -> float:
    """Inner product of two grid functions in L^2(exp(-2 psi) dtheta)."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (grid.n_points,) or g.shape != (grid.n_points,):
        raise ValueError(
            f"grid functions must have shape ({grid.n_points},), "
            f"got {f.shape} and {g.shape}"
        )
    return float(np.sum(f * g * grid.gibbs_weights))


def weighted_norm(grid: ThetaGrid, f) -> float:
    return float(np.sqrt(max(weighted_inner(grid, f, f), 0.0)))


def normalize_density(grid: ThetaGrid, rho) -> np.ndarray:
    """Rescale a nonnegative grid function to unit Gibbs-weighted mass."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (grid.n_points,):
        raise ValueError(f"density must have shape ({grid.n_points},)")
    if np.any(rho < 0.0):
        raise ValueError("density must be nonnegative")
    mass = float(np.sum(rho * grid.gibbs_weights))
    if mass <= 0.0:
        raise ValueError("density has zero mass, cannot normalize")
    return rho / mass


def tilted_density(grid: ThetaGrid, tilt: float) -> np.ndarray:
    """Normalized relative density proportional to exp(tilt * theta).

    With tilt = 2h this is the stationary state of the single-spin
    dynamics under constant drift h.
    """
    expo = tilt * grid.nodes
    rho = np.exp(expo - expo.max())
    return normalize_density(grid, rho)
