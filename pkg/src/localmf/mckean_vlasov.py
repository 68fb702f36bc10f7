"""The self-consistent drift map and its Picard fixed point.

The composed map Phi sends a space-time drift field h to a new one in two
strokes: Phi1 evolves every x-slice of the initial profile through the
single-spin Fokker-Planck solver with drift h^x, and Phi2 convolves the
resulting first-moment field with the interaction kernel over the torus.
A fixed point (rho, h) of Phi solves the self-consistent mean-field system
on the grid; Picard iteration converges for any bounded starting drift and
the factorial contraction of the iterates is observable through
``contraction_diagnostic``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fokker_planck import DensityPath, DriftPath, solve_fp
from .kernel import CirculantForceTable, convolve_field
from .potential import ThetaGrid, normalize_density, tilted_density, weighted_norm

__all__ = [
    "InitialProfile",
    "SpaceDriftField",
    "SpaceDensityField",
    "phi1",
    "phi2",
    "apply_phi",
    "picard_solve",
    "PicardResult",
    "PicardNoConvergence",
    "contraction_diagnostic",
]


@dataclass(frozen=True)
class InitialProfile:
    """Initial relative densities rho_0(x, .) on M equispaced torus sites.

    Every x-slice is normalized; the recorded sup of weighted L2 norms and
    the largest adjacent-slice gap stand in for the boundedness and
    x-continuity the limit theory assumes.
    """

    grid: ThetaGrid
    values: np.ndarray  # (m_sites, n_theta)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.n_points:
            raise ValueError("profile must be (m_sites, n_theta)")
        if np.any(v < 0):
            raise ValueError("profile slices must be nonnegative")
        masses = v @ self.grid.gibbs_weights
        if np.any(np.abs(masses - 1.0) > 1e-8):
            raise ValueError("every profile slice must have unit mass")
        object.__setattr__(self, "values", v)

    @property
    def m_sites(self) -> int:
        return self.values.shape[0]

    @property
    def x_nodes(self) -> np.ndarray:
        return np.arange(self.m_sites) / self.m_sites

    def slice_norms(self) -> np.ndarray:
        return np.sqrt((self.values**2) @ self.grid.gibbs_weights)

    @property
    def sup_l2_norm(self) -> float:
        return float(np.max(self.slice_norms()))

    @property
    def max_adjacent_gap(self) -> float:
        if self.m_sites == 1:
            return 0.0
        diff = self.values - np.roll(self.values, -1, axis=0)
        return float(np.sqrt(np.max((diff**2) @ self.grid.gibbs_weights)))

    @classmethod
    def uniform(cls, grid: ThetaGrid, m_sites: int) -> "InitialProfile":
        flat = normalize_density(grid, np.ones(grid.n_points))
        return cls(grid, np.tile(flat, (m_sites, 1)))

    @classmethod
    def from_tilts(cls, grid: ThetaGrid, tilts) -> "InitialProfile":
        vals = np.stack([tilted_density(grid, b) for b in np.asarray(tilts, float)])
        return cls(grid, vals)

    @classmethod
    def tilted_cosine(cls, grid: ThetaGrid, m_sites: int,
                      amplitude: float = 1.0) -> "InitialProfile":
        """Slices tilted by b(x) = amplitude * cos(2 pi x): smooth, x-dependent."""
        x = np.arange(m_sites) / m_sites
        return cls.from_tilts(grid, amplitude * np.cos(2.0 * np.pi * x))


@dataclass(frozen=True)
class SpaceDriftField:
    """Drift values h^x(t) on the M-site torus grid times a uniform time grid."""

    times: np.ndarray
    values: np.ndarray  # (m_sites, n_times)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != t.size:
            raise ValueError("field must be (m_sites, n_times)")
        if not np.all(np.isfinite(v)):
            raise ValueError("drift field must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def m_sites(self) -> int:
        return self.values.shape[0]

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @classmethod
    def zeros(cls, m_sites: int, times) -> "SpaceDriftField":
        times = np.asarray(times, dtype=float)
        return cls(times, np.zeros((m_sites, times.size)))

    @classmethod
    def constant(cls, value: float, m_sites: int, times) -> "SpaceDriftField":
        times = np.asarray(times, dtype=float)
        return cls(times, np.full((m_sites, times.size), float(value)))

    def site_path(self, m: int) -> DriftPath:
        return DriftPath(self.times, self.values[m])

    def sup_diff(self, other: "SpaceDriftField") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def l2x_sup_diff(self, other: "SpaceDriftField") -> float:
        """sup over times of the x-quadrature L2 distance to another field."""
        d2 = np.mean((self.values - other.values) ** 2, axis=0)
        return float(np.sqrt(np.max(d2)))


@dataclass(frozen=True)
class SpaceDensityField:
    """Relative densities rho_t(x, .) over (x-site, time, theta)."""

    grid: ThetaGrid
    times: np.ndarray
    values: np.ndarray  # (m_sites, n_times, n_theta)

    @property
    def m_sites(self) -> int:
        return self.values.shape[0]

    def first_moments(self) -> np.ndarray:
        w = self.grid.nodes * self.grid.gibbs_weights
        return self.values @ w

    def masses(self) -> np.ndarray:
        return self.values @ self.grid.gibbs_weights

    def slice(self, m: int, i_t: int) -> np.ndarray:
        return self.values[m, i_t]

    def time_index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t!r} is not on the field time grid")
        return i


def phi1(profile: InitialProfile, drift: SpaceDriftField,
         dt_pde: float) -> SpaceDensityField:
    """Evolve every x-slice independently under its own drift path."""
    if profile.m_sites != drift.m_sites:
        raise ValueError("profile and drift field disagree on the x grid")
    times = drift.times
    out = np.empty((profile.m_sites, times.size, profile.grid.n_points))
    for m in range(profile.m_sites):
        try:
            path = solve_fp(profile.grid, profile.values[m], drift.site_path(m),
                            float(times[-1]), dt_pde, store_times=times)
        except Exception as exc:
            raise RuntimeError(f"Fokker-Planck solve failed at site x index {m}") from exc
        out[m] = path.values
    return SpaceDensityField(profile.grid, times.copy(), out)


def phi2(field: SpaceDensityField, table: CirculantForceTable) -> SpaceDriftField:
    """Drift field h^x(t) = int J(y-x) <theta>_{rho_t(y,.)} dy on the x grid."""
    if table.dim != 1 or table.n_sites != field.m_sites:
        raise ValueError("force table does not match the field's x grid")
    moments = field.first_moments()  # (m_sites, n_times)
    conv = convolve_field(table, moments.T)  # batch over times
    return SpaceDriftField(field.times.copy(), conv.T)


def apply_phi(profile: InitialProfile, drift: SpaceDriftField,
              table: CirculantForceTable, dt_pde: float):
    dens = phi1(profile, drift, dt_pde)
    return dens, phi2(dens, table)


class PicardNoConvergence(RuntimeError):
    """Raised when the drift iteration exhausts max_iter; carries the trace."""

    def __init__(self, trace):
        self.trace = list(trace)
        last = self.trace[-1][0] if self.trace else float("nan")
        super().__init__(
            f"Picard iteration did not converge in {len(self.trace)} steps "
            f"(last sup-difference {last!r})"
        )


@dataclass
class PicardResult:
    drift: SpaceDriftField       # fixed point h
    density: SpaceDensityField   # the slice evolutions under h
    residual: float              # sup |Phi[h] - h|, guaranteed < tol
    iterations: int
    trace: list                  # per iteration: (sup_diff, sup_norm of the new iterate)


def picard_solve(profile: InitialProfile, table: CirculantForceTable,
                 t_end: float, tol: float, max_iter: int, dt_pde: float,
                 n_times: int, h_init: SpaceDriftField | None = None) -> PicardResult:
    """Iterate h <- Phi[h] until the sup-norm update drops below tol.

    The returned drift is the last pre-image h, whose densities are exactly
    the stored ``density`` field and whose fixed-point residual
    sup |Phi[h] - h| equals the final trace entry (< tol).
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if n_times < 2:
        raise ValueError("need at least two field times")
    times = np.linspace(0.0, t_end, n_times)
    if h_init is None:
        h_init = SpaceDriftField.zeros(profile.m_sites, times)
    elif not np.allclose(h_init.times, times, rtol=1e-12, atol=1e-12):
        raise ValueError("h_init lives on a different time grid")

    h = h_init
    trace = []
    for it in range(1, max_iter + 1):
        dens, h_new = apply_phi(profile, h, table, dt_pde)
        diff = h_new.sup_diff(h)
        trace.append((diff, h_new.sup_norm))
        if diff < tol:
            return PicardResult(drift=h, density=dens, residual=diff,
                                iterations=it, trace=trace)
        h = h_new
    raise PicardNoConvergence(trace)


def contraction_diagnostic(profile: InitialProfile, table: CirculantForceTable,
                           drift_a: SpaceDriftField, drift_b: SpaceDriftField,
                           n_max: int, dt_pde: float) -> np.ndarray:
    """Distances d_n = sup_t ||Phi^n[a] - Phi^n[b]||_{L2(x)} for n = 0..n_max.

    The factorial contraction of the composed map shows up as ratios
    d_{n+1}/d_n that keep shrinking with n.
    """
    dists = [drift_a.l2x_sup_diff(drift_b)]
    a, b = drift_a, drift_b
    for _ in range(n_max):
        _, a = apply_phi(profile, a, table, dt_pde)
        _, b = apply_phi(profile, b, table, dt_pde)
        dists.append(a.l2x_sup_diff(b))
    return np.asarray(dists)
