"""Tamed Euler-Maruyama simulation of the N-site spin systems.

Two dynamics share one stepping scheme: the coupled system, where each
site feels the circulant-convolution force of all spins, and the
decoupled reference system, where each site is driven by a deterministic
drift field evaluated at its torus position.  The drift growth from the
monic potential is superlinear, so plain Euler diverges; the increment is
tamed by 1/(1 + dt |drift|), which keeps the scheme stable without
touching the small-increment regime.

Noise is drawn per (seed, step) from a counter-based stream with one lane
per lattice site, so trajectories are bit-reproducible and independent of
any scheduling, and coupled/decoupled runs with the same seed share their
Brownian increments.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kernel import CirculantForceTable, convolve_field, fourier_resample
from .mckean_vlasov import InitialProfile, SpaceDriftField
from .potential import Potential
from .rng import TAG_DYNAMICS, TAG_INIT, counter_stream

__all__ = [
    "SimConfig",
    "ParticleState",
    "sample_initial",
    "step_coupled",
    "step_decoupled",
    "SiteDriftSampler",
    "run_trajectory",
    "TrajectoryResult",
]


@dataclass(frozen=True)
class SimConfig:
    n_sites: int
    t_end: float
    dt: float
    seed: int
    dim: int = 1
    taming: bool = True
    noise_scale: float = 1.0
    replicas: int = 1

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("need at least 2 sites")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")
        if self.replicas < 1:
            raise ValueError("need at least one replica")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass
class ParticleState:
    """Spins on the discrete torus plus the position of the noise stream.

    ``theta`` has shape (replicas, N) for dim 1 and (replicas, N, N) for
    dim 2.  The guard bound flags dynamical excursions that would leave
    the region the PDE grid resolves; crossing it is an error, not a clamp.
    """

    theta: np.ndarray
    time: float
    step: int
    seed: int
    guard_bound: float = np.inf

    @property
    def replicas(self) -> int:
        return self.theta.shape[0]

    @property
    def lattice_shape(self):
        return self.theta.shape[1:]


def _check_state(theta: np.ndarray, guard: float):
    if not np.all(np.isfinite(theta)):
        bad = np.argwhere(~np.isfinite(theta))[0]
        raise RuntimeError(f"non-finite spin at (replica, site...) {tuple(bad)}")
    if guard < np.inf:
        over = np.abs(theta) >= guard
        if over.any():
            bad = np.argwhere(over)[0]
            raise RuntimeError(
                f"spin escaped guard box |theta| < {guard} at (replica, site...) "
                f"{tuple(bad)}; the integration step is too coarse"
            )


def sample_initial(profile: InitialProfile, n_sites: int, seed: int,
                   replicas: int = 1, dim: int = 1,
                   guard_bound: float | None = None) -> ParticleState:
    """Product sampling of theta_i from the physical density at x = i/N.

    The profile is trigonometrically interpolated from its M-site grid to
    the N lattice positions; each site then draws by inverse CDF on the
    theta cells (uniform within a cell, so grid moments are reproduced
    exactly in expectation).  Deterministic in (seed, replicas).
    """
    grid = profile.grid
    if guard_bound is None:
        guard_bound = 2.0 * grid.theta_max
    if dim == 2 and profile.m_sites != 1:
        raise ValueError("dim-2 sampling supports x-constant profiles only")
    lattice = (n_sites,) * dim
    n_lattice = int(np.prod(lattice))

    if profile.m_sites == 1:
        site_rows = profile.values  # shared row
    elif profile.m_sites == n_sites:
        site_rows = profile.values
    else:
        site_rows = np.clip(fourier_resample(profile.values, n_sites, axis=0),
                            0.0, None)

    cell_mass = site_rows * grid.gibbs_weights
    cdf = np.cumsum(cell_mass, axis=1)
    totals = cdf[:, -1:]
    if np.any(totals <= 0):
        raise ValueError("interpolated profile slice has no mass")

    uniforms = counter_stream(seed, TAG_INIT, 0).random((replicas, n_lattice))
    theta = np.empty((replicas, n_lattice))
    shared = site_rows.shape[0] == 1
    for site in range(1 if shared else n_lattice):
        row_cdf = cdf[0] if shared else cdf[site]
        total = row_cdf[-1]
        u = uniforms[:, :] * total if shared else uniforms[:, site] * total
        j = np.searchsorted(row_cdf, u, side="left")
        j = np.clip(j, 0, grid.n_points - 1)
        prev = np.where(j > 0, row_cdf[j - 1], 0.0)
        w = row_cdf[j] - prev
        frac = np.where(w > 0, (u - prev) / np.maximum(w, 1e-300), 0.5)
        draw = grid.nodes[j] + (frac - 0.5) * grid.cell_widths[j]
        if shared:
            theta[:, :] = draw
            break
        theta[:, site] = draw
    theta = theta.reshape((replicas,) + lattice)
    _check_state(theta, guard_bound)
    return ParticleState(theta=theta, time=0.0, step=0, seed=seed,
                         guard_bound=guard_bound)


def _tamed_increment(drift: np.ndarray, dt: float, taming: bool) -> np.ndarray:
    if taming:
        return dt * drift / (1.0 + dt * np.abs(drift))
    return dt * drift


def _advance(state: ParticleState, drift: np.ndarray, dt: float,
             noise_scale: float, taming: bool) -> ParticleState:
    inc = _tamed_increment(drift, dt, taming)
    if noise_scale > 0:
        xi = counter_stream(state.seed, TAG_DYNAMICS,
                            state.step).standard_normal(state.theta.shape)
        inc = inc + noise_scale * np.sqrt(dt) * xi
    theta = state.theta + inc
    _check_state(theta, state.guard_bound)
    return replace(state, theta=theta, time=state.time + dt, step=state.step + 1)


def step_coupled(state: ParticleState, table: CirculantForceTable,
                 potential: Potential, dt: float, noise_scale: float = 1.0,
                 taming: bool = True) -> ParticleState:
    """One step of the interacting system."""
    force = convolve_field(table, state.theta)
    drift = force - potential.psi_prime(state.theta)
    return _advance(state, drift, dt, noise_scale, taming)


class SiteDriftSampler:
    """Drift field resampled to the particle lattice, linear in time."""

    def __init__(self, drift_field: SpaceDriftField, n_sites: int, dim: int = 1):
        if dim == 2 and drift_field.m_sites != 1:
            raise ValueError("dim-2 decoupled runs need an x-constant drift field")
        self.times = drift_field.times
        self.dim = dim
        self.n_sites = n_sites
        if drift_field.m_sites == 1:
            vals = np.repeat(drift_field.values, n_sites, axis=0)
        elif drift_field.m_sites == n_sites:
            vals = drift_field.values
        else:
            vals = fourier_resample(drift_field.values, n_sites, axis=0)
        lattice = (n_sites,) * dim
        if dim == 2:
            vals = np.broadcast_to(vals[:, None, :], lattice + (self.times.size,))
            self.values = np.asarray(vals)
        else:
            self.values = vals  # (n_sites, n_times)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> np.ndarray:
        if t < -1e-12 or t > self.t_end * (1.0 + 1e-9) + 1e-12:
            raise ValueError(f"drift field does not cover time {t!r}")
        i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1,
                        0, self.times.size - 2))
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.values[..., i] + w * self.values[..., i + 1]


def step_decoupled(state: ParticleState, sampler: SiteDriftSampler,
                   potential: Potential, dt: float, noise_scale: float = 1.0,
                   taming: bool = True) -> ParticleState:
    """One step of the reference system with sitewise deterministic drift."""
    h = sampler.at(state.time)
    drift = h - potential.psi_prime(state.theta)
    return _advance(state, drift, dt, noise_scale, taming)


@dataclass
class TrajectoryResult:
    """Snapshots plus (optionally) per-step paths at retained sites."""

    config: SimConfig
    mode: str
    snapshots: dict          # time -> theta array (replicas, *lattice)
    path_times: np.ndarray | None = None
    path_sites: np.ndarray | None = None
    theta_paths: np.ndarray | None = None  # (n_times, replicas, n_kept)
    force_paths: np.ndarray | None = None  # coupled runs only

    def snapshot(self, t: float) -> np.ndarray:
        for key, value in self.snapshots.items():
            if abs(key - t) <= 1e-9 * max(1.0, abs(t)):
                return value
        raise KeyError(f"no snapshot at time {t!r}")


def run_trajectory(config: SimConfig, mode: str, profile: InitialProfile,
                   table: CirculantForceTable | None = None,
                   drift_field: SpaceDriftField | None = None,
                   snapshot_times=(), path_sites=None,
                   potential: Potential | None = None) -> TrajectoryResult:
    """Integrate the chosen dynamics, hitting every snapshot time exactly.

    ``path_sites`` may be None (no path retention), "all", or an array of
    flat site indices; retained paths record theta (and, for the coupled
    system, the interaction force) at every step.
    """
    if mode not in ("coupled", "decoupled"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "coupled" and table is None:
        raise ValueError("coupled mode needs a force table")
    if mode == "decoupled" and drift_field is None:
        raise ValueError("decoupled mode needs a drift field")
    pot = potential if potential is not None else profile.grid.potential

    snaps = sorted(float(t) for t in snapshot_times)
    if snaps and snaps[0] < 0:
        raise ValueError("snapshot times must be nonnegative")
    t_final = snaps[-1] if snaps else 0.0
    if t_final > config.t_end * (1.0 + 1e-9):
        raise ValueError("snapshots exceed the configured horizon")

    state = sample_initial(profile, config.n_sites, config.seed,
                           replicas=config.replicas, dim=config.dim,
                           guard_bound=2.0 * profile.grid.theta_max)
    sampler = None
    if mode == "decoupled":
        if drift_field.times[-1] < t_final * (1.0 - 1e-9):
            raise ValueError("drift field does not cover the trajectory horizon")
        sampler = SiteDriftSampler(drift_field, config.n_sites, config.dim)

    keep = None
    if path_sites is not None:
        n_lattice = int(np.prod(state.lattice_shape))
        if isinstance(path_sites, str) and path_sites == "all":
            keep = np.arange(n_lattice)
        else:
            keep = np.asarray(path_sites, dtype=int)
            if keep.size == 0 or keep.min() < 0 or keep.max() >= n_lattice:
                raise ValueError("path site indices out of range")

    snapshots = {0.0: state.theta.copy()}
    path_times, theta_paths, force_paths = [], [], []

    def record(t):
        flat = state.theta.reshape(state.replicas, -1)
        path_times.append(t)
        theta_paths.append(flat[:, keep].copy())
        if mode == "coupled":
            force = convolve_field(table, state.theta)
            force_paths.append(force.reshape(state.replicas, -1)[:, keep].copy())

    if keep is not None:
        record(0.0)

    boundaries = [t for t in snaps if t > 0]
    t_prev = 0.0
    for t_next in boundaries:
        n_sub = max(1, int(np.ceil((t_next - t_prev) / config.dt - 1e-9)))
        delta = (t_next - t_prev) / n_sub
        for _ in range(n_sub):
            if mode == "coupled":
                state = step_coupled(state, table, pot, delta,
                                     config.noise_scale, config.taming)
            else:
                state = step_decoupled(state, sampler, pot, delta,
                                       config.noise_scale, config.taming)
            if keep is not None:
                record(state.time)
        state = replace(state, time=t_next)  # pin against float drift
        snapshots[t_next] = state.theta.copy()
        t_prev = t_next

    result = TrajectoryResult(config=config, mode=mode, snapshots=snapshots)
    if keep is not None:
        result.path_times = np.asarray(path_times)
        result.path_sites = keep
        result.theta_paths = np.stack(theta_paths)
        if force_paths:
            result.force_paths = np.stack(force_paths)
    return result
