"""Experiment configuration: TOML keys, validation, object builders.

Committed config files are the reproducibility unit: every artifact a run
emits is a deterministic function of the parsed configuration, including
all random seeds.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .kernel import InteractionKernel
from .mckean_vlasov import InitialProfile
from .potential import Potential, ThetaGrid

__all__ = ["ConfigError", "ExperimentConfig"]

PROFILE_KINDS = ("tilted_cosine", "uniform")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


def _get(section: dict, key: str, default, caster):
    raw = section.get(key, default)
    try:
        return caster(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


@dataclass
class ExperimentConfig:
    # potential / grid
    potential_coefficients: list = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0, 1.0])
    theta_max: float = 2.2
    n_theta: int = 256
    m_sites: int = 32
    # interaction
    kernel_form: str = "cosine"
    kernel_amplitude: float = 0.5
    kernel_width: float = 0.25
    dim: int = 1
    # time
    t_end: float = 1.0
    dt_pde: float = 1e-3
    dt_sde: float = 1e-3
    n_times: int = 101
    # picard
    picard_tol: float = 1e-8
    picard_max_iter: int = 25
    # simulation sweeps
    n_list: list = field(default_factory=lambda: [64, 256, 1024])
    n_seeds: int = 8
    seed: int = 2023
    snapshot_times: list = field(default_factory=lambda: [0.25, 0.5, 1.0])
    # initial profile
    profile_kind: str = "tilted_cosine"
    profile_amplitude: float = 1.0
    # tagged-coordinate test
    chaos_k: int = 2
    chaos_sites: list = field(default_factory=lambda: [0.25, 0.75])
    chaos_replicas: int = 2000
    # output
    output_directory: str = "out"
    output_format: str = "csv"

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        pot = data.get("potential", {})
        grid = data.get("grid", {})
        ker = data.get("kernel", {})
        system = data.get("system", {})
        time = data.get("time", {})
        picard = data.get("picard", {})
        sim = data.get("sim", {})
        snaps = data.get("snapshots", {})
        prof = data.get("profile", {})
        chaos = data.get("chaos", {})
        out = data.get("output", {})
        d = cls.__new__(cls)  # fill fields, then validate once
        d.potential_coefficients = list(pot.get("coefficients", [0.0, 0.0, 0.0, 0.0, 1.0]))
        d.theta_max = _get(grid, "theta_max", 2.2, float)
        d.n_theta = _get(grid, "n_theta", 256, int)
        d.m_sites = _get(grid, "m_sites", 32, int)
        d.kernel_form = str(ker.get("form", "cosine"))
        d.kernel_amplitude = _get(ker, "amplitude", 0.5, float)
        d.kernel_width = _get(ker, "width", 0.25, float)
        d.dim = _get(system, "dim", 1, int)
        d.t_end = _get(time, "T", 1.0, float)
        d.dt_pde = _get(time, "dt_pde", 1e-3, float)
        d.dt_sde = _get(time, "dt_sde", 1e-3, float)
        d.n_times = _get(time, "n_times", 101, int)
        d.picard_tol = _get(picard, "tol", 1e-8, float)
        d.picard_max_iter = _get(picard, "max_iter", 25, int)
        d.n_list = [int(n) for n in sim.get("N", [64, 256, 1024])]
        d.n_seeds = _get(sim, "n_seeds", 8, int)
        d.seed = _get(sim, "seed", 2023, int)
        d.snapshot_times = [float(t) for t in snaps.get("times", [0.25, 0.5, 1.0])]
        d.profile_kind = str(prof.get("kind", "tilted_cosine"))
        d.profile_amplitude = _get(prof, "amplitude", 1.0, float)
        d.chaos_k = _get(chaos, "k", 2, int)
        d.chaos_sites = [float(x) for x in chaos.get("sites", [0.25, 0.75])]
        d.chaos_replicas = _get(chaos, "replicas", 2000, int)
        d.output_directory = str(out.get("directory", "out"))
        d.output_format = str(out.get("format", "csv"))
        d.validate()
        return d

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = _toml.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self):
        if self.picard_tol <= 0:
            raise ConfigError("picard.tol must be positive")
        if self.picard_max_iter < 1:
            raise ConfigError("picard.max_iter must be at least 1")
        for name, value in (("time.T", self.t_end), ("time.dt_pde", self.dt_pde),
                            ("time.dt_sde", self.dt_sde)):
            if value <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_times < 2:
            raise ConfigError("time.n_times must be at least 2")
        if not self.n_list:
            raise ConfigError("sim.N must be a nonempty list")
        if sorted(self.n_list) != list(self.n_list):
            raise ConfigError("sim.N must be sorted ascending")
        if min(self.n_list) < 2:
            raise ConfigError("sim.N entries must be at least 2")
        if self.n_seeds < 1:
            raise ConfigError("sim.n_seeds must be at least 1")
        if self.seed < 0:
            raise ConfigError("sim.seed must be nonnegative")
        if self.dim not in (1, 2):
            raise ConfigError("system.dim must be 1 or 2")
        if self.kernel_form not in ("constant", "cosine", "wrapped_gaussian"):
            raise ConfigError(f"unknown kernel.form {self.kernel_form!r}")
        if self.kernel_amplitude < 0:
            raise ConfigError("kernel.amplitude must be nonnegative")
        if self.profile_kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown profile.kind {self.profile_kind!r}")
        if not self.snapshot_times or any(t < 0 for t in self.snapshot_times):
            raise ConfigError("snapshots.times must be nonnegative")
        if any(t > self.t_end * (1 + 1e-12) for t in self.snapshot_times):
            raise ConfigError("snapshots.times must not exceed time.T")
        if sorted(self.snapshot_times) != list(self.snapshot_times):
            raise ConfigError("snapshots.times must be sorted")
        if not 1 <= self.chaos_k <= 3:
            raise ConfigError("chaos.k must be 1, 2 or 3")
        if len(self.chaos_sites) != self.chaos_k:
            raise ConfigError("chaos.sites must list exactly chaos.k sites")
        if len(set(self.chaos_sites)) != len(self.chaos_sites):
            raise ConfigError("chaos.sites must be distinct")
        if self.chaos_replicas < 1000:
            raise ConfigError("chaos.replicas must be at least 1000")
        if self.output_format not in ("csv", "json"):
            raise ConfigError("output.format must be 'csv' or 'json'")
        # grid / potential consistency is checked by the builders

    # builders ------------------------------------------------------------

    def build_potential(self) -> Potential:
        try:
            return Potential(np.asarray(self.potential_coefficients, dtype=float))
        except ValueError as exc:
            raise ConfigError(f"potential.coefficients: {exc}") from exc

    def build_grid(self, potential: Potential | None = None) -> ThetaGrid:
        pot = potential if potential is not None else self.build_potential()
        try:
            return ThetaGrid(pot, self.theta_max, self.n_theta)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def build_kernel(self) -> InteractionKernel:
        try:
            return InteractionKernel(self.kernel_form, self.kernel_amplitude,
                                     self.kernel_width, self.dim)
        except ValueError as exc:
            raise ConfigError(f"kernel: {exc}") from exc

    def build_profile(self, grid: ThetaGrid) -> InitialProfile:
        if self.profile_kind == "uniform":
            return InitialProfile.uniform(grid, self.m_sites)
        return InitialProfile.tilted_cosine(grid, self.m_sites,
                                            self.profile_amplitude)

    def field_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_times)
