"""Interaction kernel on the unit torus and its circulant lattice form.

The pair force between lattice sites i and j is J((j-i)/N) / N^d; because
the kernel is even this lattice sum is a circulant convolution, evaluated
here through real FFTs.  The same table doubles as the quadrature rule for
the torus integral turning first-moment fields into drift fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .potential import ThetaGrid, weighted_inner

__all__ = [
    "InteractionKernel",
    "CirculantForceTable",
    "build_table",
    "convolve_field",
    "contraction_constants",
    "fourier_resample",
    "fourier_eval",
]

KERNEL_FORMS = ("constant", "cosine", "wrapped_gaussian")
_GAUSS_IMAGES = 20  # periodization images; e^{-(20/w)^2/2} is far below eps for w <= 1


@dataclass(frozen=True)
class InteractionKernel:
    """Smooth, symmetric, nonnegative interaction J on the d-torus.

    Closed forms only, so evenness and smoothness hold exactly:

    * ``constant``:          J(x) = a
    * ``cosine``:            J(x) = a * prod_e (1 + cos 2 pi x_e)
    * ``wrapped_gaussian``:  J(x) = a * prod_e sum_m exp(-(x_e+m)^2 / 2 w^2)
    """

    form: str
    amplitude: float
    width: float = 0.25
    dim: int = 1

    def __post_init__(self):
        if self.form not in KERNEL_FORMS:
            raise ValueError(f"unknown kernel form {self.form!r}")
        if self.amplitude < 0:
            raise ValueError("kernel amplitude must be nonnegative")
        if self.dim not in (1, 2):
            raise ValueError("kernel dimension must be 1 or 2")
        if self.form == "wrapped_gaussian" and not 0 < self.width <= 1.0:
            raise ValueError("wrapped_gaussian width must lie in (0, 1]")

    def __call__(self, x) -> np.ndarray:
        """Evaluate J at torus points.

        For dim == 1, ``x`` is any array of coordinates; for dim == 2 the
        last axis must hold the two components.
        """
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            comps = x[..., None]
        else:
            if x.shape[-1] != 2:
                raise ValueError("dim-2 kernel expects coordinate pairs")
            comps = x
        comps = comps - np.round(comps)  # fold to [-1/2, 1/2]
        if self.form == "constant":
            factors = np.ones_like(comps)
        elif self.form == "cosine":
            factors = 1.0 + np.cos(2.0 * np.pi * comps)
        else:
            m = np.arange(-_GAUSS_IMAGES, _GAUSS_IMAGES + 1, dtype=float)
            z = (comps[..., None] + m) / self.width
            factors = np.exp(-0.5 * z * z).sum(axis=-1)
        return self.amplitude * np.prod(factors, axis=-1)


@dataclass(frozen=True)
class CirculantForceTable:
    """Lattice samples J(j/N)/N^d with their cached real-FFT spectrum."""

    n_sites: int
    dim: int
    values: np.ndarray
    spectrum: np.ndarray

    @property
    def lattice_shape(self):
        return (self.n_sites,) * self.dim


def build_table(kernel: InteractionKernel, n_sites: int) -> CirculantForceTable:
    """Tabulate J(j/N)/N^d over the discrete torus and cache its spectrum.

    Lattice distances are folded to [0, 1/2] before evaluation so the table
    is exactly even under index reversal (hence a real spectrum).
    """
    if n_sites < 2:
        raise ValueError("lattice needs at least 2 sites")
    idx = np.arange(n_sites)
    folded = np.minimum(idx, n_sites - idx) / n_sites
    if kernel.dim == 1:
        values = kernel(folded) / n_sites
    else:
        xa, xb = np.meshgrid(folded, folded, indexing="ij")
        values = kernel(np.stack([xa, xb], axis=-1)) / n_sites**2
    spectrum = np.fft.rfftn(values)
    return CirculantForceTable(n_sites, kernel.dim, values, spectrum)


def convolve_field(table: CirculantForceTable, field) -> np.ndarray:
    """Circulant convolution out[i] = sum_j J((j-i)/N) v[j] / N^d via FFT.

    ``field`` may carry arbitrary leading batch axes; the trailing axes must
    match the lattice shape.
    """
    v = np.asarray(field, dtype=float)
    lat = table.lattice_shape
    if v.shape[-table.dim:] != lat:
        raise ValueError(f"field shape {v.shape} does not end in lattice {lat}")
    axes = tuple(range(v.ndim - table.dim, v.ndim))
    spec = np.fft.rfftn(v, axes=axes) * table.spectrum
    return np.fft.irfftn(spec, s=lat, axes=axes)


def contraction_constants(kernel: InteractionKernel, grid: ThetaGrid,
                          rho0_norms) -> tuple[float, float]:
    """Short-time contraction constants of the drift update map.

    Returns ``(C_J, C_J')`` with ``C_J = int J^2 * int theta^2 e^{-2 psi}``
    and ``C_J' = sup_x ||rho0(x,.)||^2 * C_J``.
    """
    rho0_norms = np.asarray(rho0_norms, dtype=float)
    if not np.all(np.isfinite(rho0_norms)):
        raise ValueError("initial-profile norms must be finite")
    n_quad = 1024
    x = np.arange(n_quad) / n_quad
    if kernel.dim == 1:
        j_sq = float(np.mean(kernel(x) ** 2))
    else:
        xa, xb = np.meshgrid(x, x, indexing="ij")
        j_sq = float(np.mean(kernel(np.stack([xa, xb], axis=-1)) ** 2))
    second_moment = weighted_inner(grid, grid.nodes, grid.nodes)
    c_j = j_sq * second_moment
    c_j_prime = float(np.max(rho0_norms) ** 2) * c_j
    return c_j, c_j_prime


def fourier_resample(values, n_out: int, axis: int = 0) -> np.ndarray:
    """Trigonometric resampling of a smooth periodic field to n_out sites."""
    values = np.asarray(values, dtype=float)
    if values.shape[axis] == n_out:
        return values.copy()
    return signal.resample(values, n_out, axis=axis)


def fourier_eval(values, x: float, axis: int = 0) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic samples at x in [0,1)."""
    values = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    m = values.shape[0]
    coeff = np.fft.rfft(values, axis=0) / m
    k = np.arange(coeff.shape[0])
    phase = np.exp(2j * np.pi * k * x)
    weights = np.full(coeff.shape[0], 2.0)
    weights[0] = 1.0
    if m % 2 == 0:
        # Nyquist bin: the real interpolant carries cos(pi m x) only
        weights[-1] = 1.0
        phase[-1] = np.cos(np.pi * m * x)
    shape = (-1,) + (1,) * (values.ndim - 1)
    out = np.sum((weights * phase).reshape(shape) * coeff, axis=0)
    return np.real(out)
