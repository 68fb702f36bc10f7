"""Numerical toolkit for local mean-field spin dynamics on the torus.

Solves the self-consistent single-spin evolution (Fokker-Planck slices
coupled through an interaction-kernel drift) by fixed-point iteration,
simulates the corresponding N-site interacting and decoupled particle
systems, and measures their agreement with the solved limit through
bounded-Lipschitz dictionary distances and entropy-production statistics.
"""

from .potential import (Potential, ThetaGrid, normalize_density, tilted_density,
                        weighted_inner)
from .kernel import (CirculantForceTable, InteractionKernel, build_table,
                     contraction_constants, convolve_field, fourier_eval,
                     fourier_resample)
from .fokker_planck import (BoundReport, DensityPath, DriftPath, McEstimate,
                            SpectralDecomposition, bridge_mc_kernel,
                            bridge_mc_marginal_mass, norm_growth_check,
                            solve_fp, spectral_oracle, stability_check)
from .mckean_vlasov import (InitialProfile, PicardNoConvergence, PicardResult,
                            SpaceDensityField, SpaceDriftField, apply_phi,
                            contraction_diagnostic, phi1, phi2, picard_solve)
from .particle import (ParticleState, SimConfig, TrajectoryResult,
                       run_trajectory, sample_initial, step_coupled,
                       step_decoupled)
from .measures import (EmpiricalMeasure, TestDictionary, bl_distance,
                       bl_distance_marginal, chaos_samples, drift_mismatch,
                       marginal_chaos_test, relative_entropy_product)
from .config import ConfigError, ExperimentConfig

__version__ = "0.1.0"
