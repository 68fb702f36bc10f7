import numpy as np
import pytest

from localmf import (InitialProfile, InteractionKernel, Potential, ThetaGrid,
                     build_table, normalize_density, weighted_inner)
from localmf.mckean_vlasov import SpaceDensityField, SpaceDriftField
from localmf.measures import (EmpiricalMeasure, TestDictionary, bl_distance,
                              bl_distance_marginal, chaos_samples,
                              drift_mismatch, marginal_chaos_test,
                              relative_entropy_product)
from localmf.particle import SimConfig, run_trajectory, sample_initial

# KL(tilt 0.8 || flat) = b m_b - ln Z_b + ln Z_0, adaptive quadrature
KL_TILT_08 = 0.074194234614054274787


@pytest.fixture(scope="module")
def grid():
    return ThetaGrid(Potential([0, 0, 0, 0, 1.0]), 2.2, 256)


@pytest.fixture(scope="module")
def dictionary():
    return TestDictionary.build()


def field_from_profile(grid, profile, times):
    vals = np.repeat(profile.values[:, None, :], len(times), axis=1)
    return SpaceDensityField(grid, np.asarray(times, dtype=float), vals)


class TestDictionaryProperties:
    def test_bounded_by_one(self, dictionary):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, 400)
        theta = rng.uniform(-6, 6, 400)
        vals = dictionary.member_values(x, theta)
        assert np.max(np.abs(vals)) <= 1.0 + 1e-12

    def test_one_lipschitz_on_dense_grid(self, dictionary):
        # finite differences along both coordinates on a fine sample grid
        x = np.linspace(0, 1, 401)
        theta = np.linspace(-3, 3, 401)
        for axis, (xa, ta, xb, tb) in enumerate([
                (x[:-1], np.full(400, 0.37), x[1:], np.full(400, 0.37)),
                (np.full(400, 0.21), theta[:-1], np.full(400, 0.21), theta[1:])]):
            va = dictionary.member_values(xa, ta)
            vb = dictionary.member_values(xb, tb)
            step = (x[1] - x[0]) if axis == 0 else (theta[1] - theta[0])
            slopes = np.abs(vb - va) / step
            assert np.max(slopes) <= 1.0 + 1e-6

    def test_member_count_default(self, dictionary):
        assert dictionary.n_members == 9 * 18


class TestBlDistance:
    def test_quadrature_atoms_reproduce_field(self, grid, dictionary):
        # place one equal-mass atom per selected cell, with the field built to
        # carry exactly the same cell masses: the dictionary cannot tell the
        # two apart beyond roundoff
        m_sites, k_cells = 16, 16
        j0 = grid.n_points // 2 - k_cells // 2
        cells = np.arange(j0, j0 + k_cells)
        vals = np.zeros((m_sites, grid.n_points))
        for m in range(m_sites):
            vals[m, cells] = 1.0 / (k_cells * grid.gibbs_weights[cells])
        field = vals  # each slice has unit mass by construction
        xs = np.repeat(np.arange(m_sites) / m_sites, k_cells)
        thetas = np.tile(grid.nodes[cells], m_sites)
        measure = EmpiricalMeasure(xs, thetas)
        assert bl_distance(measure, grid, field, dictionary) < 1e-10

    def test_detects_shifted_density(self, grid, dictionary):
        profile = InitialProfile.from_tilts(grid, [0.0] * 16)
        shift = 0.5
        physical = profile.values[0] * grid.gibbs_factor
        shifted_physical = np.interp(grid.nodes - shift, grid.nodes, physical,
                                     left=0.0, right=0.0)
        shifted_rel = normalize_density(grid, shifted_physical / grid.gibbs_factor)
        field = np.tile(shifted_rel, (16, 1))
        state = sample_initial(profile, 10_000, seed=3)
        measure = EmpiricalMeasure.from_lattice(state.theta[0])
        assert bl_distance(measure, grid, field, dictionary) >= 0.05

    def test_iid_sampling_noise_scale(self, grid, dictionary):
        profile = InitialProfile.tilted_cosine(grid, 32, 1.0)
        n = 10_000
        dists = []
        for seed in range(20):
            state = sample_initial(profile, n, seed=seed)
            measure = EmpiricalMeasure.from_lattice(state.theta[0])
            dists.append(bl_distance(measure, grid, profile.values, dictionary))
        bound = 3.0 * np.sqrt(np.log(dictionary.n_members) / n)
        assert np.mean(dists) < bound

    def test_bounded_by_two_and_relabel_invariant(self, grid, dictionary):
        rng = np.random.default_rng(5)
        measure = EmpiricalMeasure(rng.uniform(0, 1, 200), rng.uniform(-2, 2, 200))
        profile = InitialProfile.tilted_cosine(grid, 16, 1.0)
        d = bl_distance(measure, grid, profile.values, dictionary)
        assert d <= 2.0
        perm = rng.permutation(200)
        shuffled = EmpiricalMeasure(measure.x[perm], measure.theta[perm])
        assert bl_distance(shuffled, grid, profile.values, dictionary) == d


class TestDriftMismatch:
    def _coupled_run(self, grid, n, seed=0, amplitude=0.5):
        profile = InitialProfile.tilted_cosine(grid, 8, 1.0)
        table = build_table(InteractionKernel("cosine", amplitude), n)
        cfg = SimConfig(n_sites=n, t_end=0.5, dt=1e-2, seed=seed)
        res = run_trajectory(cfg, "coupled", profile, table=table,
                             snapshot_times=[0.5], path_sites="all")
        return res, table

    def test_zero_when_everything_vanishes(self, grid):
        profile = InitialProfile.uniform(grid, 4)
        times = np.linspace(0, 0.5, 6)
        zeros = SpaceDriftField.zeros(4, times)
        cfg = SimConfig(n_sites=8, t_end=0.5, dt=1e-2, seed=1)
        res = run_trajectory(cfg, "decoupled", profile, drift_field=zeros,
                             snapshot_times=[0.5], path_sites="all")
        table = build_table(InteractionKernel("constant", 0.0), 8)
        assert drift_mismatch(res, zeros, table=table) == 0.0

    def test_requires_paths(self, grid):
        profile = InitialProfile.tilted_cosine(grid, 8, 1.0)
        table = build_table(InteractionKernel("cosine", 0.5), 8)
        cfg = SimConfig(n_sites=8, t_end=0.2, dt=1e-2, seed=2)
        res = run_trajectory(cfg, "coupled", profile, table=table,
                             snapshot_times=[0.2])
        times = np.linspace(0, 0.2, 3)
        with pytest.raises(ValueError, match="paths"):
            drift_mismatch(res, SpaceDriftField.zeros(8, times))

    def test_deterministic(self, grid):
        res1, _ = self._coupled_run(grid, 16, seed=7)
        res2, _ = self._coupled_run(grid, 16, seed=7)
        times = np.linspace(0, 0.5, 6)
        field = SpaceDriftField.zeros(8, times)
        assert drift_mismatch(res1, field) == drift_mismatch(res2, field)

    def test_constant_offset_inflates(self, grid):
        res, _ = self._coupled_run(grid, 32, seed=8)
        times = np.linspace(0, 0.5, 6)
        base = SpaceDriftField.zeros(8, times)
        shifted = SpaceDriftField.constant(1.0, 8, times)
        t_end = 0.5
        assert drift_mismatch(res, shifted) >= t_end / 2.0

    def test_stored_force_matches_recomputation(self, grid):
        res, table = self._coupled_run(grid, 16, seed=9)
        times = np.linspace(0, 0.5, 6)
        field = SpaceDriftField.zeros(8, times)
        via_stored = drift_mismatch(res, field)
        res_no_force = res
        res_no_force.force_paths = None
        via_theta = drift_mismatch(res_no_force, field, table=table)
        assert via_stored == pytest.approx(via_theta, rel=1e-12)


class TestRelativeEntropy:
    def test_zero_for_equal_profiles(self, grid):
        prof = InitialProfile.tilted_cosine(grid, 8, 1.0)
        assert relative_entropy_product(prof, prof) == 0.0

    def test_closed_form_tilted_pair(self, grid):
        f0 = InitialProfile.from_tilts(grid, [0.8])
        rho0 = InitialProfile.from_tilts(grid, [0.0])
        assert relative_entropy_product(f0, rho0) == pytest.approx(
            KL_TILT_08, abs=1e-9)

    def test_nonnegative_random_pairs(self, grid):
        rng = np.random.default_rng(11)
        for _ in range(10):
            f0 = InitialProfile.from_tilts(grid, rng.uniform(-1, 1, 6))
            r0 = InitialProfile.from_tilts(grid, rng.uniform(-1, 1, 6))
            assert relative_entropy_product(f0, r0) >= -1e-12

    def test_support_violation_raises(self, grid):
        f_vals = np.zeros((1, grid.n_points))
        j = grid.n_points // 2
        f_vals[0, j] = 1.0 / grid.gibbs_weights[j]
        f0 = InitialProfile(grid, f_vals)
        r_vals = np.zeros((1, grid.n_points))
        r_vals[0, j + 4] = 1.0 / grid.gibbs_weights[j + 4]
        r0 = InitialProfile(grid, r_vals)
        with pytest.raises(ValueError, match="continuity"):
            relative_entropy_product(f0, r0)


class TestMarginalChaos:
    def test_k1_equals_marginal_distance(self, grid, dictionary):
        profile = InitialProfile.tilted_cosine(grid, 32, 1.0)
        times = np.array([0.0, 1.0])
        field = field_from_profile(grid, profile, times)
        rng = np.random.default_rng(13)
        samples = rng.uniform(-1.5, 1.5, size=(1500, 1))
        site = np.array([0.25])
        joint = marginal_chaos_test(samples, field, site, 1.0, dictionary)
        slice_at = profile.values[8]  # x = 0.25 on the 32-site grid
        marginal = bl_distance_marginal(samples[:, 0], grid, slice_at, dictionary)
        assert joint == pytest.approx(marginal, rel=1e-12)

    def test_duplicate_sites_rejected(self, grid, dictionary):
        profile = InitialProfile.tilted_cosine(grid, 8, 1.0)
        field = field_from_profile(grid, profile, [0.0, 1.0])
        samples = np.zeros((1200, 2))
        with pytest.raises(ValueError, match="distinct"):
            marginal_chaos_test(samples, field, [0.25, 0.25], 1.0, dictionary)

    def test_replica_floor_enforced(self, grid, dictionary):
        profile = InitialProfile.tilted_cosine(grid, 8, 1.0)
        field = field_from_profile(grid, profile, [0.0, 1.0])
        with pytest.raises(ValueError, match="replicas"):
            marginal_chaos_test(np.zeros((10, 2)), field, [0.25, 0.75], 1.0,
                                dictionary)

    def test_independent_samples_near_k1_floor(self, grid, dictionary):
        # samples drawn independently per coordinate: the joint distance
        # stays within 3x the single-coordinate noise floor
        profile = InitialProfile.from_tilts(grid, [0.4, -0.4])
        field = field_from_profile(grid, profile, [0.0, 1.0])
        # independent draws from the two marginals via the sampler
        half = InitialProfile.from_tilts(grid, [0.4])
        other = InitialProfile.from_tilts(grid, [-0.4])
        sa = sample_initial(half, 2, seed=21, replicas=2000).theta[:, 0]
        sb = sample_initial(other, 2, seed=22, replicas=2000).theta[:, 0]
        samples = np.stack([sa, sb], axis=1)
        sites = np.array([0.0, 0.5])
        joint = marginal_chaos_test(samples, field, sites, 1.0, dictionary)
        floor = max(
            marginal_chaos_test(samples[:, [0]], field, sites[[0]], 1.0, dictionary),
            marginal_chaos_test(samples[:, [1]], field, sites[[1]], 1.0, dictionary))
        assert joint <= 3.0 * floor

    def test_chaos_samples_indexing(self, grid):
        profile = InitialProfile.tilted_cosine(grid, 8, 1.0)
        table = build_table(InteractionKernel("cosine", 0.5), 16)
        cfg = SimConfig(n_sites=16, t_end=0.1, dt=1e-2, seed=23, replicas=3)
        res = run_trajectory(cfg, "coupled", profile, table=table,
                             snapshot_times=[0.1])
        samples = chaos_samples(res, np.array([0.25, 0.75]), 0.1)
        snap = res.snapshot(0.1)
        assert np.array_equal(samples, snap[:, [4, 12]])
        with pytest.raises(ValueError, match="collide"):
            chaos_samples(res, np.array([0.25, 0.26]), 0.1)
