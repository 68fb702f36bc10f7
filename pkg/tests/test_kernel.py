import numpy as np
import pytest

from localmf import (InteractionKernel, Potential, ThetaGrid, build_table,
                     contraction_constants, convolve_field, fourier_eval,
                     fourier_resample)

# int eta^2 exp(-2 eta^4) deta, adaptive quadrature
SECOND_MOMENT_QUARTIC = 0.36431856535369043398


def naive_convolve(values, v):
    """O(N^2) (or N^4 in d=2) reference for the circulant force sum."""
    if v.ndim == 1:
        n = v.size
        out = np.zeros(n)
        for i in range(n):
            for j in range(n):
                out[i] += values[(j - i) % n] * v[j]
        return out
    n = v.shape[0]
    out = np.zeros_like(v)
    for i1 in range(n):
        for i2 in range(n):
            acc = 0.0
            for j1 in range(n):
                for j2 in range(n):
                    acc += values[(j1 - i1) % n, (j2 - i2) % n] * v[j1, j2]
            out[i1, i2] = acc
    return out


class TestInteractionKernel:
    def test_forms_validate(self):
        with pytest.raises(ValueError):
            InteractionKernel("triangle", 1.0)
        with pytest.raises(ValueError):
            InteractionKernel("cosine", -1.0)

    @pytest.mark.parametrize("form,kw", [("constant", {}), ("cosine", {}),
                                         ("wrapped_gaussian", {"width": 0.2})])
    def test_symmetric_and_nonnegative(self, form, kw):
        kernel = InteractionKernel(form, 0.7, **kw)
        rng = np.random.default_rng(3)
        x = rng.uniform(-2, 2, size=64)
        assert np.allclose(kernel(x), kernel(-x), atol=1e-14)
        assert np.all(kernel(x) >= 0)

    def test_cosine_values(self):
        kernel = InteractionKernel("cosine", 0.5)
        assert kernel(0.0) == pytest.approx(1.0)
        assert kernel(0.5) == pytest.approx(0.0, abs=1e-15)

    def test_dim2_product_form(self):
        kernel = InteractionKernel("cosine", 1.0, dim=2)
        assert kernel(np.array([0.0, 0.0])) == pytest.approx(4.0)
        assert kernel(np.array([0.25, 0.0])) == pytest.approx(2.0)


class TestBuildTable:
    def test_constant_entries(self):
        table = build_table(InteractionKernel("constant", 0.7), 4)
        assert np.allclose(table.values, 0.7 / 4)

    def test_cosine_origin_entry(self):
        a = 0.9
        table = build_table(InteractionKernel("cosine", a), 8)
        assert table.values[0] == pytest.approx(a * 2.0 / 8)

    def test_wrapped_gaussian_periodization_oracle(self):
        a, w, n = 1.3, 0.2, 16
        table = build_table(InteractionKernel("wrapped_gaussian", a, width=w), n)
        for j in range(n):
            x = j / n
            direct = a * sum(np.exp(-0.5 * ((x + m) / w) ** 2) for m in range(-20, 21))
            assert table.values[j] == pytest.approx(direct / n, rel=1e-13)

    def test_even_symmetry_and_real_spectrum(self):
        table = build_table(InteractionKernel("wrapped_gaussian", 1.0, width=0.3), 12)
        vals = table.values
        assert np.array_equal(vals[1:], vals[1:][::-1])
        assert np.max(np.abs(table.spectrum.imag)) < 1e-15

    def test_rejects_small_lattice(self):
        with pytest.raises(ValueError):
            build_table(InteractionKernel("cosine", 1.0), 1)


class TestConvolveField:
    def test_zero_field(self):
        table = build_table(InteractionKernel("cosine", 1.0), 8)
        assert np.allclose(convolve_field(table, np.zeros(8)), 0.0)

    def test_constant_kernel_averages(self):
        table = build_table(InteractionKernel("constant", 1.0), 16)
        rng = np.random.default_rng(5)
        v = rng.normal(size=16)
        out = convolve_field(table, v)
        assert np.allclose(out, v.mean(), atol=1e-14)

    def test_matches_naive_small(self):
        table = build_table(InteractionKernel("cosine", 0.8), 6)
        rng = np.random.default_rng(6)
        v = rng.normal(size=6)
        assert np.allclose(convolve_field(table, v),
                           naive_convolve(table.values, v), atol=1e-12)

    @pytest.mark.parametrize("n", range(2, 33))
    def test_fft_equals_naive_all_small_n(self, n):
        kernel = InteractionKernel("wrapped_gaussian", 1.1, width=0.25)
        table = build_table(kernel, n)
        rng = np.random.default_rng(n)
        v = rng.normal(size=n)
        assert np.max(np.abs(convolve_field(table, v)
                             - naive_convolve(table.values, v))) < 1e-10

    def test_dim2_matches_naive(self):
        kernel = InteractionKernel("cosine", 0.6, dim=2)
        table = build_table(kernel, 5)
        rng = np.random.default_rng(11)
        v = rng.normal(size=(5, 5))
        assert np.max(np.abs(convolve_field(table, v)
                             - naive_convolve(table.values, v))) < 1e-10

    def test_linearity_and_translation_equivariance(self):
        table = build_table(InteractionKernel("cosine", 0.5), 12)
        rng = np.random.default_rng(8)
        u, v = rng.normal(size=(2, 12))
        lhs = convolve_field(table, 2.0 * u - v)
        rhs = 2.0 * convolve_field(table, u) - convolve_field(table, v)
        assert np.allclose(lhs, rhs, atol=1e-13)
        shifted = convolve_field(table, np.roll(v, 3))
        assert np.allclose(shifted, np.roll(convolve_field(table, v), 3), atol=1e-13)

    def test_sup_norm_bound(self):
        kernel = InteractionKernel("cosine", 0.5)
        table = build_table(kernel, 32)
        rng = np.random.default_rng(9)
        v = rng.normal(size=32)
        out = convolve_field(table, v)
        bound = np.max(np.abs(table.values)) * 32 * np.mean(np.abs(v))
        assert np.max(np.abs(out)) <= bound + 1e-12

    def test_batched_leading_axes(self):
        table = build_table(InteractionKernel("cosine", 0.5), 8)
        rng = np.random.default_rng(10)
        v = rng.normal(size=(3, 8))
        out = convolve_field(table, v)
        for b in range(3):
            assert np.allclose(out[b], convolve_field(table, v[b]), atol=1e-14)

    def test_shape_mismatch(self):
        table = build_table(InteractionKernel("cosine", 0.5), 8)
        with pytest.raises(ValueError):
            convolve_field(table, np.ones(7))


class TestContractionConstants:
    @pytest.fixture()
    def grid(self):
        return ThetaGrid(Potential([0, 0, 0, 0, 1.0]), 2.2, 512)

    def test_zero_kernel(self, grid):
        c, cp = contraction_constants(InteractionKernel("constant", 0.0), grid, [1.0])
        assert c == 0.0 and cp == 0.0

    def test_constant_kernel_oracle(self, grid):
        c, cp = contraction_constants(InteractionKernel("constant", 1.0), grid, [1.0])
        assert c == pytest.approx(SECOND_MOMENT_QUARTIC, abs=1e-10)
        assert cp == pytest.approx(c)

    def test_quadratic_amplitude_scaling(self, grid):
        c1, _ = contraction_constants(InteractionKernel("cosine", 1.0), grid, [1.0])
        c2, _ = contraction_constants(InteractionKernel("cosine", 2.0), grid, [1.0])
        assert c2 == pytest.approx(4.0 * c1, rel=1e-12)

    def test_profile_norm_factor(self, grid):
        kernel = InteractionKernel("cosine", 0.5)
        c, cp = contraction_constants(kernel, grid, [0.5, 2.0, 1.0])
        assert cp == pytest.approx(4.0 * c, rel=1e-12)


class TestFourierResample:
    def test_band_limited_exact(self):
        m, n = 16, 48
        x = np.arange(m) / m
        f = 1.0 + np.cos(2 * np.pi * x) - 0.5 * np.sin(2 * np.pi * 3 * x)
        out = fourier_resample(f, n)
        xf = np.arange(n) / n
        exact = 1.0 + np.cos(2 * np.pi * xf) - 0.5 * np.sin(2 * np.pi * 3 * xf)
        assert np.allclose(out, exact, atol=1e-12)

    def test_eval_matches_resample(self):
        m = 12
        rng = np.random.default_rng(2)
        f = rng.normal(size=m)
        fine = fourier_resample(f, 4 * m)
        for j in range(4 * m):
            val = fourier_eval(f, j / (4 * m))
            assert val == pytest.approx(fine[j], abs=1e-11)

    def test_eval_at_samples(self):
        m = 10
        rng = np.random.default_rng(4)
        f = rng.normal(size=m)
        for j in range(m):
            assert fourier_eval(f, j / m) == pytest.approx(f[j], abs=1e-11)
