import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dampwave.spectral import (
    BOX,
    PERIODIC,
    SpectralField,
    box_grid,
    dealiased_product,
    fourier_multiplier,
    from_function,
    inner,
    l2_norm,
    make_grid,
    nodal_l2_norm,
    pad_modal,
    partial_modes,
    sobolev_norm,
    to_modal,
    to_nodal,
    torus_grid,
    torus_volume,
    truncate_modal,
)


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    return to_modal(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))


class TestGrid:
    def test_two_torus(self):
        g = make_grid((1, 1), [64, 64], [2 * np.pi, 2 * np.pi], PERIODIC)
        assert g.size == 4096
        assert g.ndim == 2
        assert g.torus_axes == (1,)
        assert g.primed_axes == (0,)

    def test_box_line(self):
        g = make_grid((1, 0), [128], [40.0], BOX)
        x = g.nodes(0)
        assert x[0] == pytest.approx(-20.0)
        assert x[-1] < 20.0
        assert g.axis_kinds == (BOX,)

    def test_three_dimensional_split(self):
        g = torus_grid(32, split_dims=(2, 1))
        assert g.shape == (32, 32, 32)
        assert g.primed_grid().shape == (32, 32)

    def test_integer_wavenumbers_on_standard_torus(self):
        g = torus_grid(16, (1, 0))
        k = g.wavenumbers(0)
        np.testing.assert_array_equal(k, np.rint(k))
        assert set(np.abs(k[1:]).astype(int)) == set(range(1, 9))
        assert k.sum() == -8

    def test_box_wavenumber_spacing(self):
        g = box_grid(64, 40.0)
        k = np.sort(g.wavenumbers(0))
        np.testing.assert_allclose(np.diff(k), 2 * np.pi / 40.0)

    @pytest.mark.parametrize("modes", [[15], [0]])
    def test_rejects_odd_or_zero_modes(self, modes):
        with pytest.raises(ValueError):
            make_grid((1, 0), modes, [1.0], PERIODIC)

    def test_rejects_empty_split(self):
        with pytest.raises(ValueError):
            make_grid((0, 0), [], [], PERIODIC)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            make_grid((1, 0), [8], [1.0], "sphere")

    def test_refined_keeps_periodic_length(self):
        g = make_grid((1, 1), [16, 16], [20.0, 2 * np.pi], [BOX, PERIODIC]).refined(2, 2.0)
        assert g.shape == (32, 32)
        assert g.box_lengths == (40.0, 2 * np.pi)


class TestTransforms:
    def test_constant_has_single_zero_mode(self):
        g = torus_grid(16, (1, 1))
        u = to_modal(g, np.ones(g.shape))
        nz = np.argwhere(np.abs(u.modal) > 1e-12)
        np.testing.assert_array_equal(nz, [[0, 0]])
        assert u.series_coefficients[0, 0] == pytest.approx(1.0)

    def test_plane_wave_unit_mass(self):
        g = torus_grid(16, (1, 0))
        u = from_function(g, lambda x: np.exp(3j * x))
        c = u.series_coefficients
        assert c[3] == pytest.approx(1.0)
        c[3] = 0
        assert np.abs(c).max() < 1e-13

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.sampled_from([8, 16, 32]))
    def test_round_trip(self, seed, n):
        g = torus_grid(n, (1, 1))
        rng = np.random.default_rng(seed)
        f = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        back = to_nodal(to_modal(g, f))
        assert np.linalg.norm(back - f) <= 1e-13 * np.linalg.norm(f)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            to_modal(torus_grid(8, (1, 0)), np.zeros(9))
        with pytest.raises(ValueError):
            SpectralField(torus_grid(8, (1, 0)), np.zeros(9, dtype=complex))

    def test_norm_matches_quadrature(self):
        g = box_grid(256, 30.0)
        u = from_function(g, lambda x: np.exp(-(x**2)))
        # int exp(-2 x^2) dx = sqrt(pi / 2)
        assert l2_norm(u) == pytest.approx(np.sqrt(np.sqrt(np.pi / 2)), rel=1e-12)
        assert nodal_l2_norm(g, to_nodal(u)) == pytest.approx(l2_norm(u), rel=1e-12)

    def test_inner_is_conjugate_linear_in_second_slot(self):
        g = torus_grid(8, (1, 1))
        u, v = random_field(g, 1), random_field(g, 2)
        assert inner(u, 2j * v) == pytest.approx(-2j * inner(u, v))
        assert inner(u, u).real == pytest.approx(l2_norm(u) ** 2)

    def test_inner_rejects_grid_mismatch(self):
        with pytest.raises(ValueError):
            inner(random_field(torus_grid(8, (1, 0))), random_field(torus_grid(16, (1, 0))))


class TestMultipliers:
    def test_identity_symbol(self):
        g = torus_grid(16, (1, 1))
        u = random_field(g)
        v = fourier_multiplier(u, lambda k: np.ones_like(k))
        np.testing.assert_array_equal(v.modal, u.modal)

    def test_laplacian_symbol(self):
        g = torus_grid(16, (1, 0))
        u = from_function(g, lambda x: np.exp(2j * x))
        v = fourier_multiplier(u, lambda k: k**2)
        np.testing.assert_allclose(v.modal, 4 * u.modal, atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 100))
    def test_composition(self, a, b, seed):
        g = torus_grid(16, (1, 1))
        u = random_field(g, seed)
        c1 = lambda k: np.exp(1j * a * k)
        c2 = lambda k: 1 + b * k**2
        lhs = fourier_multiplier(fourier_multiplier(u, c1), c2)
        rhs = fourier_multiplier(u, lambda k: c1(k) * c2(k))
        np.testing.assert_allclose(lhs.modal, rhs.modal, rtol=1e-14, atol=1e-12)

    def test_box_only_grid_rejected(self):
        with pytest.raises(ValueError):
            fourier_multiplier(random_field(box_grid(8, 10.0)), lambda k: k)


class TestPartialModes:
    def test_single_torus_harmonic(self):
        g = torus_grid(16, (1, 1))
        u = from_function(g, lambda x, y: np.exp(1j * y) + 0 * x)
        slices = dict(partial_modes(u))
        assert {k for k, s in slices.items() if l2_norm(s) > 1e-12} == {(1,)}
        np.testing.assert_allclose(to_nodal(slices[(1,)]), 1.0, atol=1e-13)

    def test_x_prime_only(self):
        g = torus_grid(16, (1, 1))
        f = lambda x: np.cos(x) + 0.5 * np.sin(2 * x)
        u = from_function(g, lambda x, y: f(x) + 0 * y)
        slices = dict(partial_modes(u))
        assert {k for k, s in slices.items() if l2_norm(s) > 1e-12} == {(0,)}
        np.testing.assert_allclose(to_nodal(slices[(0,)]).real, f(g.primed_grid().nodes(0)), atol=1e-13)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), split=st.sampled_from([(1, 1), (1, 2), (2, 1)]))
    def test_parseval(self, seed, split):
        g = torus_grid(8, split)
        u = random_field(g, seed)
        total = sum(l2_norm(s) ** 2 for _, s in partial_modes(u)) * torus_volume(g)
        assert total == pytest.approx(l2_norm(u) ** 2, rel=1e-13)

    def test_needs_both_factors(self):
        with pytest.raises(ValueError):
            partial_modes(random_field(torus_grid(8, (1, 0))))
        with pytest.raises(ValueError):
            partial_modes(random_field(torus_grid(8, (0, 1))))


class TestSobolev:
    def test_s_zero_is_l2(self):
        u = random_field(torus_grid(16, (1, 1)))
        assert sobolev_norm(u, 0.0) == pytest.approx(l2_norm(u))

    def test_plane_wave_h1(self):
        g = torus_grid(16, (1, 0))
        u = from_function(g, lambda x: np.exp(1j * x))
        assert sobolev_norm(u, 1.0, 1.0) == pytest.approx(np.sqrt(2) * l2_norm(u))

    def test_lambda_below_one(self):
        with pytest.raises(ValueError):
            sobolev_norm(random_field(torus_grid(8, (1, 0))), 1.0, 0.5)


class TestDealiasedProduct:
    def galerkin_oracle(self, grid, w):
        """Toeplitz Galerkin matrix of ``w`` from its padded-grid Fourier coefficients."""
        n = grid.shape[0]
        m = grid.padded_shape[0]
        what = np.fft.fft(w(grid.nodes(0, m))) / m
        k = np.fft.fftfreq(n, 1.0 / n).astype(int)
        return what[(k[:, None] - k[None, :]) % m]

    @pytest.mark.parametrize("n", [8, 16, 32])
    def test_matches_toeplitz_galerkin(self, n):
        g = torus_grid(n, (1, 0))
        w = lambda x: np.abs(2 * np.sin(x / 2)) ** 1.5
        u = random_field(g, n)
        wp = w(g.nodes(0, g.padded_shape[0]))
        got = dealiased_product(g, wp, u.modal)
        np.testing.assert_allclose(got, self.galerkin_oracle(g, w) @ u.modal, atol=1e-12)

    def test_exact_for_trig_polynomials(self):
        g = torus_grid(16, (1, 0))
        w = lambda x: 1 + np.cos(x)
        u = from_function(g, lambda x: np.sin(2 * x))
        got = dealiased_product(g, w(g.nodes(0, 24)), u.modal)
        expected = from_function(g, lambda x: (1 + np.cos(x)) * np.sin(2 * x)).modal
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_hermitian_for_real_weight(self):
        g = torus_grid(8, (1, 1))
        rng = np.random.default_rng(3)
        wp = rng.uniform(0, 1, g.padded_shape)
        u, v = random_field(g, 4), random_field(g, 5)
        au = SpectralField(g, dealiased_product(g, wp, u.modal))
        av = SpectralField(g, dealiased_product(g, wp, v.modal))
        assert inner(au, v) == pytest.approx(inner(u, av), rel=1e-12)

    def test_pad_truncate_round_trip(self):
        g = torus_grid(8, (1, 1))
        u = random_field(g)
        np.testing.assert_array_equal(truncate_modal(g, pad_modal(g, u.modal)), u.modal)
