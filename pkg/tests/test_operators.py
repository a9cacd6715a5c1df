import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from dampwave.damping import DampingProfile, cross_strip, sine_power_1d, sine_power_2d
from dampwave.operators import (
    OperatorSpec,
    adjoint_apply,
    apply,
    assemble,
    conjugation_residual,
    scale_T_alpha,
)
from dampwave.spectral import box_grid, from_function, inner, l2_norm, to_modal, torus_grid

ZERO = DampingProfile("constant", amplitude=0.0)


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    return to_modal(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))


def dense_oracle(spec):
    """Column-by-column matrix: nodal product ``w * u`` on the 3/2 grid, evaluated from scratch."""
    g = spec.grid
    n = g.size
    m = g.padded_shape
    w = np.asarray(spec.weight_padded)
    cols = []
    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = 1.0
        modal = e.reshape(g.shape)
        padded = np.zeros(m, dtype=complex)
        idx = np.ix_(*[np.where(np.fft.fftfreq(k, 1 / k) >= 0, np.fft.fftfreq(k, 1 / k), np.fft.fftfreq(k, 1 / k) + mm).astype(int)
                       for k, mm in zip(g.shape, m)])
        padded[idx] = modal * (np.prod(m) / n)
        prod = np.fft.fftn(np.fft.ifftn(padded) * w)[idx] * (n / np.prod(m))
        cols.append((spec.diagonal * modal + spec.damping_coefficient * prod).ravel())
    return np.stack(cols, axis=1)


class TestSpec:
    def test_q0_needs_box(self):
        with pytest.raises(ValueError):
            OperatorSpec("Q0", 1.0, sine_power_1d(), torus_grid(8, (1, 0)))

    def test_p_lambda_omega_needs_no_torus_factor(self):
        with pytest.raises(ValueError):
            OperatorSpec("P_lambda_omega", 1.0, sine_power_1d(), torus_grid(8, (1, 1)))

    def test_lambda_positive(self):
        with pytest.raises(ValueError):
            OperatorSpec("P_lambda", 0.0, sine_power_1d(), torus_grid(8, (1, 1)))

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            OperatorSpec("P_mu", 1.0, sine_power_1d(), torus_grid(8, (1, 1)))

    def test_grid_mismatch(self):
        spec = OperatorSpec("P_lambda", 2.0, sine_power_1d(), torus_grid(8, (1, 1)))
        with pytest.raises(ValueError):
            apply(spec, random_field(torus_grid(16, (1, 1))))


class TestApply:
    def test_plane_wave_without_damping(self):
        g = torus_grid(16, (1, 1))
        lam = 3.0
        u = from_function(g, lambda x, y: np.exp(1j * (2 * x - 3 * y)))
        out = apply(OperatorSpec("P_lambda", lam, ZERO, g), u)
        np.testing.assert_allclose(out.modal, (13 - lam**2) * u.modal, atol=1e-10)

    def test_constant_damping(self):
        g = torus_grid(16, (1, 1))
        u = random_field(g)
        lam, c = 2.5, 0.7
        a = apply(OperatorSpec("P_lambda", lam, DampingProfile("constant", amplitude=c), g), u)
        b = apply(OperatorSpec("P_lambda", lam, ZERO, g), u)
        np.testing.assert_allclose(a.modal - b.modal, 1j * lam * c * u.modal, atol=1e-10)

    def test_matches_dense_oracle(self):
        g = torus_grid(16, (1, 1))
        spec = OperatorSpec("P_lambda", 5.0, sine_power_1d(1.5), g)
        oracle = dense_oracle(spec)
        u = random_field(g, 7)
        np.testing.assert_allclose(apply(spec, u).modal.ravel(), oracle @ u.modal.ravel(), atol=1e-10 * np.abs(oracle).max())

    @pytest.mark.parametrize("profile", [sine_power_1d(1.0), sine_power_1d(0.5), cross_strip(), sine_power_2d(1.0)])
    def test_assembly_matches_apply(self, profile):
        g = torus_grid(16, (1, 1)) if len(profile.dependence_axes) < 3 else torus_grid(8, (2, 1))
        spec = OperatorSpec("P_lambda", 4.0, profile, g)
        dense = assemble(spec, sparse_tol=None)
        sparse = assemble(spec)
        sparse = sparse.toarray() if sp.issparse(sparse) else sparse
        u = random_field(g, 3)
        expected = apply(spec, u).modal.ravel()
        np.testing.assert_allclose(dense @ u.modal.ravel(), expected, atol=1e-10)
        np.testing.assert_allclose(sparse @ u.modal.ravel(), expected, atol=1e-9)

    def test_smooth_weight_is_sparse(self):
        spec = OperatorSpec("P_lambda", 4.0, sine_power_1d(1.0), torus_grid(32, (1, 1)))
        m = assemble(spec)
        assert sp.issparse(m)
        assert m.nnz < 4 * spec.grid.size

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 1000), lam=st.floats(0.5, 30.0), a=st.floats(-3, 3))
    def test_linearity(self, seed, lam, a):
        g = torus_grid(16, (1, 1))
        spec = OperatorSpec("P_lambda", lam, sine_power_1d(1.0), g)
        u, v = random_field(g, seed), random_field(g, seed + 1)
        lhs = apply(spec, u + a * v)
        rhs = apply(spec, u) + a * apply(spec, v)
        scale = abs(spec.shift) + 16**2 + 4 * lam
        assert l2_norm(lhs - rhs) <= 1e-13 * scale * (l2_norm(u) + abs(a) * l2_norm(v))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 1000), lam=st.floats(0.5, 30.0), gamma=st.sampled_from([0.5, 1.0, 2.0]))
    def test_imaginary_part_is_damping(self, seed, lam, gamma):
        g = torus_grid(16, (1, 1))
        spec = OperatorSpec("P_lambda", lam, sine_power_1d(gamma), g)
        u = random_field(g, seed)
        au = apply(spec, u)
        bu = OperatorSpec("P_lambda", 1.0, sine_power_1d(gamma), g)
        damp = apply(bu, u) - apply(OperatorSpec("P_lambda", 1.0, ZERO, g), u)
        im = inner(au, u).imag
        expected = lam * (inner(damp, u) / 1j).real
        assert im >= 0
        assert im == pytest.approx(expected, rel=1e-11)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 1000), omega=st.floats(-50, 400))
    def test_real_part_identity(self, seed, omega):
        g = torus_grid(32, (1, 0))
        spec = OperatorSpec("P_lambda_omega", 7.0, sine_power_1d(1.0), g, omega=omega)
        u = random_field(g, seed)
        grad_sq = float(np.sum(g.k_squared * np.abs(u.modal) ** 2) * g.volume / g.size**2)
        expected = grad_sq - omega * l2_norm(u) ** 2
        assert inner(apply(spec, u), u).real == pytest.approx(expected, rel=1e-10, abs=1e-10 * grad_sq)


class TestAdjoint:
    def test_self_adjoint_without_damping(self):
        g = torus_grid(16, (1, 1))
        spec = OperatorSpec("P_lambda", 3.0, ZERO, g)
        u = random_field(g)
        np.testing.assert_allclose(adjoint_apply(spec, u).modal, apply(spec, u).modal)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 1000), lam=st.floats(0.5, 30.0))
    def test_inner_product(self, seed, lam):
        g = torus_grid(16, (1, 1))
        spec = OperatorSpec("P_lambda", lam, cross_strip(), g)
        u, v = random_field(g, seed), random_field(g, seed + 1)
        lhs = inner(apply(spec, u), v)
        rhs = inner(u, adjoint_apply(spec, v))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), l2_norm(u) * l2_norm(v) * lam)

    def test_flips_damping_sign(self):
        g = torus_grid(16, (1, 1))
        spec = OperatorSpec("P_lambda", 2.0, sine_power_1d(), g)
        flipped = OperatorSpec("P_lambda", 2.0, sine_power_1d(), g)
        u = random_field(g)
        base = apply(OperatorSpec("P_lambda", 2.0, ZERO, g), u)
        np.testing.assert_allclose((adjoint_apply(spec, u) - base).modal, -(apply(flipped, u) - base).modal, atol=1e-10)

    def test_normal_operator_positive(self):
        g = torus_grid(16, (1, 1))
        spec = OperatorSpec("P_lambda", 6.0, sine_power_1d(), g)
        u = random_field(g)
        au = apply(spec, u)
        val = inner(adjoint_apply(spec, au), u)
        assert val.real == pytest.approx(l2_norm(au) ** 2, rel=1e-12)
        assert abs(val.imag) <= 1e-10 * val.real


def gaussian(grid):
    return from_function(grid, lambda x: np.exp(-(x**2) / 2) + 0j)


class TestDilation:
    def test_identity(self):
        u = gaussian(box_grid(64, 20.0))
        v = scale_T_alpha(u, 1.0)
        np.testing.assert_array_equal(v.modal, u.modal)
        assert v.grid == u.grid

    def test_isometry_against_quadrature(self):
        u = gaussian(box_grid(128, 20.0))
        v = scale_T_alpha(u, 2.0)
        # int |sqrt(2) exp(-2 x^2)|^2 dx = sqrt(pi) = ||u||^2
        assert l2_norm(v) == pytest.approx(np.pi**0.25, rel=1e-12)
        assert l2_norm(v) == pytest.approx(l2_norm(u), rel=1e-12)

    def test_inverse(self):
        u = gaussian(box_grid(64, 20.0))
        back = scale_T_alpha(scale_T_alpha(u, 2.0), 0.5)
        assert back.grid == u.grid
        assert l2_norm(back - u) <= 1e-12 * l2_norm(u)

    def test_resampled_target(self):
        g = box_grid(256, 30.0)
        u = gaussian(g)
        v = scale_T_alpha(u, 1.5, target=g)
        expected = from_function(g, lambda x: 1.5**0.5 * np.exp(-((1.5 * x) ** 2) / 2) + 0j)
        assert l2_norm(v - expected) <= 1e-10

    def test_wrap_rejected(self):
        g = box_grid(64, 20.0)
        u = gaussian(g)
        with pytest.raises(ValueError):
            scale_T_alpha(u, 0.2, target=g)

    def test_needs_box(self):
        with pytest.raises(ValueError):
            scale_T_alpha(random_field(torus_grid(8, (1, 0))), 2.0)

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            scale_T_alpha(gaussian(box_grid(8, 10.0)), 0.0)


class TestConjugation:
    power = DampingProfile("radial-power", gamma=1.0)

    def test_lambda_one(self):
        u = gaussian(box_grid(64, 20.0))
        assert conjugation_residual(1.0, 0.0, self.power, u) <= 1e-13

    @pytest.mark.parametrize("omega", [0.0, 4.0])
    @pytest.mark.parametrize("modes,length", [(128, 20.0), (256, 40.0)])
    def test_lambda_sixteen(self, omega, modes, length):
        u = gaussian(box_grid(modes, length))
        assert conjugation_residual(16.0, omega, self.power, u) <= 1e-8

    def test_needs_exact_power(self):
        with pytest.raises(ValueError):
            conjugation_residual(4.0, 0.0, sine_power_1d(), gaussian(box_grid(32, 20.0)))
