"""Matrix-free stationary operators and the unitary dilation ``T_alpha``.

Every family has the form ``-Delta + diag_shift + i c w(x)`` with a real
weight ``w`` (``b`` or its homogeneous extension ``W``):

==================  =====================  ==========
family              shift                  i c w
==================  =====================  ==========
``P_lambda``        ``-lambda^2``          ``i lambda b``
``P_lambda_omega``  ``-omega``             ``i lambda b``
``Q0``              ``-mu``                ``i W``
``P_tilde``         ``-omega``             ``i lambda W``
==================  =====================  ==========

The weight product is evaluated on the 3/2-padded nodal grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .damping import DampingProfile, extend_W
from .spectral import BOX, Grid, SpectralField, _pad_index, dealiased_product, l2_norm

FAMILIES = ("P_lambda", "P_lambda_omega", "Q0", "P_tilde")


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    family: str
    lam: float
    damping: DampingProfile
    grid: Grid
    omega: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown operator family {self.family!r}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        g = self.grid
        if self.family in ("Q0", "P_tilde"):
            if any(k != BOX for k in g.axis_kinds):
                raise ValueError(f"{self.family} acts on truncated-box axes only")
        elif self.family == "P_lambda_omega" and g.split_dims[1] != 0:
            raise ValueError("P_lambda_omega acts on the M' factor alone (n'' = 0)")

    @property
    def shift(self) -> float:
        return {
            "P_lambda": -self.lam**2,
            "P_lambda_omega": -self.omega,
            "Q0": -self.mu,
            "P_tilde": -self.omega,
        }[self.family]

    @property
    def damping_coefficient(self) -> complex:
        return 1j if self.family == "Q0" else 1j * self.lam

    @cached_property
    def weight_padded(self) -> np.ndarray:
        if self.family in ("Q0", "P_tilde"):
            w = extend_W(self.damping)
        else:
            w = self.damping
        return np.broadcast_to(np.asarray(w(*self.grid.mesh(padded=True)), dtype=float), self.grid.padded_shape)

    @cached_property
    def diagonal(self) -> np.ndarray:
        return self.grid.k_squared + self.shift

    def with_(self, **changes) -> "OperatorSpec":
        fields = dict(family=self.family, lam=self.lam, damping=self.damping, grid=self.grid, omega=self.omega, mu=self.mu)
        fields.update(changes)
        return OperatorSpec(**fields)


def _check(spec: OperatorSpec, u: SpectralField) -> None:
    if u.grid != spec.grid:
        raise ValueError("field grid does not match the operator grid")


def apply_modal(spec: OperatorSpec, modal: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Apply to modal data; leading axes beyond the grid shape are a batch."""
    coef = spec.damping_coefficient
    diag = spec.diagonal
    if adjoint:
        coef, diag = np.conj(coef), np.conj(diag)
    return diag * modal + coef * dealiased_product(spec.grid, spec.weight_padded, modal)


def apply(spec: OperatorSpec, u: SpectralField) -> SpectralField:
    _check(spec, u)
    return SpectralField(u.grid, apply_modal(spec, u.modal))


def adjoint_apply(spec: OperatorSpec, u: SpectralField) -> SpectralField:
    _check(spec, u)
    return SpectralField(u.grid, apply_modal(spec, u.modal, adjoint=True))


def _assemble_from_coefficients(spec: OperatorSpec, sparse_tol: float):
    """Sparse assembly when the weight has few significant Fourier coefficients.

    The padded product is circulant on the padded grid: the entry at modes
    ``(k, k')`` is ``w_hat[(p(k) - p(k')) mod M] / M`` with ``p`` the padding
    map.  Returns ``None`` when the weight is not sparse in Fourier space.
    """
    g = spec.grid
    n = g.size
    coeffs = np.fft.fftn(spec.weight_padded) / np.prod(g.padded_shape)
    bound = float(np.abs(spec.diagonal).max()) + abs(spec.damping_coefficient) * float(np.abs(spec.weight_padded).max())
    offsets = np.argwhere(np.abs(spec.damping_coefficient * coeffs) > sparse_tol * bound)
    if len(offsets) * n > 0.1 * n * n:
        return None
    # inverse padding map per axis: padded position -> mode index or -1
    pos = [_pad_index(nn, m) for nn, m in zip(g.shape, g.padded_shape)]
    inv = []
    for p, m in zip(pos, g.padded_shape):
        table = np.full(m, -1)
        table[p] = np.arange(len(p))
        inv.append(table)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [spec.diagonal.ravel().astype(complex)]
    for off in offsets:
        maps = [inv[a][(pos[a] + off[a]) % g.padded_shape[a]] for a in range(g.ndim)]
        src = np.meshgrid(*[np.arange(nn) for nn in g.shape], indexing="ij")
        dst = np.meshgrid(*maps, indexing="ij")
        ok = np.all([d >= 0 for d in dst], axis=0)
        rows.append(np.ravel_multi_index(tuple(d[ok] for d in dst), g.shape))
        cols.append(np.ravel_multi_index(tuple(c[ok] for c in src), g.shape))
        vals.append(np.full(int(ok.sum()), spec.damping_coefficient * coeffs[tuple(off)]))
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def assemble(spec: OperatorSpec, sparse_tol: float | None = 1e-13, block: int = 256):
    """Modal matrix of the operator, built column-block by column-block.

    Entries below ``sparse_tol * bound`` are dropped, where ``bound`` is the
    a-priori entry bound ``max|diag| + |c| max|w|``.  Each block is
    sparsified as soon as it is computed, so memory stays proportional to the
    fill.  A CSC matrix is returned when the fill is below 10%, the dense
    array otherwise; ``sparse_tol=None`` forces dense.
    """
    g = spec.grid
    n = g.size
    if sparse_tol is not None:
        direct = _assemble_from_coefficients(spec, sparse_tol)
        if direct is not None:
            return direct
    dense = np.empty((n, n), dtype=complex) if sparse_tol is None else None
    cut = 0.0
    if dense is None:
        bound = float(np.abs(spec.diagonal).max()) + abs(spec.damping_coefficient) * float(np.abs(spec.weight_padded).max())
        cut = sparse_tol * bound
    blocks = []
    for start in range(0, n, block):
        stop = min(start + block, n)
        eye = np.zeros((stop - start, n), dtype=complex)
        eye[np.arange(stop - start), np.arange(start, stop)] = 1.0
        out = apply_modal(spec, eye.reshape((stop - start,) + g.shape)).reshape(stop - start, n).T
        if dense is not None:
            dense[:, start:stop] = out
        else:
            blocks.append(sp.csc_matrix(np.where(np.abs(out) > cut, out, 0)))
    if dense is not None:
        return dense
    mat = sp.hstack(blocks, format="csc")
    if mat.nnz > 0.1 * n * n:
        return mat.toarray()
    return mat


# --- the dilation T_alpha ----------------------------------------------------

def _check_box(grid: Grid) -> None:
    if any(k != BOX for k in grid.axis_kinds):
        raise ValueError("T_alpha acts on truncated-box grids only")


def scaled_grid(grid: Grid, alpha: float) -> Grid:
    """Grid carrying ``T_alpha u`` node-for-node: every box length divided by ``alpha``."""
    return Grid(grid.split_dims, grid.modes_per_axis, tuple(L / alpha for L in grid.box_lengths), grid.axis_kinds)


def _resample(u: SpectralField, alpha: float, target: Grid) -> np.ndarray:
    """Band-limited evaluation of ``u(alpha x)`` at the nodes of ``target``."""
    g = u.grid
    values = u.series_coefficients
    outside = np.zeros(target.shape, dtype=bool)
    for a in range(g.ndim):
        k = g.wavenumbers(a)
        half = g.box_lengths[a] / 2
        x = alpha * target.nodes(a)
        basis = np.exp(1j * np.outer(x + half, k))
        values = np.moveaxis(np.tensordot(basis, np.moveaxis(values, a, 0), axes=(1, 0)), 0, a)
        shape = [1] * g.ndim
        shape[a] = -1
        outside = outside | (np.abs(x) > half).reshape(shape)
    # points that wrapped around the box must sit where u is negligible, and
    # so must the part of u that falls outside the dilated target window
    nodal = u.nodal()
    peak = np.abs(nodal).max()
    lost = np.zeros(g.shape, dtype=bool)
    for a in range(g.ndim):
        shape = [1] * g.ndim
        shape[a] = -1
        window = alpha * target.box_lengths[a] / 2
        lost = lost | (np.abs(g.nodes(a)) > window).reshape(shape)
    wrapped = outside.any() and np.abs(values[outside]).max() > 1e-10 * peak
    dropped = lost.any() and np.abs(nodal[lost]).max() > 1e-10 * peak
    if wrapped or dropped:
        raise ValueError(f"alpha={alpha} is incompatible with the box: the dilated field does not fit")
    return values


def scale_T_alpha(u: SpectralField, alpha: float, target: Grid | None = None) -> SpectralField:
    """``(T_alpha u)(x) = alpha^{d/2} u(alpha x)``.

    Without ``target`` the result lives on :func:`scaled_grid`: the nodal
    values are reused exactly, so the map is an isometry to round-off.  A
    ``target`` whose box lengths equal ``L/alpha`` takes the same exact path;
    any other target is filled by band-limited resampling, which refuses
    dilations that push mass across the box edge.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    g = u.grid
    _check_box(g)
    d = g.ndim
    exact = scaled_grid(g, alpha)
    if target is None:
        target = exact
    _check_box(target)
    if target.shape == g.shape and np.allclose(target.box_lengths, exact.box_lengths, rtol=1e-13, atol=0):
        return SpectralField(target, u.modal * alpha ** (d / 2))
    nodal = _resample(u, alpha, target) * alpha ** (d / 2)
    return SpectralField(target, np.fft.fftn(nodal))


def conjugation_residual(lam: float, omega: float, damping: DampingProfile, u: SpectralField) -> float:
    """Relative defect of ``T_a P~ T_a^-1 = lam^{1/(g+1)} (Q0 - omega lam^{-1/(g+1)})``.

    ``a = lam^{-1/(2(g+1))}``.  The identity is exact for an exactly
    homogeneous ``W``, so only round-off should remain.
    """
    if damping.kind != "radial-power" or damping.extra_centers:
        raise ValueError("the scaling identity needs an exactly homogeneous W (radial-power)")
    g = u.grid
    gamma = damping.gamma
    alpha = lam ** (-1.0 / (2 * (gamma + 1)))
    scale = lam ** (1.0 / (gamma + 1))
    v = scale_T_alpha(u, 1.0 / alpha)
    pt = OperatorSpec("P_tilde", lam, damping, v.grid, omega=omega)
    lhs = scale_T_alpha(apply(pt, v), alpha, target=g)
    q0 = OperatorSpec("Q0", lam, damping, g, mu=omega / scale)
    rhs = apply(q0, u) * scale
    return l2_norm(lhs - rhs) / l2_norm(u)
