"""Product Fourier grids, nodal/modal transforms and torus Fourier multipliers.

Conventions
-----------
The forward transform is ``numpy.fft.fftn`` with no prefactor and the inverse
carries ``1/N`` per axis.  Modal arrays are stored in FFT order, so the
Fourier-series coefficient of ``e^{ik.x}`` is ``modal / N_total``.  With
``dV = prod(L_a / N_a)`` the discrete Plancherel identity reads::

    sum |u_j|^2 dV  ==  (V / N_total**2) * sum |modal_k|^2

which is what :func:`l2_norm` uses.  ``V = prod(L_a)`` is the box volume.

Axes are ordered ``(x', x'')``: the first ``n'`` axes belong to ``M'`` and the
last ``n''`` axes are the torus factor.  Periodic axes carry nodes on
``[0, L)``; truncated-box axes carry nodes on ``[-L/2, L/2)`` and are treated
as a periodic wrap of a large box standing in for ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

PERIODIC = "periodic"
BOX = "truncated-box"
AXIS_KINDS = (PERIODIC, BOX)


@dataclass(frozen=True)
class Grid:
    """Tensor-product Fourier grid on a torus, a box, or a mix of both."""

    split_dims: tuple[int, int]
    modes_per_axis: tuple[int, ...]
    box_lengths: tuple[float, ...]
    axis_kinds: tuple[str, ...]

    def __post_init__(self):
        n1, n2 = self.split_dims
        if n1 < 0 or n2 < 0 or n1 + n2 < 1:
            raise ValueError(f"split_dims must be non-negative with n' + n'' >= 1, got {self.split_dims}")
        d = n1 + n2
        if not (len(self.modes_per_axis) == len(self.box_lengths) == len(self.axis_kinds) == d):
            raise ValueError("every per-axis argument needs one entry per axis")
        for n in self.modes_per_axis:
            if n <= 0:
                raise ValueError(f"mode counts must be positive, got {n}")
            if n % 2:
                raise ValueError(f"mode counts must be even, got {n}")
        for length in self.box_lengths:
            if not length > 0:
                raise ValueError(f"box lengths must be positive, got {length}")
        for kind in self.axis_kinds:
            if kind not in AXIS_KINDS:
                raise ValueError(f"unknown axis kind {kind!r}")

    @property
    def ndim(self) -> int:
        return len(self.modes_per_axis)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.modes_per_axis)

    @property
    def size(self) -> int:
        return int(np.prod(self.modes_per_axis))

    @property
    def volume(self) -> float:
        return float(np.prod(self.box_lengths))

    @property
    def cell_volume(self) -> float:
        return self.volume / self.size

    @property
    def primed_axes(self) -> tuple[int, ...]:
        return tuple(range(self.split_dims[0]))

    @property
    def torus_axes(self) -> tuple[int, ...]:
        n1 = self.split_dims[0]
        return tuple(range(n1, self.ndim))

    @property
    def periodic_axes(self) -> tuple[int, ...]:
        return tuple(a for a in range(self.ndim) if self.axis_kinds[a] == PERIODIC)

    def wavenumbers(self, axis: int) -> np.ndarray:
        n = self.modes_per_axis[axis]
        return np.fft.fftfreq(n, d=1.0 / n) * (2 * np.pi / self.box_lengths[axis])

    def nodes(self, axis: int, n: int | None = None) -> np.ndarray:
        """Nodal coordinates on ``axis``; ``n`` overrides the node count (padding)."""
        n = self.modes_per_axis[axis] if n is None else n
        length = self.box_lengths[axis]
        x = np.arange(n) * (length / n)
        if self.axis_kinds[axis] == BOX:
            x = x - length / 2
        return x

    def mesh(self, padded: bool = False) -> tuple[np.ndarray, ...]:
        counts = self.padded_shape if padded else self.shape
        axes = [self.nodes(a, counts[a]) for a in range(self.ndim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        ks = np.meshgrid(*[self.wavenumbers(a) for a in range(self.ndim)], indexing="ij")
        return sum(k**2 for k in ks)

    def k_squared_on(self, axes: Sequence[int]) -> np.ndarray:
        """``sum_a k_a^2`` over ``axes`` only, broadcast to the full modal shape."""
        out = np.zeros(self.shape)
        for a in axes:
            shape = [1] * self.ndim
            shape[a] = -1
            out = out + self.wavenumbers(a).reshape(shape) ** 2
        return out

    @property
    def padded_shape(self) -> tuple[int, ...]:
        return tuple(3 * n // 2 for n in self.modes_per_axis)

    def subgrid(self, axes: Sequence[int], split_dims: tuple[int, int]) -> "Grid":
        return Grid(
            split_dims,
            tuple(self.modes_per_axis[a] for a in axes),
            tuple(self.box_lengths[a] for a in axes),
            tuple(self.axis_kinds[a] for a in axes),
        )

    def primed_grid(self) -> "Grid":
        """Grid of the ``M'`` factor, used for the partial Fourier slices."""
        return self.subgrid(self.primed_axes, (self.split_dims[0], 0))

    def refined(self, mode_factor: int = 2, length_factor: float = 1.0, axes: Sequence[int] | None = None) -> "Grid":
        """Grid with mode counts and box lengths scaled; periodic lengths stay fixed."""
        axes = range(self.ndim) if axes is None else axes
        modes = list(self.modes_per_axis)
        lengths = list(self.box_lengths)
        for a in axes:
            modes[a] = int(modes[a] * mode_factor)
            if self.axis_kinds[a] == BOX:
                lengths[a] = lengths[a] * length_factor
        return Grid(self.split_dims, tuple(modes), tuple(lengths), self.axis_kinds)


def make_grid(split_dims, modes_per_axis, box_lengths, axis_kinds) -> Grid:
    """Build a :class:`Grid`; scalar ``axis_kinds`` applies to every axis."""
    split_dims = tuple(int(n) for n in split_dims)
    d = sum(split_dims)
    if d < 1:
        raise ValueError("grid needs at least one axis")
    modes = tuple(int(n) for n in np.broadcast_to(np.asarray(modes_per_axis), (d,)))
    lengths = tuple(float(x) for x in np.broadcast_to(np.asarray(box_lengths, dtype=float), (d,)))
    if isinstance(axis_kinds, str):
        axis_kinds = (axis_kinds,) * d
    return Grid(split_dims, modes, lengths, tuple(axis_kinds))


def torus_grid(modes: int | Sequence[int], split_dims=(1, 1)) -> Grid:
    d = sum(split_dims)
    return make_grid(split_dims, np.broadcast_to(modes, (d,)), 2 * np.pi, PERIODIC)


def box_grid(modes: int, length: float, dim: int = 1) -> Grid:
    return make_grid((dim, 0), [modes] * dim, [length] * dim, BOX)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Modal coefficients of a field on ``grid`` (FFT order, no prefactor)."""

    grid: Grid
    modal: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.modal.shape != self.grid.shape:
            raise ValueError(f"modal shape {self.modal.shape} does not match grid {self.grid.shape}")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.modal + other.modal)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.modal - other.modal)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.grid, self.modal * scalar)

    __rmul__ = __mul__

    def nodal(self) -> np.ndarray:
        return to_nodal(self)

    def norm(self) -> float:
        return l2_norm(self)

    @property
    def series_coefficients(self) -> np.ndarray:
        """Fourier-series coefficients ``c_k`` with ``u = sum c_k e^{ik.x}``."""
        return self.modal / self.grid.size


def _check_same_grid(a: SpectralField, b: SpectralField) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def to_modal(grid: Grid, nodal: np.ndarray) -> SpectralField:
    nodal = np.asarray(nodal)
    if nodal.shape != grid.shape:
        raise ValueError(f"nodal shape {nodal.shape} does not match grid {grid.shape}")
    return SpectralField(grid, np.fft.fftn(nodal.astype(complex)))


def to_nodal(u: SpectralField) -> np.ndarray:
    return np.fft.ifftn(u.modal)


def from_function(grid: Grid, func: Callable[..., np.ndarray]) -> SpectralField:
    """Sample ``func(*coords)`` at the grid nodes."""
    return to_modal(grid, np.broadcast_to(func(*grid.mesh()), grid.shape))


def inner(u: SpectralField, v: SpectralField) -> complex:
    """L^2 inner product ``<u, v> = int u conj(v)``."""
    _check_same_grid(u, v)
    g = u.grid
    return complex(np.vdot(v.modal, u.modal) * g.volume / g.size**2)


def l2_norm(u: SpectralField) -> float:
    g = u.grid
    return float(np.sqrt(np.sum(np.abs(u.modal) ** 2) * g.volume) / g.size)


def nodal_l2_norm(grid: Grid, nodal: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(nodal) ** 2) * grid.cell_volume))


def fourier_multiplier(u: SpectralField, symbol: Callable[..., np.ndarray], axes: Sequence[int] | None = None) -> SpectralField:
    """Apply ``chi(D)``: multiply each modal coefficient by ``symbol(k)``.

    ``symbol`` receives one broadcastable wavenumber array per entry of
    ``axes`` (default: the torus axes, or every periodic axis when the grid
    has no torus factor).
    """
    g = u.grid
    if not g.periodic_axes:
        raise ValueError("Fourier multipliers need at least one periodic axis")
    if axes is None:
        axes = [a for a in g.torus_axes if g.axis_kinds[a] == PERIODIC] or list(g.periodic_axes)
    ks = []
    for a in axes:
        shape = [1] * g.ndim
        shape[a] = -1
        ks.append(g.wavenumbers(a).reshape(shape))
    mult = np.broadcast_to(np.asarray(symbol(*ks)), g.shape)
    return SpectralField(g, u.modal * mult)


def partial_modes(u: SpectralField) -> list[tuple[tuple[int, ...], SpectralField]]:
    """Fourier coefficients in the torus variables ``x''``.

    Returns ``(k, u_k)`` pairs, ``u_k`` living on the ``M'`` grid, normalized
    as ``u_k(x') = |T''|^{-1} int u(x', x'') e^{-ik.x''} dx''`` so that
    ``sum_k |T''| * ||u_k||^2 == ||u||^2``.  On the standard torus ``|T''|`` is
    ``(2 pi)^{n''}``.
    """
    g = u.grid
    n1, n2 = g.split_dims
    if n2 == 0:
        raise ValueError("partial_modes needs at least one torus axis (n'' >= 1)")
    if n1 == 0:
        raise ValueError("partial_modes needs an M' factor (n' >= 1)")
    sub = g.primed_grid()
    torus_shape = g.shape[n1:]
    n_torus = int(np.prod(torus_shape))
    # slices stay modal in x'; dividing by N'' turns the x'' FFT into series coefficients
    coeffs = u.modal / n_torus
    ks = [np.rint(g.wavenumbers(a) * g.box_lengths[a] / (2 * np.pi)).astype(int) for a in g.torus_axes]
    out = []
    for idx in np.ndindex(*torus_shape):
        k = tuple(int(ks[j][i]) for j, i in enumerate(idx))
        out.append((k, SpectralField(sub, coeffs[(Ellipsis,) + idx])))
    return out


def torus_volume(grid: Grid) -> float:
    return float(np.prod([grid.box_lengths[a] for a in grid.torus_axes]))


def sobolev_norm(u: SpectralField, s: float, lam: float = 1.0) -> float:
    """Semiclassical norm with symbol ``(|xi|^2 + lam^2)^{s/2}``."""
    if lam < 1:
        raise ValueError("lam must be >= 1")
    g = u.grid
    weight = (g.k_squared + lam**2) ** s
    return float(np.sqrt(np.sum(weight * np.abs(u.modal) ** 2) * g.volume) / g.size)


def data_norm(u0: SpectralField, u1: SpectralField) -> float:
    """``||u0||_{H^2} + ||u1||_{H^1}``, the data norm of the decay statements."""
    return sobolev_norm(u0, 2.0) + sobolev_norm(u1, 1.0)


# --- dealiased products -----------------------------------------------------

def _pad_index(n: int, m: int) -> np.ndarray:
    """Positions of the ``n`` FFT-ordered modes inside an ``m``-point FFT array."""
    k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    return np.where(k >= 0, k, k + m)


def pad_modal(grid: Grid, modal: np.ndarray) -> np.ndarray:
    """Zero-pad modal data (trailing axes match ``grid``) to the 3/2 grid.

    Leading axes of ``modal`` are treated as a batch.
    """
    batch = modal.shape[: modal.ndim - grid.ndim]
    out = np.zeros(batch + grid.padded_shape, dtype=complex)
    index = np.ix_(*[_pad_index(n, m) for n, m in zip(grid.shape, grid.padded_shape)])
    out[(Ellipsis,) + index] = modal
    return out


def truncate_modal(grid: Grid, padded: np.ndarray) -> np.ndarray:
    index = np.ix_(*[_pad_index(n, m) for n, m in zip(grid.shape, grid.padded_shape)])
    return padded[(Ellipsis,) + index]


def dealiased_product(grid: Grid, weight_padded: np.ndarray, modal: np.ndarray) -> np.ndarray:
    """Modal coefficients of ``w * u`` evaluated on the 3/2-padded nodal grid.

    ``weight_padded`` holds ``w`` at the padded nodes.  The map is
    ``P^* diag(w) P`` with ``P`` the (scaled) padding isometry, so it is
    Hermitian whenever ``w`` is real.
    """
    axes = tuple(range(modal.ndim - grid.ndim, modal.ndim))
    ratio = np.prod(grid.padded_shape) / grid.size
    nodal = np.fft.ifftn(pad_modal(grid, modal), axes=axes) * ratio
    prod = np.fft.fftn(weight_padded * nodal, axes=axes) / ratio
    return truncate_modal(grid, prod)
