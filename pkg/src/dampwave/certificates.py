"""Explicit constructions and scalar identities behind the resolvent estimates.

* quasimodes concentrating near the undamped set, and their ratio
  ``||P_k u_k|| / k^{1/(gamma+1)}``;
* the modulated-dilated sharpness witness for ``Q0 - mu``;
* the auxiliary function ``f(lambda, omega)`` and its lower bound;
* the partial-Fourier reduction identity;
* phase-space region tags, the second-microlocal metric ``g`` and its weight.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .damping import DampingProfile, depends_only_on
from .operators import OperatorSpec, apply
from .spectral import (
    PERIODIC,
    Grid,
    SpectralField,
    box_grid,
    from_function,
    l2_norm,
    make_grid,
    partial_modes,
)

# --- cutoffs -----------------------------------------------------------------

def bump(r: np.ndarray) -> np.ndarray:
    """``exp(1 - 1/(1 - r^2))`` on ``r < 1``, zero outside; equals 1 only at 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def plateau(r: np.ndarray, half_width: float = 0.3) -> np.ndarray:
    """Smooth cutoff equal to 1 on ``|r| <= half_width`` and 0 on ``|r| >= 1``."""
    r = np.abs(np.asarray(r, dtype=float))
    return 1.0 - _smooth_step((r - half_width) / (1.0 - half_width))


CUTOFFS: dict[str, Callable[[np.ndarray], np.ndarray]] = {"bump": bump, "plateau": plateau}


def _radial_norm_sq(cutoff: Callable, dim: int, derivative: int = 0) -> float:
    """``int_{R^dim} |chi(|x|)|^2 dx`` for a radial profile (``dim`` in {1, 2, 3})."""
    area = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[dim]
    val, _ = integrate.quad(lambda r: cutoff(np.array([r]))[0] ** 2 * r ** (dim - 1), 0.0, 1.0,
                            epsabs=1e-15, epsrel=1e-13, limit=200)
    return area * val


# --- quasimodes --------------------------------------------------------------

@dataclass
class Quasimode:
    k: int
    gamma: float
    alpha: float
    cutoff: str
    eps0: float
    field: SpectralField

    @property
    def support_radius(self) -> float:
        """Radius of the ``x'`` support, ``eps0 k^{-alpha}``."""
        return self.eps0 * self.k ** (-self.alpha)


def quasimode_alpha(gamma: float) -> float:
    return 1.0 / (2.0 * (1.0 + gamma))


def quasimode_grid(k: int, gamma: float, eps0: float = 1.0, points_per_radius: int = 64, dims: tuple[int, int] = (1, 1)) -> Grid:
    """Smallest power-of-two grid that resolves the quasimode of index ``k``."""
    r = eps0 * k ** (-quasimode_alpha(gamma))
    n1 = 1 << max(5, math.ceil(math.log2(points_per_radius * 2 * math.pi / r)))
    n2 = 2 * (k + 2) if dims[1] else 0
    modes = [n1] * dims[0] + [n2] * dims[1]
    return make_grid(dims, modes, [2 * math.pi] * sum(dims), PERIODIC)


def build_quasimode(k: int, gamma: float, grid: Grid, eps0: float = 1.0, center: Sequence[float] | None = None,
                    cutoff: str = "plateau", points_per_radius: int = 24) -> Quasimode:
    """``u_k = c k^{alpha n'/2} chi(k^alpha (x'-y')/eps0) e^{i k x''_1} / (2 pi)^{n''/2}``.

    ``c = ||chi||^{-1}`` is computed by quadrature, so ``||u_k|| = 1`` holds
    up to the (spectral) error of the grid.  Raises ``ValueError`` when the
    support has fewer than ``points_per_radius`` nodes across its radius or
    the torus axes cannot carry the frequency ``k``.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    n1, n2 = grid.split_dims
    if n1 < 1 or n1 > 3:
        raise ValueError("quasimodes need 1 <= n' <= 3")
    alpha = quasimode_alpha(gamma)
    radius = eps0 * k ** (-alpha)
    center = tuple(center) if center is not None else (0.0,) * n1
    for a in range(n1):
        h = grid.box_lengths[a] / grid.modes_per_axis[a]
        if radius / h < points_per_radius or 2 * radius >= grid.box_lengths[a]:
            raise ValueError(f"k={k} is not resolvable: support radius {radius:.3g} on spacing {h:.3g}")
    if n2 and grid.modes_per_axis[n1] // 2 <= k:
        raise ValueError(f"torus axis with {grid.modes_per_axis[n1]} modes cannot carry frequency {k}")
    chi = CUTOFFS[cutoff]
    c1 = 1.0 / math.sqrt(_radial_norm_sq(chi, n1)) / eps0 ** (n1 / 2)

    def u(*x):
        offs = [np.angle(np.exp(1j * (x[a] - center[a]))) for a in range(n1)]  # periodic offset in (-pi, pi]
        r = np.sqrt(sum(d**2 for d in offs)) * k**alpha / eps0
        out = c1 * k ** (alpha * n1 / 2) * chi(r) + 0j
        if n2:
            out = out * np.exp(1j * k * x[n1]) / (2 * math.pi) ** (n2 / 2)
        return out

    return Quasimode(k, gamma, alpha, cutoff, eps0, from_function(grid, u))


@dataclass
class QuasimodeRatio:
    k: int
    ratio: float
    laplacian_term: float
    damping_term: float


def quasimode_terms(k: int, gamma: float, damping: DampingProfile, grid: Grid | None = None, **kwargs) -> QuasimodeRatio:
    """``||P_k u_k|| / k^{1/(gamma+1)}`` together with its two pieces.

    With a real cutoff, ``-Delta' u`` is real and ``i k b u`` imaginary up to
    the common phase, so the ratio is exactly the Euclidean combination of the
    Laplacian term ``||Delta' u_k||`` and the damping term ``k ||b u_k||``
    (both divided by ``k^{1/(gamma+1)}``).
    """
    grid = grid or quasimode_grid(k, gamma, kwargs.get("eps0", 1.0))
    qm = build_quasimode(k, gamma, grid, **kwargs)
    scale = k ** (1.0 / (gamma + 1))
    spec = OperatorSpec("P_lambda", float(k), damping, grid)
    total = l2_norm(apply(spec, qm.field))
    lap = OperatorSpec("P_lambda", float(k), DampingProfile("constant", amplitude=0.0), grid)
    lap_term = l2_norm(apply(lap, qm.field))
    damp_term = l2_norm(apply(spec, qm.field) - apply(lap, qm.field))
    return QuasimodeRatio(k, total / scale, lap_term / scale, damp_term / scale)


def quasimode_ratio(k: int, gamma: float, damping: DampingProfile, grid: Grid | None = None, **kwargs) -> float:
    return quasimode_terms(k, gamma, damping, grid, **kwargs).ratio


# --- sharpness witness -------------------------------------------------------

def sharpness_kappa(gamma: float) -> float:
    return 1.0 / (4.0 * gamma + 2.0)


def sharpness_grid(mu: float, gamma: float, dim: int = 1, support: float = 1.0) -> Grid:
    """Box holding the dilated witness with a 2x margin and resolving ``mu^{1/2}``."""
    s = mu ** sharpness_kappa(gamma) * support
    length = max(20.0, 4 * s)
    kmax = 1.5 * math.sqrt(mu) + 40.0 / mu ** sharpness_kappa(gamma) + 20
    n = 1 << math.ceil(math.log2(kmax * length / math.pi))
    return box_grid(n, length, dim)


def sharpness_witness(mu: float, gamma: float, w0: Callable[..., np.ndarray] | None = None, grid: Grid | None = None,
                      support: float = 1.0) -> float:
    """``||(Q0 - mu) u|| / mu^{gamma/(2 gamma + 1)}`` for ``u = mu^{-kappa d/2} w0(x / mu^kappa) e^{i mu^{1/2} x_1}``.

    ``W = |x|^{2 gamma}``, ``kappa = 1/(4 gamma + 2)``.  ``w0`` must vanish
    outside the ball of radius ``support``; the default is the unit bump
    normalized in ``L^2``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    grid = grid or sharpness_grid(mu, gamma, support=support)
    d = grid.ndim
    kappa = sharpness_kappa(gamma)
    s = mu**kappa
    if s * support >= 0.5 * min(grid.box_lengths) * 0.95:
        raise ValueError(f"witness support {s * support:.3g} escapes the box")
    if w0 is None:
        c = 1.0 / math.sqrt(_radial_norm_sq(bump, d))

        def w0(*y):
            return c * bump(np.sqrt(sum(v**2 for v in y)))

    nu = math.sqrt(mu)

    def u(*x):
        return mu ** (-kappa * d / 2) * w0(*[v / s for v in x]) * np.exp(1j * nu * x[0])

    field = from_function(grid, u)
    W = DampingProfile("radial-power", gamma=gamma, center=(0.0,) * d)
    spec = OperatorSpec("Q0", 1.0, W, grid, mu=mu)
    return l2_norm(apply(spec, field)) / l2_norm(field) / mu ** (gamma / (2 * gamma + 1))


# --- f(lambda, omega) --------------------------------------------------------

def f_eval(lam: float, omega: float, c0: float, gamma: float) -> float:
    """``1 + (omega / lam^{1/(g+1)})^{2g/(2g+1)} - c0 omega lam^{-2/(g+1)}``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if omega < 0:
        raise ValueError("omega must be non-negative")
    return 1.0 + (omega / lam ** (1 / (gamma + 1))) ** (2 * gamma / (2 * gamma + 1)) - c0 * omega * lam ** (-2 / (gamma + 1))


@dataclass
class FScan:
    min_f: float
    argmin: tuple[float, float]
    passed: bool
    rows: list[tuple[float, float, float]]


def f_normalized(lam: float, theta: float, c0: float, gamma: float) -> float:
    """``f`` at ``omega = theta c0^{-(2g+1)} lam^2`` in cancellation-free form.

    Substituting gives ``f = 1 + c0^{-2g} lam^{2g/(g+1)} (theta^p - theta)``
    with ``p = 2g/(2g+1)``.  The literal formula subtracts two terms of size
    ``c0^{-2g} lam^{2g/(g+1)}`` near ``theta = 1`` and loses about ``1e-11``
    there for ``lam ~ 10^3``.
    """
    p = 2 * gamma / (2 * gamma + 1)
    return 1.0 + c0 ** (-2 * gamma) * lam ** (2 * gamma / (gamma + 1)) * (theta**p - theta)


def f_scan(lam_grid: Sequence[float], c0: float, gamma: float, omega_count: int = 50, tol: float = 1e-12) -> FScan:
    """Check ``f >= 1 - tol`` on ``omega`` in ``[0, c0^{-(2g+1)} lam^2]`` for every ``lam``.

    The lattice is uniform in ``theta = omega / (c0^{-(2g+1)} lam^2)`` and
    ``f`` is evaluated with :func:`f_normalized`.
    """
    rows = []
    for lam in lam_grid:
        top = c0 ** (-(2 * gamma + 1)) * lam**2
        for theta in np.linspace(0.0, 1.0, omega_count):
            rows.append((float(lam), float(theta * top), f_normalized(float(lam), float(theta), c0, gamma)))
    i = int(np.argmin([r[2] for r in rows]))
    return FScan(rows[i][2], rows[i][:2], rows[i][2] >= 1 - tol, rows)


# --- reduction identity ------------------------------------------------------

def reduction_identity_residual(u: SpectralField, lam: float, damping: DampingProfile) -> float:
    """Relative defect of ``||P_lam u||^2 = (2 pi)^{n''} sum_k ||P_{lam, lam^2-|k|^2} u_k||^2``."""
    g = u.grid
    if not depends_only_on(damping, g.primed_axes):
        raise ValueError("the reduction identity needs damping independent of x''")
    lhs = l2_norm(apply(OperatorSpec("P_lambda", lam, damping, g), u)) ** 2
    rhs = 0.0
    for k, uk in partial_modes(u):
        spec = OperatorSpec("P_lambda_omega", lam, damping, uk.grid, omega=lam**2 - float(np.dot(k, k)))
        rhs += l2_norm(apply(spec, uk)) ** 2
    rhs *= (2 * math.pi) ** g.split_dims[1]
    return abs(lhs - rhs) / lhs if lhs else abs(rhs)


# --- phase-space regions -----------------------------------------------------

class RegionTag(enum.Enum):
    GCC_REGION = "[1]"
    CORE_2_1 = "[2.1]"
    ELLIPTIC_DAMPED_2_2 = "[2.2]"
    PROPAGATIVE_2_3 = "[2.3]"


@dataclass(frozen=True)
class Thresholds:
    """Concrete constants for the asymptotic comparisons.

    ``a << b`` is read as ``a <= small * b`` and ``a >~ b`` as its negation.
    ``x_gcc`` is the distance from the vanishing point beyond which ``b`` is
    bounded below, and ``char_eps`` the width of the characteristic shell.
    """

    small: float = 0.125
    x_gcc: float = 0.125
    char_eps: float = 0.125


def classify_region(x_p, xi_p, xi_pp, lam: float, gamma: float, thresholds: Thresholds = Thresholds()) -> RegionTag:
    """Tag a point near ``{|xi|^2 = lam^2}`` with priority [1] > [2.2] > [2.1] > [2.3]."""
    x_p, xi_p, xi_pp = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x_p, xi_p, xi_pp))
    t = thresholds
    xp2, xip2, xipp2 = float(x_p @ x_p), float(xi_p @ xi_p), float(xi_pp @ xi_pp)
    if abs(xip2 + xipp2 - lam**2) > t.char_eps * lam**2:
        raise ValueError("point is not on the characteristic shell")
    scale = lam ** (1.0 / (gamma + 1))
    if xip2 > t.small * xipp2 or math.sqrt(xp2) > t.x_gcc:
        return RegionTag.GCC_REGION
    if xp2 * scale > t.small:
        return RegionTag.ELLIPTIC_DAMPED_2_2
    if xip2 <= t.small * scale:
        return RegionTag.CORE_2_1
    return RegionTag.PROPAGATIVE_2_3


def region_predicates(x_p, xi_p, xi_pp, lam: float, gamma: float, thresholds: Thresholds = Thresholds()) -> dict[RegionTag, bool]:
    """Membership in each region on its own, with the overlaps resolved by priority."""
    tag = classify_region(x_p, xi_p, xi_pp, lam, gamma, thresholds)
    return {r: r is tag for r in RegionTag}


# --- second-microlocal metric ------------------------------------------------

def _sq(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v**2 if v.ndim == 0 else np.sum(v**2, axis=-1)


def _split_sq(xi_p, xi_pp) -> tuple[np.ndarray, np.ndarray]:
    return _sq(xi_p), _sq(xi_pp)


def big_lambda(xi_p, xi_pp) -> np.ndarray:
    """``Lambda(xi) = (1 + |xi|^2)^{1/2}``."""
    a, b = _split_sq(xi_p, xi_pp)
    return np.sqrt(1.0 + a + b)


def mu_weight(xi_p, xi_pp, gamma: float) -> np.ndarray:
    """``mu(xi) = 1 + (|xi'|^2 Lambda^{-1/(g+1)})^{(g+1)/(2g+1)}``; always in ``[1, 1 + Lambda]``."""
    a, _ = _split_sq(xi_p, xi_pp)
    lam = big_lambda(xi_p, xi_pp)
    return 1.0 + (a * lam ** (-1.0 / (gamma + 1))) ** ((gamma + 1) / (2 * gamma + 1))


def block_scales(xi_p, xi_pp, gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Squared axis lengths of ``g`` in the ``x'``, ``xi'``, ``x''`` and ``xi''`` blocks."""
    lam = big_lambda(xi_p, xi_pp)
    mu = mu_weight(xi_p, xi_pp, gamma)
    e = 1.0 / (gamma + 1)
    return (
        lam ** (-e) * mu**e,
        lam**e * mu ** ((2 * gamma + 1) * e),
        np.ones_like(lam),
        lam**2,
    )


def metric_g(xi_p, xi_pp, tangent: tuple, gamma: float, x=None) -> np.ndarray:
    """``g_{(x,xi)}(T)`` for ``T = (z', zeta', z'', zeta'')``.

    The metric depends on the base point only through ``xi``; ``x`` is
    accepted for symmetry with the phase-space notation and ignored.
    """
    z_p, zeta_p, z_pp, zeta_pp = (np.asarray(v, dtype=float) for v in tangent)
    scales = block_scales(xi_p, xi_pp, gamma)
    parts = [z_p, zeta_p, z_pp, zeta_pp]
    total = 0.0
    for part, sc in zip(parts, scales):
        total = total + _sq(part) / sc
    return total


def slow_variation_probe(gamma: float, sample_count: int = 10_000, r: float = 0.1, seed: int = 0,
                         xi_max: float = 1e4, dims: tuple[int, int] = (1, 1)) -> float:
    """Empirical ``C`` with ``C^-1 <= g_X(T) / g_Y(T) <= C`` for ``g_Y(Y - X) <= r^2``.

    ``g`` is diagonal in the four blocks, so the supremum over ``T`` is the
    largest ratio of block scales; no random tangent vectors are needed.
    ``X`` has log-uniform ``|xi|`` up to ``xi_max`` and a uniform direction;
    ``Y - X`` is drawn in the ``g_X`` ball of radius ``r`` and kept only when
    ``g_Y(Y - X) <= r^2`` as well.
    """
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    n1, n2 = dims
    rng = np.random.default_rng(seed)
    d = n1 + n2
    mag = np.exp(rng.uniform(0.0, math.log(xi_max), sample_count))
    direction = rng.standard_normal((sample_count, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    xi = mag[:, None] * direction
    sx = block_scales(xi[:, :n1], xi[:, n1:], gamma)
    # displacement in the g_X ball: only the xi components move the metric
    step = rng.standard_normal((sample_count, d))
    step /= np.linalg.norm(step, axis=1, keepdims=True)
    rad = r * rng.uniform(0.0, 1.0, sample_count) ** (1.0 / d)
    dxi = step * rad[:, None]
    dxi[:, :n1] *= np.sqrt(sx[1])[:, None]
    dxi[:, n1:] *= np.sqrt(sx[3])[:, None]
    eta = xi + dxi
    sy = block_scales(eta[:, :n1], eta[:, n1:], gamma)
    gy = np.sum(dxi[:, :n1] ** 2, axis=1) / sy[1] + np.sum(dxi[:, n1:] ** 2, axis=1) / sy[3]
    keep = gy <= r**2
    ratios = np.stack([sy[j][keep] / sx[j][keep] for j in range(4)])
    return float(np.max(np.maximum(ratios.max(axis=0), 1.0 / ratios.min(axis=0))))


def pair_ratio(xi_x: tuple, xi_y: tuple, gamma: float) -> float:
    """``sup_T g_X(T) / g_Y(T)`` for two covectors given as ``(xi', xi'')`` pairs."""
    sx = block_scales(*xi_x, gamma)
    sy = block_scales(*xi_y, gamma)
    return float(max(np.max(np.asarray(b) / np.asarray(a)) for a, b in zip(sx, sy)))
